#include "wdnet/model.hpp"

#include <charconv>
#include <random>
#include <sstream>

#include "wdnet/wavelet.hpp"

namespace wdnet {

std::vector<int> fibonacci_dilations(int count) {
    std::vector<int> d;
    for (int k = 0; k < count; ++k) {
        if (k == 0) d.push_back(1);
        else if (k == 1) d.push_back(2);
        else d.push_back(d[k - 2] + d[k - 1]);
    }
    return d;
}

bool is_fibonacci_schedule(std::span<const int> rates) {
    if (rates.empty() || rates[0] != 1) return false;
    if (rates.size() > 1 && rates[1] != 2) return false;
    for (std::size_t k = 2; k < rates.size(); ++k) {
        if (rates[k] != rates[k - 2] + rates[k - 1]) return false;
    }
    return true;
}

int WDNetConfig::in_channels() const { return band_count(level); }

void WDNetConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error("invalid model config: " + m); };
    WaveletConfig{level}.validate();
    if (width < 1) fail("width must be >= 1");
    if (num_modules < 1) fail("num_modules must be >= 1");
    if (dense_growth < 1) fail("dense_growth must be >= 1");
    if (dense_layers < 1) fail("dense_layers must be >= 1");
    if (dense_blocks < 1) fail("dense_blocks must be >= 1");
    if (!(beta >= 0.0)) fail("beta must be >= 0");
    if (static_cast<int>(dilation_rates.size()) != num_modules) {
        fail("dilation_rates has " + std::to_string(dilation_rates.size()) + " entries for " +
             std::to_string(num_modules) + " modules");
    }
    for (int d : dilation_rates) {
        if (d < 1) fail("dilation rates must be >= 1");
    }
    if (dpm_module_index < 1 || dpm_module_index > num_modules) {
        fail("dpm_module_index must lie in [1, num_modules]");
    }
    if (dpm_hidden < 1) fail("dpm_hidden must be >= 1");
    if (dpm_directions != 4 && dpm_directions != 8) fail("dpm_directions must be 4 or 8");
    if (!(init_noise >= 0.0)) fail("init_noise must be >= 0");
}

WDNetConfig WDNetConfig::tiny() {
    WDNetConfig c;
    c.width = 8;
    c.num_modules = 2;
    c.dense_growth = 8;
    c.dilation_rates = fibonacci_dilations(2);
    c.dpm_module_index = 2;
    c.dpm_hidden = 8;
    // Large enough that every parameter's gradient clears the
    // finite-difference noise floor.
    c.init_noise = 0.1;
    return c;
}

std::string WDNetConfig::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "level=" << level << '\n'
       << "in_channels=" << in_channels() << '\n'
       << "width=" << width << '\n'
       << "num_modules=" << num_modules << '\n'
       << "dense_growth=" << dense_growth << '\n'
       << "dense_layers=" << dense_layers << '\n'
       << "dense_blocks=" << dense_blocks << '\n'
       << "beta=" << beta << '\n'
       << "dilation_rates=";
    for (std::size_t i = 0; i < dilation_rates.size(); ++i) os << (i ? "," : "") << dilation_rates[i];
    os << '\n'
       << "dpm_module_index=" << dpm_module_index << '\n'
       << "dpm_hidden=" << dpm_hidden << '\n'
       << "dpm_directions=" << dpm_directions << '\n'
       << "init_noise=" << init_noise << '\n';
    return os.str();
}

namespace {

int parse_int(const std::string& key, const std::string& v) {
    int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw Error("bad integer for " + key + ": '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw Error("");
        return d;
    } catch (const std::exception&) {
        throw Error("bad number for " + key + ": '" + v + "'");
    }
}

}  // namespace

WDNetConfig WDNetConfig::from_text(std::string_view text) {
    WDNetConfig c;
    std::istringstream is{std::string(text)};
    std::string line;
    int declared_in = -1;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("malformed model config line: '" + line + "'");
        const std::string key = line.substr(0, eq), v = line.substr(eq + 1);
        if (key == "level") c.level = parse_int(key, v);
        else if (key == "in_channels") declared_in = parse_int(key, v);
        else if (key == "width") c.width = parse_int(key, v);
        else if (key == "num_modules") c.num_modules = parse_int(key, v);
        else if (key == "dense_growth") c.dense_growth = parse_int(key, v);
        else if (key == "dense_layers") c.dense_layers = parse_int(key, v);
        else if (key == "dense_blocks") c.dense_blocks = parse_int(key, v);
        else if (key == "beta") c.beta = parse_double(key, v);
        else if (key == "dilation_rates") {
            c.dilation_rates.clear();
            std::istringstream ls(v);
            std::string tok;
            while (std::getline(ls, tok, ',')) c.dilation_rates.push_back(parse_int(key, tok));
        } else if (key == "dpm_module_index") c.dpm_module_index = parse_int(key, v);
        else if (key == "dpm_hidden") c.dpm_hidden = parse_int(key, v);
        else if (key == "dpm_directions") c.dpm_directions = parse_int(key, v);
        else if (key == "init_noise") c.init_noise = parse_double(key, v);
        else throw Error("unknown model config key '" + key + "'");
    }
    c.validate();
    if (declared_in >= 0 && declared_in != c.in_channels()) {
        throw Error("in_channels " + std::to_string(declared_in) + " does not match level " +
                    std::to_string(c.level));
    }
    return c;
}

template <typename T>
Conv<T> WDNetT<T>::make_conv(const std::string& name, int in, int out, int k, int dilation) {
    Conv<T> c;
    c.weight = TensorT<T>::zeros({out, in, k, k}, true);
    c.bias = TensorT<T>::zeros({out}, true);
    c.dilation = dilation;
    c.padding = dilation * (k - 1) / 2;
    params_.emplace_back(name + ".weight", c.weight);
    params_.emplace_back(name + ".bias", c.bias);
    return c;
}

template <typename T>
WDNetT<T>::WDNetT(WDNetConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.validate();
    const WDNetConfig& c = config_;
    head_ = make_conv("head", c.in_channels(), c.width, 3, 1);
    for (int k = 1; k <= c.num_modules; ++k) {
        const std::string m = "m" + std::to_string(k);
        Module mod;
        for (int b = 0; b < c.dense_blocks; ++b) {
            const std::string bn = m + ".dense.b" + std::to_string(b);
            DenseBlock block;
            for (int l = 0; l < c.dense_layers; ++l) {
                block.layers.push_back(make_conv(bn + ".l" + std::to_string(l),
                                                 c.width + l * c.dense_growth, c.dense_growth, 3, 1));
            }
            block.fuse = make_conv(bn + ".fuse", c.width + c.dense_layers * c.dense_growth, c.width, 1, 1);
            mod.blocks.push_back(std::move(block));
        }
        mod.dilated = make_conv(m + ".dil.dilated", c.width, c.width, 3, c.dilation_rates[k - 1]);
        mod.conv = make_conv(m + ".dil.conv", c.width, c.width, 3, 1);
        if (k == c.dpm_module_index) {
            mod.has_dpm = true;
            const auto dirs = compass(c.dpm_directions);
            mod.dpm.in = make_conv(m + ".dpm.in", c.width, c.dpm_hidden, 1, 1);
            for (int s = 0; s < 2; ++s) {
                const std::string sn = m + ".dpm.s" + std::to_string(s + 1);
                DpmStage& st = mod.dpm.stages[s];
                st.maps = make_conv(sn + ".maps", c.dpm_hidden, c.dpm_directions, 1, 1);
                for (Direction d : dirs) {
                    auto w = TensorT<T>::full({c.dpm_hidden}, T(1), true);
                    params_.emplace_back(sn + ".rec." + std::string(name_of(d)), w);
                    st.recurrent.push_back(w);
                }
                st.fuse = make_conv(sn + ".fuse", c.dpm_directions * c.dpm_hidden, c.dpm_hidden, 1, 1);
            }
            mod.dpm.out = make_conv(m + ".dpm.out", c.dpm_hidden, 1, 1, 1);
        }
        modules_.push_back(std::move(mod));
    }
    tail_ = make_conv("tail", c.width, c.in_channels(), 3, 1);

    // Identity-like ("eye") start: square kernels get a unit centre tap on the
    // channel diagonal, every kernel entry gets U(-noise, noise); biases zero.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(-c.init_noise, c.init_noise);
    for (auto& [name, t] : params_) {
        if (t.rank() != 4) continue;
        auto w = t.mutable_data();
        if (c.init_noise > 0) {
            for (auto& v : w) v = static_cast<T>(noise(rng));
        }
        const int out = t.dim(0), in = t.dim(1), kh = t.dim(2), kw = t.dim(3);
        if (in == out) {
            for (int o = 0; o < out; ++o) {
                w[((static_cast<std::size_t>(o) * in + o) * kh + kh / 2) * kw + kw / 2] = T(1);
            }
        }
    }
}

template <typename T>
const typename WDNetT<T>::Module& WDNetT<T>::module(int k) const {
    if (k < 1 || k > config_.num_modules) throw Error("module index " + std::to_string(k) + " out of range");
    return modules_[k - 1];
}

template <typename T>
TensorT<T> WDNetT<T>::dense_block(const DenseBlock& block, const TensorT<T>& x) const {
    std::vector<TensorT<T>> feats{x};
    for (const auto& layer : block.layers) {
        const TensorT<T> in = feats.size() == 1 ? x : concat_channels(feats);
        feats.push_back(relu(layer(in)));
    }
    return block.fuse(concat_channels(feats));
}

template <typename T>
TensorT<T> WDNetT<T>::dense_branch(const TensorT<T>& f, int k, const TensorT<T>& attention) const {
    const Module& mod = module(k);
    TensorT<T> r = f;
    for (const auto& block : mod.blocks) r = dense_block(block, r);
    if (attention.defined()) r = mul(r, attention);
    return add(f, scale(r, static_cast<T>(config_.beta)));
}

template <typename T>
TensorT<T> WDNetT<T>::dilation_branch(const TensorT<T>& f, int k) const {
    const Module& mod = module(k);
    return mod.conv(relu(mod.dilated(f)));
}

template <typename T>
TensorT<T> WDNetT<T>::dpm_stage(const DpmStage& stage, const TensorT<T>& x) const {
    const auto dirs = compass(config_.dpm_directions);
    const TensorT<T> maps = sigmoid(stage.maps(x));
    std::vector<TensorT<T>> gated;
    gated.reserve(dirs.size());
    for (std::size_t d = 0; d < dirs.size(); ++d) {
        const TensorT<T> swept = directional_sweep(x, step_of(dirs[d]), stage.recurrent[d]);
        gated.push_back(mul(swept, slice_channels(maps, static_cast<int>(d), 1)));
    }
    return relu(stage.fuse(concat_channels(gated)));
}

template <typename T>
DpmTrace<T> WDNetT<T>::dpm_trace(const TensorT<T>& f) const {
    const Module& mod = module(config_.dpm_module_index);
    DpmTrace<T> t;
    t.hidden = relu(mod.dpm.in(f));
    t.stage1 = dpm_stage(mod.dpm.stages[0], t.hidden);
    t.stage2 = dpm_stage(mod.dpm.stages[1], t.stage1);
    t.attention = sigmoid(mod.dpm.out(t.stage2));
    return t;
}

template <typename T>
TensorT<T> WDNetT<T>::dual_branch_module(const TensorT<T>& f, int k, TensorT<T>* attention) const {
    const Module& mod = module(k);
    TensorT<T> att;
    if (mod.has_dpm) {
        att = dpm_forward(f);
        if (attention) *attention = att;
    }
    return add(dense_branch(f, k, att), dilation_branch(f, k));
}

template <typename T>
typename WDNetT<T>::Output WDNetT<T>::forward(const TensorT<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != config_.in_channels()) {
        throw Error("model expects B×" + std::to_string(config_.in_channels()) +
                    "×h×w subbands, got " + (x.defined() ? to_string(x.shape()) : "(undefined)"));
    }
    Output out;
    TensorT<T> f = head_(x);
    for (int k = 1; k <= config_.num_modules; ++k) f = dual_branch_module(f, k, &out.attention);
    out.bands = add(x, tail_(f));
    return out;
}

template <typename T>
TensorT<T>& WDNetT<T>::parameter(std::string_view name) {
    for (auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw Error("no parameter named '" + std::string(name) + "'");
}

template <typename T>
std::size_t WDNetT<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

template <typename T>
void WDNetT<T>::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

template class WDNetT<float>;
template class WDNetT<double>;

}  // namespace wdnet
