#include "wdnet/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace wdnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void TrainConfig::validate() const {
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw Error("learning_rate must be >= 0");
    if (!(lr_decay > 0 && lr_decay <= 1)) throw Error("lr_decay must lie in (0, 1]");
    if (lr_decay_epochs < 0) throw Error("lr_decay_epochs must be >= 0");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (epochs < 0) throw Error("epochs must be >= 0");
    if (steps < -1) throw Error("steps must be >= 0, or -1 for no cap");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
        throw Error("adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0)) throw Error("adam epsilon must be > 0");
    if (checkpoint_every < 0) throw Error("checkpoint_every must be >= 0");
    weights.validate();
}

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw Error("lr_at: negative epoch");
    if (cfg.lr_decay_epochs == 0) return cfg.learning_rate;
    return cfg.learning_rate * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_epochs);
}

void adam_update(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, double lr,
                 const TrainConfig& cfg) {
    if (state.m.empty()) {
        for (const auto& [name, p] : params) {
            state.m.emplace_back(p.numel(), 0.0f);
            state.v.emplace_back(p.numel(), 0.0f);
        }
    }
    if (state.m.size() != params.size()) throw Error("adam: state does not match the parameter list");
    ++state.t;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].second;
        const auto g = p.grad();
        auto w = p.mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (g.size() != w.size()) continue;  // parameter not reached by the loss
        for (std::size_t q = 0; q < w.size(); ++q) {
            const double gq = g[q];
            const double mq = b1 * m[q] + (1 - b1) * gq;
            const double vq = b2 * v[q] + (1 - b2) * gq * gq;
            m[q] = static_cast<float>(mq);
            v[q] = static_cast<float>(vq);
            w[q] = static_cast<float>(w[q] - lr * (mq / c1) / (std::sqrt(vq / c2) + cfg.adam_epsilon));
        }
    }
}

Batch make_batch(const std::vector<const MoirePair*>& pairs, int level) {
    if (pairs.empty()) throw Error("empty batch");
    const int w = pairs.front()->clean.width, h = pairs.front()->clean.height;
    const int div = 1 << level;
    if (w % div || h % div) {
        throw Error("image " + std::to_string(w) + "x" + std::to_string(h) + " is not divisible by " +
                    std::to_string(div) + "; crop to " + std::to_string(w / div * div) + "x" +
                    std::to_string(h / div * div));
    }
    const int b = static_cast<int>(pairs.size());
    std::vector<float> x, y;
    std::vector<const MoireMask*> masks;
    for (const auto* p : pairs) {
        if (p->clean.width != w || p->clean.height != h || !p->contaminated.same_size(p->clean) ||
            p->clean.channels != 3) {
            throw Error("batch images must share one RGB size");
        }
        const Tensor xt = to_tensor(p->contaminated), yt = to_tensor(p->clean);
        const auto xd = xt.data(), yd = yt.data();
        x.insert(x.end(), xd.begin(), xd.end());
        y.insert(y.end(), yd.begin(), yd.end());
        masks.push_back(&p->mask);
    }
    return {Tensor::from_data({b, 3, h, w}, std::move(x)), Tensor::from_data({b, 3, h, w}, std::move(y)),
            mask_tensor(masks)};
}

LossParts<float> compute_loss_parts(const WDNet& model, const Batch& batch, const LossWeights& weights,
                                    const FeatureExtractor<float>& extractor) {
    const WaveletConfig wc{model.config().level};
    const SubbandStack xs = fwt2(batch.contaminated, wc);
    const SubbandStack ys = fwt2(batch.clean, wc);
    const auto out = model.forward(xs.bands);
    const SubbandStack pred{xs.level, out.bands, xs.layout};
    LossParts<float> parts;
    if (out.attention.defined()) parts.attention = attention_loss(out.attention, batch.mask);
    const Tensor restored = ifwt2(pred);
    parts.l1 = l1_loss(restored, batch.clean);
    if (weights.lambda_perceptual > 0) parts.perceptual = perceptual_loss(restored, batch.clean, extractor);
    parts.wavelet_mse = wavelet_mse(pred, ys, weights);
    parts.detail = detail_loss(pred, ys, weights.alpha);
    return parts;
}

namespace {

void check_finite(const LossParts<float>& parts, const Tensor& total, std::uint64_t step) {
    const std::pair<const char*, const Tensor*> terms[] = {
        {"attention", &parts.attention}, {"l1", &parts.l1},         {"perceptual", &parts.perceptual},
        {"wavelet_mse", &parts.wavelet_mse}, {"detail", &parts.detail}, {"total", &total}};
    for (const auto& [name, t] : terms) {
        if (t->defined() && !std::isfinite(t->item())) {
            throw Error("non-finite loss in component '" + std::string(name) + "' at step " + std::to_string(step));
        }
    }
}

std::string rng_text(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

}  // namespace

Trainer::Trainer(WDNet& model, TrainConfig cfg) : model_(model), cfg_(std::move(cfg)), rng_(cfg_.seed) {
    cfg_.validate();
    state_.rng = rng_text(rng_);
    if (cfg_.weights.lambda_perceptual > 0) {
        extractor_ = cfg_.perceptual_weights.empty() ? random_conv_extractor<float>(cfg_.perceptual_seed)
                                                     : load_feature_extractor(cfg_.perceptual_weights);
    }
}

LossBreakdown Trainer::train_step(const std::vector<const MoirePair*>& pairs) {
    const Batch batch = make_batch(pairs, model_.config().level);
    const auto parts = compute_loss_parts(model_, batch, cfg_.weights, extractor_);
    const Tensor total = total_loss(parts, cfg_.weights);
    check_finite(parts, total, state_.step);
    model_.zero_grad();
    backward(total);
    adam_update(model_.parameters(), state_.adam, current_lr(), cfg_);
    ++state_.step;
    return breakdown(parts, total);
}

LossBreakdown Trainer::evaluate_loss(const std::vector<const MoirePair*>& pairs) const {
    const Batch batch = make_batch(pairs, model_.config().level);
    const auto parts = compute_loss_parts(model_, batch, cfg_.weights, extractor_);
    const Tensor total = total_loss(parts, cfg_.weights);
    check_finite(parts, total, state_.step);
    return breakdown(parts, total);
}

void Trainer::fit(const std::vector<MoirePair>& data, const StepCallback& on_step) {
    if (data.empty()) throw Error("training set is empty");
    if (!state_.rng.empty()) {
        std::istringstream is(state_.rng);
        is >> rng_;
    }
    const auto capped = [&] { return cfg_.steps >= 0 && state_.step >= static_cast<std::uint64_t>(cfg_.steps); };
    const std::size_t batch_size = static_cast<std::size_t>(cfg_.batch_size);
    const std::uint64_t per_epoch = (data.size() + batch_size - 1) / batch_size;
    std::vector<std::size_t> order(data.size());
    while (state_.epoch < static_cast<std::uint64_t>(cfg_.epochs) && !capped()) {
        // state_.rng holds the engine as it was before this epoch's shuffle,
        // so a run resumed mid-epoch sees the same order and skips the
        // batches already taken.
        state_.rng = rng_text(rng_);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng_);
        const std::uint64_t start = state_.epoch * per_epoch;
        const std::uint64_t done = state_.step > start && state_.step - start < per_epoch ? state_.step - start : 0;
        bool complete = true;
        for (std::size_t at = done * batch_size; at < order.size(); at += batch_size) {
            if (capped()) {
                complete = false;
                break;
            }
            std::vector<const MoirePair*> batch;
            for (std::size_t i = at; i < std::min(order.size(), at + batch_size); ++i) {
                batch.push_back(&data[order[i]]);
            }
            const auto loss = train_step(batch);
            if (on_step) on_step(state_.step, state_.epoch, loss);
        }
        if (!complete) break;
        ++state_.epoch;
        state_.rng = rng_text(rng_);
    }
}

// ---- checkpoints -----------------------------------------------------------

namespace {

enum class DType : std::uint8_t { f32 = 1, u8 = 2, u64 = 3 };

struct Entry {
    std::string name;
    DType dtype;
    std::vector<std::uint32_t> dims;
    std::string bytes;
};

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

Entry text_entry(std::string name, const std::string& text) {
    return {std::move(name), DType::u8, {static_cast<std::uint32_t>(text.size())}, text};
}

Entry u64_entry(std::string name, std::uint64_t v) {
    Entry e{std::move(name), DType::u64, {1}, {}};
    put(e.bytes, v);
    return e;
}

Entry f32_entry(std::string name, const Shape& shape, const std::vector<float>& values) {
    Entry e{std::move(name), DType::f32, {}, {}};
    for (int d : shape) e.dims.push_back(static_cast<std::uint32_t>(d));
    e.bytes.assign(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
    return e;
}

std::size_t dtype_size(DType d) {
    switch (d) {
        case DType::f32: return 4;
        case DType::u8: return 1;
        case DType::u64: return 8;
    }
    return 0;
}

class Reader {
   public:
    explicit Reader(const std::string& s) : s_(s) {}
    template <typename T>
    T get() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const char* take(std::size_t n) {
        if (n > s_.size() - pos_) throw Error("checkpoint is truncated");
        const char* p = s_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == s_.size(); }

   private:
    const std::string& s_;
    std::size_t pos_ = 0;
};

std::string encode_entries(const std::vector<Entry>& entries) {
    std::string out = "WDNT";
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
        out += e.name;
        put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
        put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dims.size()));
        for (auto d : e.dims) put<std::uint32_t>(out, d);
        out += e.bytes;
    }
    return out;
}

std::vector<Entry> decode_entries(const std::string& bytes) {
    Reader r(bytes);
    if (bytes.size() < 4 || std::memcmp(r.take(4), "WDNT", 4) != 0) throw Error("not a WDNet checkpoint (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw Error("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
    }
    const auto count = r.get<std::uint32_t>();
    std::vector<Entry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        const auto len = r.get<std::uint16_t>();
        e.name.assign(r.take(len), len);
        e.dtype = static_cast<DType>(r.get<std::uint8_t>());
        if (dtype_size(e.dtype) == 0) throw Error("checkpoint entry " + e.name + " has an unknown dtype");
        const auto rank = r.get<std::uint8_t>();
        std::size_t n = 1;
        for (int d = 0; d < rank; ++d) {
            e.dims.push_back(r.get<std::uint32_t>());
            n *= e.dims.back();
        }
        const std::size_t size = n * dtype_size(e.dtype);
        e.bytes.assign(r.take(size), size);
        entries.push_back(std::move(e));
    }
    if (!r.done()) throw Error("checkpoint has trailing bytes");
    return entries;
}

std::vector<float> floats(const Entry& e) {
    std::vector<float> v(e.bytes.size() / 4);
    std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
    return v;
}

std::string read_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(std::string("cannot open ") + what + " " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& bytes, const char* what) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(std::string("cannot write ") + what + " " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(std::string("failed writing ") + what + " " + path.string());
}

const std::string kParamPrefix = "param/";
const std::string kMomentPrefix[2] = {"adam.m/", "adam.v/"};

}  // namespace

Checkpoint Checkpoint::capture(const WDNet& model, const TrainState& state) {
    Checkpoint c;
    c.config = model.config();
    c.band_layout = kBandLayout;
    for (const auto& [name, p] : model.parameters()) {
        c.parameters.push_back({name, p.shape(), std::vector<float>(p.data().begin(), p.data().end())});
    }
    c.state = state;
    return c;
}

void Checkpoint::restore_into(WDNet& model) const {
    if (!(model.config() == config)) throw Error("checkpoint config does not match the model");
    auto& params = model.parameters();
    if (params.size() != parameters.size()) throw Error("checkpoint parameter count does not match the model");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].first != parameters[i].name || params[i].second.shape() != parameters[i].shape) {
            throw Error("checkpoint parameter " + parameters[i].name + " does not match the model");
        }
        auto dst = params[i].second.mutable_data();
        std::copy(parameters[i].values.begin(), parameters[i].values.end(), dst.begin());
    }
}

WDNet Checkpoint::build_model() const {
    WDNet model(config, 0);
    restore_into(model);
    return model;
}

std::string encode_checkpoint(const Checkpoint& c) {
    std::vector<Entry> entries;
    entries.push_back(text_entry("config", c.config.to_text()));
    entries.push_back(text_entry("band_layout", c.band_layout));
    entries.push_back(u64_entry("state.epoch", c.state.epoch));
    entries.push_back(u64_entry("state.step", c.state.step));
    entries.push_back(text_entry("state.rng", c.state.rng));
    entries.push_back(u64_entry("adam.t", c.state.adam.t));
    for (const auto& p : c.parameters) entries.push_back(f32_entry(kParamPrefix + p.name, p.shape, p.values));
    if (!c.state.adam.m.empty()) {
        if (c.state.adam.m.size() != c.parameters.size() || c.state.adam.v.size() != c.parameters.size()) {
            throw Error("optimizer state does not match the parameter list");
        }
        for (int k = 0; k < 2; ++k) {
            const auto& moments = k == 0 ? c.state.adam.m : c.state.adam.v;
            for (std::size_t i = 0; i < c.parameters.size(); ++i) {
                entries.push_back(f32_entry(kMomentPrefix[k] + c.parameters[i].name, c.parameters[i].shape, moments[i]));
            }
        }
    }

    return encode_entries(entries);
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    const std::vector<Entry> entries = decode_entries(bytes);

    auto find = [&](const std::string& name, DType type) -> const Entry& {
        for (const auto& e : entries) {
            if (e.name == name) {
                if (e.dtype != type) throw Error("checkpoint entry " + name + " has the wrong dtype");
                return e;
            }
        }
        throw Error("checkpoint is missing entry " + name);
    };
    auto u64 = [&](const std::string& name) {
        const Entry& e = find(name, DType::u64);
        if (e.bytes.size() != 8) throw Error("checkpoint entry " + name + " is malformed");
        std::uint64_t v;
        std::memcpy(&v, e.bytes.data(), 8);
        return v;
    };

    Checkpoint c;
    c.config = WDNetConfig::from_text(find("config", DType::u8).bytes);
    c.band_layout = find("band_layout", DType::u8).bytes;
    if (c.band_layout != kBandLayout) {
        throw Error("checkpoint band layout '" + c.band_layout + "' differs from '" + std::string(kBandLayout) + "'");
    }
    c.state.epoch = u64("state.epoch");
    c.state.step = u64("state.step");
    c.state.rng = find("state.rng", DType::u8).bytes;
    c.state.adam.t = u64("adam.t");
    for (const auto& e : entries) {
        if (e.name.rfind(kParamPrefix, 0) != 0) continue;
        if (e.dtype != DType::f32) throw Error("checkpoint entry " + e.name + " has the wrong dtype");
        NamedArray a{e.name.substr(kParamPrefix.size()), {}, floats(e)};
        for (auto d : e.dims) a.shape.push_back(static_cast<int>(d));
        c.parameters.push_back(std::move(a));
    }
    const bool has_moments = std::any_of(entries.begin(), entries.end(),
                                         [](const Entry& e) { return e.name.rfind(kMomentPrefix[0], 0) == 0; });
    if (has_moments) {
        for (const auto& p : c.parameters) {
            c.state.adam.m.push_back(floats(find(kMomentPrefix[0] + p.name, DType::f32)));
            c.state.adam.v.push_back(floats(find(kMomentPrefix[1] + p.name, DType::f32)));
            if (c.state.adam.m.back().size() != p.values.size() || c.state.adam.v.back().size() != p.values.size()) {
                throw Error("optimizer moments for " + p.name + " have the wrong size");
            }
        }
    }
    // The stored parameters must describe exactly the configured architecture.
    const WDNet reference(c.config, 0);
    const auto& expect = reference.parameters();
    if (expect.size() != c.parameters.size()) throw Error("checkpoint parameter count does not match its config");
    for (std::size_t i = 0; i < expect.size(); ++i) {
        if (expect[i].first != c.parameters[i].name || expect[i].second.shape() != c.parameters[i].shape) {
            throw Error("checkpoint parameter " + c.parameters[i].name + " does not match its config");
        }
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file(path, encode_checkpoint(ckpt), "checkpoint");
}

void save_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
    std::vector<Entry> entries;
    for (const auto& a : arrays) {
        if (wdnet::numel(a.shape) != a.values.size()) throw Error("array " + a.name + " does not match its shape");
        entries.push_back(f32_entry(a.name, a.shape, a.values));
    }
    write_file(path, encode_entries(entries), "array file");
}

std::vector<NamedArray> load_arrays(const std::filesystem::path& path) {
    std::vector<NamedArray> out;
    for (const auto& e : decode_entries(read_file(path, "array file"))) {
        if (e.dtype != DType::f32) throw Error("array file entry " + e.name + " is not float32");
        NamedArray a{e.name, {}, floats(e)};
        for (auto d : e.dims) a.shape.push_back(static_cast<int>(d));
        out.push_back(std::move(a));
    }
    return out;
}

FeatureExtractor<float> load_feature_extractor(const std::filesystem::path& path) {
    struct Layer {
        Tensor weight, bias;
        int pad;
    };
    const auto arrays = load_arrays(path);
    if (arrays.empty() || arrays.size() % 2) throw Error("feature extractor needs weight/bias pairs");
    std::vector<Layer> layers;
    int channels = 3;
    for (std::size_t i = 0; i < arrays.size(); i += 2) {
        const auto& w = arrays[i];
        const auto& b = arrays[i + 1];
        if (w.shape.size() != 4 || w.shape[2] != w.shape[3] || w.shape[2] % 2 == 0 || w.shape[1] != channels ||
            b.shape != Shape{w.shape[0]}) {
            throw Error("feature extractor layer " + w.name + " has an unusable shape");
        }
        layers.push_back({Tensor::from_data(w.shape, w.values), Tensor::from_data(b.shape, b.values), w.shape[2] / 2});
        channels = w.shape[0];
    }
    return [layers](const Tensor& x) {
        Tensor h = x;
        for (const auto& l : layers) h = relu(conv2d(h, l.weight, l.bias, {1, 1, l.pad}));
        return h;
    };
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const WDNetConfig* expected) {
    const std::string bytes = read_file(path, "checkpoint");
    Checkpoint c = decode_checkpoint(bytes);
    if (expected && !(*expected == c.config)) {
        std::string diff;
        std::istringstream a(c.config.to_text()), b(expected->to_text());
        for (std::string la, lb; std::getline(a, la) && std::getline(b, lb);) {
            if (la != lb) diff += (diff.empty() ? "" : ", ") + la + " (expected " + lb.substr(lb.find('=') + 1) + ")";
        }
        throw Error("checkpoint config mismatch: " + diff);
    }
    return c;
}

// ---- inference and evaluation ---------------------------------------------

Image8 infer(const WDNet& model, const Image8& image) {
    if (image.channels != 3) throw Error("infer: expected an RGB image");
    const int div = 1 << model.config().level;
    if (image.width % div || image.height % div) {
        throw Error("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                    " is not divisible by " + std::to_string(div) + "; crop to " +
                    std::to_string(image.width / div * div) + "x" + std::to_string(image.height / div * div));
    }
    const SubbandStack xs = fwt2(to_tensor(image), WaveletConfig{model.config().level});
    const auto out = model.forward(xs.bands);
    return from_tensor(ifwt2(SubbandStack{xs.level, out.bands, xs.layout}));
}

EvalReport evaluate(const WDNet& model, const std::vector<MoirePair>& pairs) {
    if (pairs.empty()) throw Error("evaluate: no pairs");
    EvalReport report;
    std::vector<QualityScore> restored, baseline;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        EvalRow row;
        row.name = p.name.empty() ? std::to_string(i) : p.name;
        row.restored = quality(infer(model, p.contaminated), p.clean);
        row.baseline = quality(p.contaminated, p.clean);
        restored.push_back(row.restored);
        baseline.push_back(row.baseline);
        report.rows.push_back(std::move(row));
    }
    report.mean_restored = mean_score(restored);
    report.mean_baseline = mean_score(baseline);
    return report;
}

std::string EvalReport::table() const {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-24s %10s %8s %10s %8s\n", "filename", "PSNR", "SSIM", "base_PSNR", "base_SSIM");
    out += buf;
    auto line = [&](const std::string& name, const QualityScore& r, const QualityScore& b) {
        std::snprintf(buf, sizeof buf, "%-24s %10s %8.4f %10s %8.4f\n", name.c_str(), format_psnr(r.psnr_db).c_str(),
                      r.ssim, format_psnr(b.psnr_db).c_str(), b.ssim);
        out += buf;
    };
    for (const auto& r : rows) line(r.name, r.restored, r.baseline);
    line("mean", mean_restored, mean_baseline);
    return out;
}

}  // namespace wdnet
