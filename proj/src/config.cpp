#include "wdnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace wdnet {

namespace {

std::string fmt(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

template <typename I>
I parse_integer(const std::string& key, const std::string& v) {
    I out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw Error("bad integer for " + key + ": '" + v + "'");
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw Error("bad number for " + key + ": '" + v + "'");
    return out;
}

struct Binding {
    std::string key;
    std::string doc;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

Binding bind_int(std::string key, std::string doc, int& ref) {
    const std::string k = key;
    return {std::move(key), std::move(doc), [&ref, k](const std::string& v) { ref = parse_integer<int>(k, v); },
            [&ref] { return std::to_string(ref); }};
}

Binding bind_long(std::string key, std::string doc, long& ref) {
    const std::string k = key;
    return {std::move(key), std::move(doc), [&ref, k](const std::string& v) { ref = parse_integer<long>(k, v); },
            [&ref] { return std::to_string(ref); }};
}

Binding bind_u64(std::string key, std::string doc, std::uint64_t& ref) {
    const std::string k = key;
    return {std::move(key), std::move(doc),
            [&ref, k](const std::string& v) { ref = parse_integer<std::uint64_t>(k, v); },
            [&ref] { return std::to_string(ref); }};
}

Binding bind_real(std::string key, std::string doc, double& ref) {
    const std::string k = key;
    return {std::move(key), std::move(doc), [&ref, k](const std::string& v) { ref = parse_real(k, v); },
            [&ref] { return fmt(ref); }};
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::istringstream is(v);
    for (std::string tok; std::getline(is, tok, ',');) {
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

std::vector<Binding> bindings(RunConfig& c) {
    auto& m = c.model;
    auto& t = c.train;
    auto& w = c.train.weights;
    auto& s = c.synth;
    auto& l = c.load;
    std::vector<Binding> b;
    b.push_back(bind_int("model.level", "wavelet packet depth (1-3); 3*4^level subbands", m.level));
    b.push_back(bind_int("model.width", "feature channels inside the network", m.width));
    b.push_back(bind_int("model.num_modules", "number of dual-branch modules", m.num_modules));
    b.push_back(bind_int("model.dense_growth", "channels added per dense layer", m.dense_growth));
    b.push_back(bind_int("model.dense_layers", "conv layers per dense block", m.dense_layers));
    b.push_back(bind_int("model.dense_blocks", "dense blocks per dense branch", m.dense_blocks));
    b.push_back(bind_real("model.beta", "residual scale of the dense branch", m.beta));
    b.push_back({"model.dilation_rates", "comma-separated dilation per module",
                 [&m](const std::string& v) {
                     m.dilation_rates.clear();
                     for (const auto& tok : split_list(v)) m.dilation_rates.push_back(parse_integer<int>("model.dilation_rates", tok));
                 },
                 [&m] {
                     std::string out;
                     for (std::size_t i = 0; i < m.dilation_rates.size(); ++i) {
                         out += (i ? "," : "") + std::to_string(m.dilation_rates[i]);
                     }
                     return out;
                 }});
    b.push_back(bind_int("model.dpm_module_index", "1-based module carrying the attention module", m.dpm_module_index));
    b.push_back(bind_int("model.dpm_hidden", "channels inside the attention module", m.dpm_hidden));
    b.push_back(bind_int("model.dpm_directions", "recurrent sweep directions (8 or 4)", m.dpm_directions));
    b.push_back(bind_real("model.init_noise", "half-width of uniform noise around identity taps", m.init_noise));

    b.push_back(bind_real("loss.lambda_attention", "weight of the attention-map loss", w.lambda_attention));
    b.push_back(bind_real("loss.lambda_l1", "weight of the image-space L1 loss", w.lambda_l1));
    b.push_back(bind_real("loss.lambda_perceptual", "weight of the feature-space loss", w.lambda_perceptual));
    b.push_back(bind_real("loss.lambda_wavelet", "weight of the wavelet MSE + detail loss", w.lambda_wavelet));
    b.push_back(bind_real("loss.gamma_low", "wavelet MSE weight of the three lowest bands", w.gamma_low));
    b.push_back(bind_real("loss.gamma_high", "wavelet MSE weight of all other bands", w.gamma_high));
    b.push_back(bind_real("loss.alpha", "detail loss factor (> 1)", w.alpha));
    b.push_back(bind_int("loss.mask_threshold", "moire mask threshold in 8-bit units (generation, loading, loss)", w.mask_threshold));

    b.push_back(bind_real("train.learning_rate", "Adam step size at epoch 0", t.learning_rate));
    b.push_back(bind_real("train.lr_decay", "learning-rate factor applied every lr_decay_epochs", t.lr_decay));
    b.push_back(bind_int("train.lr_decay_epochs", "epochs between decays; 0 keeps the rate fixed", t.lr_decay_epochs));
    b.push_back(bind_int("train.batch_size", "pairs per optimizer step", t.batch_size));
    b.push_back(bind_int("train.epochs", "passes over the training set", t.epochs));
    b.push_back(bind_long("train.steps", "cap on optimizer steps; -1 for none", t.steps));
    b.push_back(bind_real("train.adam_beta1", "Adam first-moment decay", t.adam_beta1));
    b.push_back(bind_real("train.adam_beta2", "Adam second-moment decay", t.adam_beta2));
    b.push_back(bind_real("train.adam_epsilon", "Adam denominator offset", t.adam_epsilon));
    b.push_back(bind_u64("train.seed", "seed for initialisation and shuffling", t.seed));
    b.push_back({"train.perceptual_weights", "array file with feature-extractor weights; empty = fixed random stack",
                 [&t](const std::string& v) { t.perceptual_weights = v; }, [&t] { return t.perceptual_weights; }});
    b.push_back(bind_u64("train.perceptual_seed", "seed of the fixed feature extractor", t.perceptual_seed));
    b.push_back(bind_int("train.checkpoint_every", "steps between checkpoints; 0 writes only the last", t.checkpoint_every));

    b.push_back(bind_int("synth.width", "generated image width", s.width));
    b.push_back(bind_int("synth.height", "generated image height", s.height));
    b.push_back(bind_real("synth.weight_linear", "mix weight of straight gratings", s.weight_linear));
    b.push_back(bind_real("synth.weight_radial", "mix weight of concentric gratings", s.weight_radial));
    b.push_back(bind_real("synth.weight_curved", "mix weight of bent gratings", s.weight_curved));
    b.push_back(bind_real("synth.freq_min", "lowest carrier frequency, cycles per image", s.freq_min));
    b.push_back(bind_real("synth.freq_max", "highest carrier frequency, cycles per image", s.freq_max));
    b.push_back(bind_real("synth.amp_min", "lowest peak amplitude, 8-bit units", s.amp_min));
    b.push_back(bind_real("synth.amp_max", "highest peak amplitude, 8-bit units (<= 128)", s.amp_max));
    b.push_back(bind_real("synth.grating_offset", "grating DC offset; 0 = bare cosine product", s.grating_offset));
    b.push_back(bind_real("synth.phase_jitter", "per-channel phase offset range, radians", s.phase_jitter));
    b.push_back({"synth.bases", "comma-separated base images: gradient,checkerboard,stripes,blobs",
                 [&s](const std::string& v) {
                     s.bases.clear();
                     for (const auto& tok : split_list(v)) s.bases.push_back(parse_base_kind(tok));
                 },
                 [&s] {
                     std::string out;
                     for (std::size_t i = 0; i < s.bases.size(); ++i) out += (i ? "," : "") + std::string(name_of(s.bases[i]));
                     return out;
                 }});

    b.push_back({"data.dir", "dataset directory (moire/ and clean/ inside)",
                 [&c](const std::string& v) { c.data_dir = v; }, [&c] { return c.data_dir; }});
    b.push_back({"data.fit", "size policy for loaded pairs: none, crop or resize",
                 [&l](const std::string& v) {
                     if (v == "none") l.fit = LoadOptions::Fit::none;
                     else if (v == "crop") l.fit = LoadOptions::Fit::center_crop;
                     else if (v == "resize") l.fit = LoadOptions::Fit::resize;
                     else throw Error("bad value for data.fit: '" + v + "'");
                 },
                 [&l] {
                     switch (l.fit) {
                         case LoadOptions::Fit::none: return std::string("none");
                         case LoadOptions::Fit::center_crop: return std::string("crop");
                         case LoadOptions::Fit::resize: return std::string("resize");
                     }
                     return std::string();
                 }});
    b.push_back(bind_int("data.width", "target width for crop/resize", l.width));
    b.push_back(bind_int("data.height", "target height for crop/resize", l.height));
    return b;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto z = s.find_last_not_of(" \t\r");
    return s.substr(a, z - a + 1);
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    train.validate();
    synth.validate();
    if (load.width < 1 || load.height < 1) throw Error("data.width and data.height must be positive");
}

std::vector<ConfigKey> run_config_keys() {
    RunConfig defaults;
    std::vector<ConfigKey> out;
    for (const auto& b : bindings(defaults)) out.push_back({b.key, b.get(), b.doc});
    return out;
}

RunConfig parse_run_config(std::string_view text) {
    RunConfig c;
    auto b = bindings(c);
    std::istringstream is{std::string(text)};
    std::string line;
    for (int lineno = 1; std::getline(is, line); ++lineno) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        auto it = std::find_if(b.begin(), b.end(), [&](const Binding& x) { return x.key == key; });
        if (it == b.end()) throw Error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        try {
            it->set(value);
        } catch (const Error& e) {
            throw Error("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    c.synth.mask_threshold = c.train.weights.mask_threshold;
    c.load.mask_threshold = c.train.weights.mask_threshold;
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse_run_config(os.str());
}

std::string to_text(const RunConfig& cfg, bool with_docs) {
    RunConfig copy = cfg;
    std::string out;
    for (const auto& b : bindings(copy)) {
        if (with_docs) out += "# " + b.doc + "\n";
        out += b.key + "=" + b.get() + "\n";
    }
    return out;
}

}  // namespace wdnet
