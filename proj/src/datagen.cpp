#include "wdnet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

namespace wdnet {

namespace fs = std::filesystem;

std::string_view name_of(PatternKind k) {
    switch (k) {
        case PatternKind::linear: return "linear";
        case PatternKind::radial: return "radial";
        case PatternKind::curved: return "curved";
    }
    return "?";
}

std::string_view name_of(BaseKind k) {
    switch (k) {
        case BaseKind::gradient: return "gradient";
        case BaseKind::checkerboard: return "checkerboard";
        case BaseKind::stripes: return "stripes";
        case BaseKind::blobs: return "blobs";
    }
    return "?";
}

BaseKind parse_base_kind(std::string_view s) {
    for (BaseKind k : {BaseKind::gradient, BaseKind::checkerboard, BaseKind::stripes, BaseKind::blobs}) {
        if (name_of(k) == s) return k;
    }
    throw Error("unknown base image kind '" + std::string(s) + "'");
}

void SynthConfig::validate() const {
    if (width < 1 || height < 1) throw Error("synth: image size must be positive");
    if (!(weight_linear >= 0 && weight_radial >= 0 && weight_curved >= 0) ||
        weight_linear + weight_radial + weight_curved <= 0) {
        throw Error("synth: pattern weights must be >= 0 with a positive sum");
    }
    if (!(freq_min > 0) || !(freq_max >= freq_min)) throw Error("synth: frequencies must be positive, min <= max");
    if (!(amp_min >= 0) || !(amp_max <= 128) || !(amp_min <= amp_max)) {
        throw Error("synth: amplitudes must lie in [0, 128] with min <= max");
    }
    if (!(grating_offset >= 0)) throw Error("synth: grating offset must be >= 0");
    if (!(phase_jitter >= 0)) throw Error("synth: phase jitter must be >= 0");
    if (bases.empty()) throw Error("synth: no base image kinds");
    if (mask_threshold < 0 || mask_threshold > 255) throw Error("synth: mask threshold must lie in [0, 255]");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 over the pair (seed, index)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::vector<double> grating_product(int n, double f1, double f2) {
    std::vector<double> out(n);
    for (int x = 0; x < n; ++x) {
        const double u = static_cast<double>(x) / n;
        out[x] = std::cos(2 * std::numbers::pi * f1 * u) * std::cos(2 * std::numbers::pi * f2 * u);
    }
    return out;
}

namespace {

using Rng = std::mt19937_64;
constexpr double kTwoPi = 2 * std::numbers::pi;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
double sign(Rng& rng) { return uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0; }

struct Color {
    double c[3];
};

Color random_color(Rng& rng) { return {{uniform(rng, 40, 215), uniform(rng, 40, 215), uniform(rng, 40, 215)}}; }

// Planar float RGB, 3×H×W.
using Plane = std::vector<double>;

Plane base_image(BaseKind kind, int w, int h, Rng& rng) {
    Plane img(3 * static_cast<std::size_t>(w) * h);
    auto put = [&](int y, int x, const double* c) {
        for (int ch = 0; ch < 3; ++ch) img[(static_cast<std::size_t>(ch) * h + y) * w + x] = c[ch];
    };
    auto lerp = [](const Color& a, const Color& b, double t, double* out) {
        for (int ch = 0; ch < 3; ++ch) out[ch] = a.c[ch] + (b.c[ch] - a.c[ch]) * t;
    };
    const double s = std::max(w, h);
    switch (kind) {
        case BaseKind::gradient: {
            const Color a = random_color(rng), b = random_color(rng);
            const double th = uniform(rng, 0, kTwoPi);
            const double cx = std::cos(th), cy = std::sin(th);
            const double lo = std::min(0.0, cx * w) + std::min(0.0, cy * h);
            const double hi = std::max(0.0, cx * w) + std::max(0.0, cy * h);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double c[3];
                    lerp(a, b, (cx * x + cy * y - lo) / std::max(hi - lo, 1.0), c);
                    put(y, x, c);
                }
            break;
        }
        case BaseKind::checkerboard: {
            const Color a = random_color(rng), b = random_color(rng);
            const int cell = uniform_int(rng, 6, 24);
            const int ox = uniform_int(rng, 0, cell - 1), oy = uniform_int(rng, 0, cell - 1);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const bool odd = (((x + ox) / cell) + ((y + oy) / cell)) % 2;
                    put(y, x, odd ? b.c : a.c);
                }
            break;
        }
        case BaseKind::stripes: {
            const Color a = random_color(rng), b = random_color(rng);
            const double period = uniform(rng, 6, 30);
            const double th = uniform(rng, 0, std::numbers::pi);
            const double ph = uniform(rng, 0, kTwoPi);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double t = kTwoPi * (x * std::cos(th) + y * std::sin(th)) / period + ph;
                    double c[3];
                    lerp(a, b, 0.5 + 0.5 * std::tanh(3 * std::sin(t)), c);
                    put(y, x, c);
                }
            break;
        }
        case BaseKind::blobs: {
            const Color bg = random_color(rng);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) put(y, x, bg.c);
            const int count = uniform_int(rng, 4, 10);
            for (int i = 0; i < count; ++i) {
                const Color col = random_color(rng);
                const double bx = uniform(rng, 0, w), by = uniform(rng, 0, h);
                const double sx = uniform(rng, 0.04, 0.15) * s, sy = uniform(rng, 0.04, 0.15) * s;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        const double dx = (x - bx) / sx, dy = (y - by) / sy;
                        const double a = std::exp(-0.5 * (dx * dx + dy * dy));
                        for (int ch = 0; ch < 3; ++ch) {
                            double& v = img[(static_cast<std::size_t>(ch) * h + y) * w + x];
                            v += (col.c[ch] - v) * a;
                        }
                    }
            }
            break;
        }
    }
    return img;
}

PatternKind pick_pattern(const SynthConfig& cfg, Rng& rng) {
    const double r = uniform(rng, 0, cfg.weight_linear + cfg.weight_radial + cfg.weight_curved);
    if (r < cfg.weight_linear) return PatternKind::linear;
    if (r < cfg.weight_linear + cfg.weight_radial) return PatternKind::radial;
    return PatternKind::curved;
}

// Two gratings with nearby frequency and geometry; their product is the
// beat envelope times the carrier.
struct Interference {
    PatternKind kind;
    double f1, f2;
    double th1, th2;            // linear and curved orientation
    double cx1, cy1, cx2, cy2;  // radial centres
    double k1, k2;              // curvature
    double phase1, phase2;

    double coord(double u, double v, double th, double cx, double cy, double k) const {
        switch (kind) {
            case PatternKind::linear: return u * std::cos(th) + v * std::sin(th);
            case PatternKind::radial: return std::hypot(u - cx, v - cy);
            case PatternKind::curved: {
                const double along = u * std::cos(th) + v * std::sin(th);
                const double across = -u * std::sin(th) + v * std::cos(th) - 0.5;
                return along + k * across * across;
            }
        }
        return 0;
    }
    double phase_a(double u, double v) const { return kTwoPi * f1 * coord(u, v, th1, cx1, cy1, k1) + phase1; }
    double phase_b(double u, double v) const { return kTwoPi * f2 * coord(u, v, th2, cx2, cy2, k2) + phase2; }
};

Interference random_interference(const SynthConfig& cfg, Rng& rng) {
    Interference g{};
    g.kind = pick_pattern(cfg, rng);
    g.f1 = uniform(rng, cfg.freq_min, cfg.freq_max);
    g.f2 = g.f1 * (1 + sign(rng) * uniform(rng, 0.03, 0.15));
    g.th1 = uniform(rng, 0, std::numbers::pi);
    g.th2 = g.th1 + uniform(rng, -0.08, 0.08);
    g.cx1 = uniform(rng, -0.5, 1.5);
    g.cy1 = uniform(rng, -0.5, 1.5);
    g.cx2 = g.cx1 + uniform(rng, -0.05, 0.05);
    g.cy2 = g.cy1 + uniform(rng, -0.05, 0.05);
    g.k1 = sign(rng) * uniform(rng, 0.3, 1.5);
    g.k2 = g.k1 * uniform(rng, 0.9, 1.1);
    g.phase1 = uniform(rng, 0, kTwoPi);
    g.phase2 = uniform(rng, 0, kTwoPi);
    return g;
}

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

MoirePair synth_pair(const SynthConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const int w = cfg.width, h = cfg.height;
    const BaseKind base = cfg.bases[uniform_int(rng, 0, static_cast<int>(cfg.bases.size()) - 1)];
    const Plane clean = base_image(base, w, h, rng);
    const Interference g = random_interference(cfg, rng);
    const double amp = uniform(rng, cfg.amp_min, cfg.amp_max);
    double jitter_a[3], jitter_b[3];
    for (int c = 0; c < 3; ++c) {
        jitter_a[c] = uniform(rng, -cfg.phase_jitter, cfg.phase_jitter);
        jitter_b[c] = uniform(rng, -cfg.phase_jitter, cfg.phase_jitter);
    }

    MoirePair pair;
    pair.seed = seed;
    pair.clean = Image8(w, h, 3);
    pair.contaminated = Image8(w, h, 3);
    const double s = std::max(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double u = x / s, v = y / s;
            const double pa = g.phase_a(u, v), pb = g.phase_b(u, v);
            for (int c = 0; c < 3; ++c) {
                const std::uint8_t base_v = to_u8(clean[(static_cast<std::size_t>(c) * h + y) * w + x]);
                // Mean-free product of the two gratings, peak amplitude `amp`.
                const double o = cfg.grating_offset;
                const double field = amp *
                                     ((o + std::cos(pa + jitter_a[c])) * (o + std::cos(pb + jitter_b[c])) - o * o) /
                                     ((1 + o) * (1 + o));
                pair.clean.at(y, x, c) = base_v;
                pair.contaminated.at(y, x, c) = to_u8(base_v + field);
            }
        }
    }
    pair.mask = make_mask(pair.contaminated, pair.clean, cfg.mask_threshold);
    return pair;
}

std::vector<MoirePair> synth_dataset(const SynthConfig& cfg, int count, std::uint64_t seed) {
    if (count < 0) throw Error("synth: count must be >= 0");
    cfg.validate();
    std::vector<MoirePair> pairs(count);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
        pairs[i] = synth_pair(cfg, derive_seed(seed, i));
        char name[16];
        std::snprintf(name, sizeof name, "%05d", i);
        pairs[i].name = name;
    }
    return pairs;
}

namespace {

std::set<std::string> png_names(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") names.insert(e.path().filename().string());
    }
    return names;
}

Image8 fit_image(const Image8& img, const LoadOptions& opt, const std::string& name) {
    switch (opt.fit) {
        case LoadOptions::Fit::none: return img;
        case LoadOptions::Fit::center_crop:
            if (img.width < opt.width || img.height < opt.height) {
                throw Error("image " + name + " is smaller than the crop size " + std::to_string(opt.width) +
                            "x" + std::to_string(opt.height));
            }
            return center_crop(img, opt.width, opt.height);
        case LoadOptions::Fit::resize: return resize(img, opt.width, opt.height);
    }
    return img;
}

}  // namespace

std::vector<MoirePair> load_pairs(const fs::path& dir_moire, const fs::path& dir_clean, const LoadOptions& opt) {
    const auto moire = png_names(dir_moire);
    const auto clean = png_names(dir_clean);
    for (const auto& n : moire) {
        if (!clean.count(n)) throw Error("no clean counterpart for " + (dir_moire / n).string());
    }
    for (const auto& n : clean) {
        if (!moire.count(n)) throw Error("no moire counterpart for " + (dir_clean / n).string());
    }
    std::vector<MoirePair> pairs;
    pairs.reserve(moire.size());
    for (const auto& n : moire) {
        MoirePair p;
        p.contaminated = fit_image(read_png(dir_moire / n), opt, n);
        p.clean = fit_image(read_png(dir_clean / n), opt, n);
        if (!p.contaminated.same_size(p.clean)) throw Error("pair " + n + " has images of different sizes");
        p.mask = make_mask(p.contaminated, p.clean, opt.mask_threshold);
        p.name = fs::path(n).stem().string();
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<MoirePair> load_dataset(const fs::path& root, const LoadOptions& opt) {
    return load_pairs(root / "moire", root / "clean", opt);
}

Image8 mask_image(const MoireMask& mask) {
    Image8 img(mask.width, mask.height, 1);
    for (std::size_t i = 0; i < mask.values.size(); ++i) img.pixels[i] = mask.values[i] ? 255 : 0;
    return img;
}

void write_pairs(const fs::path& root, const std::vector<MoirePair>& pairs) {
    for (const char* sub : {"moire", "clean", "mask"}) fs::create_directories(root / sub);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::string name = pairs[i].name;
        if (name.empty()) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%05zu", i);
            name = buf;
        }
        write_png(root / "moire" / (name + ".png"), pairs[i].contaminated);
        write_png(root / "clean" / (name + ".png"), pairs[i].clean);
        write_png(root / "mask" / (name + ".png"), mask_image(pairs[i].mask));
    }
}

}  // namespace wdnet
