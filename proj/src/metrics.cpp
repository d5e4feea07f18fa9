#include "wdnet/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

namespace wdnet {

double psnr(const Image8& a, const Image8& b) {
    if (!a.same_size(b)) throw Error("psnr: image shapes differ");
    if (a.pixels.empty()) throw Error("psnr: empty image");
    double se = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = double(a.pixels[i]) - double(b.pixels[i]);
        se += d * d;
    }
    if (se == 0) return std::numeric_limits<double>::infinity();
    const double mse = se / static_cast<double>(a.pixels.size());
    return 20.0 * std::log10(255.0 / std::sqrt(mse));
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::array<double, kWin> gaussian_taps() {
    std::array<double, kWin> g{};
    double total = 0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        g[i] = std::exp(-0.5 * d * d / (kSigma * kSigma));
        total += g[i];
    }
    for (double& v : g) v /= total;
    return g;
}

// Separable Gaussian filter, valid positions only: (h-10)×(w-10).
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h) {
    static const auto g = gaussian_taps();
    const int ow = w - kWin + 1, oh = h - kWin + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int k = 0; k < kWin; ++k) acc += g[k] * img[static_cast<std::size_t>(y) * w + x + k];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int k = 0; k < kWin; ++k) acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double ssim_gray(const std::vector<double>& a, const std::vector<double>& b, int width, int height) {
    if (a.size() != b.size() || a.size() != static_cast<std::size_t>(width) * height) {
        throw Error("ssim: plane sizes differ");
    }
    if (width < kWin || height < kWin) {
        throw Error("ssim: image " + std::to_string(width) + "x" + std::to_string(height) +
                    " is smaller than the 11x11 window");
    }
    const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, width, height), mu_b = filter_valid(b, width, height);
    const auto e_aa = filter_valid(aa, width, height), e_bb = filter_valid(bb, width, height);
    const auto e_ab = filter_valid(ab, width, height);
    double total = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        // Products formed before scaling so swapping a and b is exact.
        const double mu_ab = mu_a[i] * mu_b[i];
        const double cov = e_ab[i] - mu_ab;
        const double num = (2 * mu_ab + c1) * (2 * cov + c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
        total += num / den;
    }
    return total / static_cast<double>(mu_a.size());
}

double ssim(const Image8& a, const Image8& b) {
    if (!a.same_size(b)) throw Error("ssim: image shapes differ");
    return ssim_gray(luma(a), luma(b), a.width, a.height);
}

QualityScore quality(const Image8& a, const Image8& b) { return {psnr(a, b), ssim(a, b)}; }

std::string format_psnr(double db) {
    if (std::isinf(db)) return db > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", db);
    return buf;
}

QualityScore mean_score(const std::vector<QualityScore>& scores) {
    if (scores.empty()) throw Error("mean of an empty score list");
    QualityScore m;
    for (const auto& s : scores) {
        m.psnr_db += s.psnr_db;
        m.ssim += s.ssim;
    }
    m.psnr_db /= static_cast<double>(scores.size());
    m.ssim /= static_cast<double>(scores.size());
    return m;
}

std::string metrics_table(const std::vector<MetricsRow>& rows) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-24s %10s %8s\n", "filename", "PSNR", "SSIM");
    out += buf;
    std::vector<QualityScore> scores;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-24s %10s %8.4f\n", r.name.c_str(), format_psnr(r.score.psnr_db).c_str(),
                      r.score.ssim);
        out += buf;
        scores.push_back(r.score);
    }
    if (!scores.empty()) {
        const auto m = mean_score(scores);
        std::snprintf(buf, sizeof buf, "%-24s %10s %8.4f\n", "mean", format_psnr(m.psnr_db).c_str(), m.ssim);
        out += buf;
    }
    return out;
}

}  // namespace wdnet
