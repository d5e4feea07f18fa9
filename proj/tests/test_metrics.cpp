#include <cmath>
#include <limits>

#include "doctest.h"
#include "test_util.hpp"
#include "wdnet/metrics.hpp"

using namespace wdnet;

namespace {

Image8 shifted(const Image8& a, int d) {
    Image8 b = a;
    for (auto& p : b.pixels) p = static_cast<std::uint8_t>(std::clamp(int(p) + d, 0, 255));
    return b;
}

// 24×32 gray test pattern shared with the reference values below.
std::vector<double> pattern() {
    std::vector<double> v(24 * 32);
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 32; ++x) v[y * 32 + x] = (37 * x + 11 * y * y + 5 * x * y) % 256;
    }
    return v;
}

}  // namespace

TEST_CASE("psnr examples") {
    Image8 a(16, 16, 3, 100);
    CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
    // ±1 at every pixel, alternating sign.
    Image8 b = a;
    for (std::size_t i = 0; i < b.pixels.size(); ++i) b.pixels[i] += (i % 2 ? 1 : -1);
    CHECK(psnr(a, b) == doctest::Approx(20 * std::log10(255.0)));
    CHECK(std::abs(psnr(a, b) - 48.13) < 0.01);
    Image8 black(8, 8, 3, 0), white(8, 8, 3, 255);
    CHECK(psnr(black, white) == 0.0);
    CHECK_THROWS_AS(psnr(a, Image8(16, 8, 3)), Error);
    CHECK_THROWS_AS(psnr(Image8(), Image8()), Error);
}

TEST_CASE("psnr is symmetric and falls with noise amplitude") {
    auto a = test::random_image(32, 32, 1);
    for (auto& p : a.pixels) p = std::uint8_t(20 + p * 200 / 255);
    double prev = std::numeric_limits<double>::infinity();
    for (int amp = 1; amp <= 20; ++amp) {
        std::mt19937 rng(4);
        Image8 b = a;
        for (auto& p : b.pixels) p = std::uint8_t(int(p) + (rng() % 2 ? amp : -amp));
        const double v = psnr(a, b);
        CHECK(v == psnr(b, a));
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("ssim examples") {
    auto a = test::random_image(24, 20, 2);
    CHECK(ssim(a, a) == 1.0);

    const double c1 = std::pow(0.01 * 255, 2);
    Image8 p(16, 16, 3, 100), q(16, 16, 3, 150);
    CHECK(ssim(p, q) == doctest::Approx((2 * 100.0 * 150 + c1) / (100.0 * 100 + 150.0 * 150 + c1)).epsilon(1e-9));

    CHECK_THROWS_AS(ssim(Image8(10, 16, 3), Image8(10, 16, 3)), Error);
    CHECK_THROWS_AS(ssim(a, Image8(24, 24, 3)), Error);
}

TEST_CASE("ssim agrees with the reference implementation") {
    // Values from skimage.metrics.structural_similarity(a, b, gaussian_weights=True,
    // sigma=1.5, use_sample_covariance=False, data_range=255), scikit-image 0.25.2.
    auto a = pattern();
    std::vector<double> inv(a.size()), near(a.size());
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 32; ++x) {
            const int i = y * 32 + x;
            inv[i] = 255 - a[i];
            near[i] = std::clamp(a[i] + (7 * x + 3 * y) % 9 - 4, 0.0, 255.0);
        }
    }
    const double inverted = ssim_gray(a, inv, 32, 24);
    CHECK(inverted == doctest::Approx(-0.9783222632525859).epsilon(1e-9));
    CHECK(inverted < 0.5);
    CHECK(ssim_gray(a, near, 32, 24) == doctest::Approx(0.999382331763462).epsilon(1e-9));
}

TEST_CASE("ssim is symmetric and bounded") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto a = test::random_image(16 + s, 20, s), b = test::random_image(16 + s, 20, s + 50);
        const double v = ssim(a, b);
        CHECK(v == ssim(b, a));
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
        CHECK(v < 1.0 - 1e-9);
        CHECK(ssim(a, shifted(a, 0)) == 1.0);
    }
}

TEST_CASE("quality table") {
    std::vector<MetricsRow> rows{{"a.png", {30.0, 0.9}}, {"b.png", {std::numeric_limits<double>::infinity(), 1.0}}};
    auto t = metrics_table(rows);
    CHECK(t.find("a.png") != std::string::npos);
    CHECK(t.find("30.00") != std::string::npos);
    CHECK(t.find("inf") != std::string::npos);
    CHECK(t.find("mean") != std::string::npos);
    CHECK(format_psnr(48.1308) == "48.13");
    auto m = mean_score({{30, 0.5}, {40, 0.7}});
    CHECK(m.psnr_db == 35.0);
    CHECK(m.ssim == doctest::Approx(0.6));
}
