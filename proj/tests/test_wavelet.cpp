#include <cmath>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "wdnet/grad_check.hpp"
#include "wdnet/ops.hpp"
#include "wdnet/wavelet.hpp"

using namespace wdnet;
using wdnet::test::random_tensor;

namespace {

double energy(std::span<const float> v) {
    double e = 0;
    for (float x : v) e += double(x) * x;
    return e;
}

}  // namespace

TEST_CASE("band counts and shapes") {
    CHECK(band_count(1) == 12);
    CHECK(band_count(2) == 48);
    CHECK(band_count(3) == 192);
    for (int level = 1; level <= 3; ++level) {
        auto s = fwt2(random_tensor({2, 3, 32, 16}, level, 0, 1), {level});
        CHECK(s.bands.shape() == Shape{2, band_count(level), 32 >> level, 16 >> level});
        CHECK(s.layout == kBandLayout);
    }
    auto s = fwt2(random_tensor({3, 256, 256}, 1, 0, 1));
    CHECK(s.bands.shape() == Shape{1, 48, 64, 64});
}

TEST_CASE("invalid levels and sizes are rejected") {
    CHECK_THROWS_AS(fwt2(random_tensor({1, 3, 16, 16}, 1), {0}), Error);
    CHECK_THROWS_AS(fwt2(random_tensor({1, 3, 16, 16}, 1), {4}), Error);
    CHECK_THROWS_AS(fwt2(random_tensor({1, 3, 18, 16}, 1), {2}), Error);
    CHECK_THROWS_AS(fwt2(random_tensor({1, 2, 16, 16}, 1), {2}), Error);
    SubbandStack bad{2, random_tensor({1, 47, 4, 4}, 1)};
    CHECK_THROWS_AS(ifwt2(bad), Error);
}

TEST_CASE("constant image puts 4c in the low bands") {
    const float c = 0.3f;
    auto s = fwt2(Tensor::full({1, 3, 8, 8}, c));
    const int hw = 4;
    for (int b = 0; b < 48; ++b) {
        for (int p = 0; p < hw; ++p) {
            const float v = s.bands.data()[b * hw + p];
            if (b < 3) CHECK(v == doctest::Approx(4 * c).epsilon(1e-6));
            else CHECK(v == 0.0f);
        }
    }
}

TEST_CASE("level 1 of a 2x2 block") {
    const float a = 0.9f, b = 0.2f, c = 0.4f, d = 0.7f;
    auto s = haar_packet(Tensor::from_data({1, 1, 2, 2}, {a, b, c, d}), 1);
    REQUIRE(s.shape() == Shape{1, 4, 1, 1});
    CHECK(s.data()[0] == doctest::Approx((a + b + c + d) / 2));
    CHECK(s.data()[1] == doctest::Approx((a - b + c - d) / 2));
    CHECK(s.data()[2] == doctest::Approx((a + b - c - d) / 2));
    CHECK(s.data()[3] == doctest::Approx((a - b - c + d) / 2));
}

TEST_CASE("inverse examples") {
    auto zero = ifwt2(SubbandStack{2, Tensor::zeros({1, 48, 4, 4})});
    CHECK(test::max_abs(zero.data()) == 0.0);

    std::vector<float> v(48 * 16, 0.0f);
    for (int p = 0; p < 16; ++p) v[p] = 4.0f;
    auto img = ifwt2(SubbandStack{2, Tensor::from_data({1, 48, 4, 4}, v)});
    REQUIRE(img.shape() == Shape{1, 3, 16, 16});
    for (int p = 0; p < 256; ++p) {
        CHECK(img.data()[p] == doctest::Approx(1.0f).epsilon(1e-6));
        CHECK(img.data()[256 + p] == 0.0f);
        CHECK(img.data()[512 + p] == 0.0f);
    }
}

TEST_CASE("perfect reconstruction, Parseval and linearity") {
    for (int level = 1; level <= 3; ++level) {
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            auto x = random_tensor({2, 3, 24, 32}, seed * 7 + level, 0, 1);
            auto s = fwt2(x, {level});
            auto r = ifwt2(s);
            CHECK(test::max_abs_diff(r.data(), x.data()) < 1e-5);
            CHECK(std::abs(energy(s.bands.data()) - energy(x.data())) <= 1e-3 * energy(x.data()));

            auto y = random_tensor({2, 3, 24, 32}, seed * 7 + level + 100, 0, 1);
            auto lhs = fwt2(add(scale(x, 0.6f), scale(y, -2.0f)), {level}).bands;
            auto rhs = add(scale(s.bands, 0.6f), scale(fwt2(y, {level}).bands, -2.0f));
            CHECK(test::max_abs_diff(lhs.data(), rhs.data()) <= 1e-4 * test::max_abs(rhs.data()));
        }
    }
}

TEST_CASE("band ordering") {
    auto l2 = band_ordering(2);
    REQUIRE(l2.size() == 48);
    CHECK(l2[0] == "R:LL.LL");
    CHECK(l2[1] == "G:LL.LL");
    CHECK(l2[2] == "B:LL.LL");
    CHECK(l2[3] == "R:LL.HL");
    CHECK(l2[3 + 15] == "G:LL.HL");
    CHECK(l2[47] == "B:HH.HH");
    CHECK(band_ordering(1).size() == 12);
    CHECK(band_ordering(3).size() == 192);
    for (int level = 1; level <= 3; ++level) {
        auto labels = band_ordering(level);
        CHECK(std::set<std::string>(labels.begin(), labels.end()).size() == labels.size());
        auto pack = packing_order(level);
        auto unpack = unpacking_order(level);
        for (std::size_t i = 0; i < pack.size(); ++i) CHECK(unpack[pack[i]] == int(i));
    }
}

TEST_CASE("packed bands follow the labels") {
    // A pure horizontal cosine at the Nyquist rate lives in HL only; a vertical one in LH.
    const int n = 8;
    std::vector<float> v(3 * n * n, 0.0f);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) v[1 * n * n + y * n + x] = (x % 2 ? -1.0f : 1.0f);  // G channel
    }
    auto s = fwt2(Tensor::from_data({1, 3, n, n}, v), {1});
    auto labels = band_ordering(1);
    for (int b = 0; b < 12; ++b) {
        double e = 0;
        for (int p = 0; p < 16; ++p) e += std::pow(s.bands.data()[b * 16 + p], 2);
        CAPTURE(labels[b]);
        CHECK((e > 1e-6) == (labels[b] == "G:HL"));
    }
}

TEST_CASE("wavelet transforms pass gradient checks") {
    auto x = random_tensor<double>({1, 3, 8, 8}, 5, 0, 1, true);
    auto w = random_tensor<double>({1, 48, 2, 2}, 6);
    auto r = grad_check<double>([&] { return sum(mul(fwt2(x).bands, w)); }, {{"x", x}});
    CHECK(r.max_relative_error() < 1e-3);
    auto b = random_tensor<double>({1, 48, 2, 2}, 7, -1, 1, true);
    auto wi = random_tensor<double>({1, 3, 8, 8}, 8);
    auto ri = grad_check<double>([&] { return sum(mul(ifwt2(SubbandStackT<double>{2, b}), wi)); }, {{"b", b}});
    CHECK(ri.max_relative_error() < 1e-3);
}

TEST_CASE("subband difference report") {
    auto a = test::random_image(32, 32, 1);
    SUBCASE("identical images") {
        auto r = subband_diff_report(a, a);
        CHECK(r.bands.size() == 16);
        for (const auto& b : r.bands) CHECK(b.mse == 0.0);
        auto g = r.grid();
        CHECK(g.channels == 1);
        for (auto p : g.pixels) CHECK(p == 0);
    }
    SUBCASE("period-4 horizontal sinusoid lands in horizontally high-pass bands") {
        Image8 b = a;
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                const int d = int(std::lround(20 * std::cos(2 * M_PI * x / 4.0)));
                for (int c = 0; c < 3; ++c) b.at(y, x, c) = std::uint8_t(std::clamp(a.at(y, x, c) + d, 0, 255));
            }
        }
        // Compare against the same sinusoid on a flat base so clipping cannot leak energy.
        Image8 flat(32, 32, 3, 128), wavy = flat;
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                for (int c = 0; c < 3; ++c) wavy.at(y, x, c) = std::uint8_t(128 + std::lround(20 * std::cos(2 * M_PI * x / 4.0)));
            }
        }
        auto r = subband_diff_report(flat, wavy);
        double high = 0, total = 0;
        for (const auto& band : r.bands) {
            // Label "C:XY.ZW": the first filter letter of every node is the horizontal one.
            const auto pos = band.label.find(':');
            const bool horiz_high = band.label[pos + 1] == 'H' || band.label[pos + 4] == 'H';
            total += band.mse;
            if (horiz_high) high += band.mse;
        }
        CHECK(total > 0);
        CHECK(high / total > 0.99);
        CHECK(subband_diff_report(a, b).table().find("mse") != std::string::npos);
    }
    SUBCASE("row and tile counts") {
        for (int level = 1; level <= 3; ++level) {
            auto r = subband_diff_report(a, test::random_image(32, 32, 2), {level});
            CHECK(int(r.bands.size()) == bands_per_channel(level));
            auto g = r.grid();
            const int tiles = 1 << level;
            CHECK(g.width == tiles * (32 >> level));
            CHECK(g.height == tiles * (32 >> level));
        }
    }
    SUBCASE("size mismatch") { CHECK_THROWS_AS(subband_diff_report(a, test::random_image(16, 32, 1)), Error); }
}
