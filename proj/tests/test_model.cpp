#include <cmath>

#include "doctest.h"
#include "model_loss.hpp"
#include "test_util.hpp"
#include "wdnet/grad_check.hpp"
#include "wdnet/model.hpp"

using namespace wdnet;
using wdnet::test::random_tensor;

namespace {

template <typename T>
void set_all(TensorT<T>& t, T v) {
    for (auto& x : t.mutable_data()) x = v;
}

WDNetConfig noisy_tiny(double noise = 0.1) {
    auto c = WDNetConfig::tiny();
    c.init_noise = noise;
    return c;
}

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k + out; }

}  // namespace

TEST_CASE("Fibonacci dilation schedule") {
    CHECK(fibonacci_dilations(7) == std::vector<int>{1, 2, 3, 5, 8, 13, 21});
    CHECK(WDNetConfig{}.dilation_rates == fibonacci_dilations(7));
    const std::vector<int> d{1, 2, 3, 5, 8, 13, 21};
    CHECK(is_fibonacci_schedule(d));
    for (std::size_t k = 0; k + 2 < d.size(); ++k) CHECK(d[k + 2] == d[k] + d[k + 1]);
    const std::vector<int> bad{1, 2, 4};
    CHECK_FALSE(is_fibonacci_schedule(bad));
}

TEST_CASE("config validation") {
    WDNetConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.in_channels() == 48);
    c.dilation_rates = {1, 2, 3};
    CHECK_THROWS_AS(c.validate(), Error);
    c = WDNetConfig{};
    c.dpm_module_index = 8;
    CHECK_THROWS_AS(c.validate(), Error);
    c.dpm_module_index = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = WDNetConfig{};
    c.level = 4;
    CHECK_THROWS_AS(c.validate(), Error);
    c = WDNetConfig{};
    c.dpm_directions = 6;
    CHECK_THROWS_AS(WDNet(c, 0), Error);
}

TEST_CASE("config text round trip") {
    auto c = noisy_tiny(0.125);
    c.beta = 0.3;
    c.dpm_directions = 4;
    CHECK(WDNetConfig::from_text(c.to_text()) == c);
    CHECK_THROWS_AS(WDNetConfig::from_text("level=2\nbogus=1\n"), Error);
}

TEST_CASE("default parameter count matches the architecture") {
    const WDNetConfig c;
    std::size_t n = conv_params(48, 64, 3) + conv_params(64, 48, 3);
    for (int k = 0; k < 7; ++k) {
        for (int b = 0; b < 2; ++b) {
            for (int l = 0; l < 5; ++l) n += conv_params(64 + 32 * l, 32, 3);
            n += conv_params(224, 64, 1);
        }
        n += 2 * conv_params(64, 64, 3);
    }
    n += conv_params(64, 32, 1) + conv_params(32, 1, 1);
    n += 2 * (conv_params(32, 8, 1) + 8 * 32 + conv_params(8 * 32, 32, 1));
    WDNet a(c, 3);
    CHECK(a.parameter_count() == n);
}

TEST_CASE("dense channel trace for width 64, growth 32") {
    WDNet net(WDNetConfig{}, 0);
    for (int l = 0; l < 5; ++l) {
        const auto& w = net.parameter("m1.dense.b0.l" + std::to_string(l) + ".weight");
        CHECK(w.dim(1) == 64 + 32 * l);
        CHECK(w.dim(0) == 32);
    }
    const auto& fuse = net.parameter("m1.dense.b1.fuse.weight");
    CHECK(fuse.shape() == Shape{64, 224, 1, 1});
}

TEST_CASE("building is deterministic per seed") {
    WDNet a(noisy_tiny(), 5), b(noisy_tiny(), 5), c(noisy_tiny(), 6);
    bool differs = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        CHECK(test::bitwise_equal(a.parameters()[i].second.data(), b.parameters()[i].second.data()));
        differs |= !test::bitwise_equal(a.parameters()[i].second.data(), c.parameters()[i].second.data());
    }
    CHECK(differs);
}

TEST_CASE("eye initialization") {
    auto c = WDNetConfig::tiny();
    c.init_noise = 0.0;
    WDNet net(c, 1);
    const auto& w = net.parameter("m1.dil.conv.weight");
    for (int o = 0; o < 8; ++o) {
        for (int i = 0; i < 8; ++i) {
            for (int t = 0; t < 9; ++t) CHECK(w.data()[(o * 8 + i) * 9 + t] == ((o == i && t == 4) ? 1.0f : 0.0f));
        }
    }
    for (const auto& [name, t] : net.parameters()) {
        if (name.ends_with(".bias")) CHECK(test::max_abs(t.data()) == 0.0);
    }
}

TEST_CASE("forward shapes and identity start") {
    SUBCASE("tiny config runs a 16x16 input") {
        WDNet net(WDNetConfig::tiny(), 2);
        auto x = fwt2(random_tensor({2, 3, 16, 16}, 1, 0, 1)).bands;
        auto out = net.forward(x);
        CHECK(out.bands.shape() == x.shape());
        CHECK(out.attention.shape() == Shape{2, 1, 4, 4});
        for (float a : out.attention.data()) CHECK((a > 0.0f && a < 1.0f));
        CHECK_THROWS_AS(net.forward(random_tensor({1, 12, 4, 4}, 2)), Error);
    }
    SUBCASE("zero noise gives an exact identity") {
        auto c = WDNetConfig::tiny();
        c.init_noise = 0.0;
        c.beta = 0.0;
        WDNet net(c, 2);
        auto x = random_tensor({1, 48, 4, 4}, 3);
        CHECK(test::bitwise_equal(net.forward(x).bands.data(), x.data()));
    }
    SUBCASE("zeroed tail gives an exact identity with noise elsewhere") {
        WDNet net(noisy_tiny(), 2);
        set_all(net.parameter("tail.weight"), 0.0f);
        auto x = random_tensor({2, 48, 4, 4}, 4);
        CHECK(test::bitwise_equal(net.forward(x).bands.data(), x.data()));
    }
    SUBCASE("the residual shrinks with the tail") {
        WDNet net(noisy_tiny(), 2);
        auto x = random_tensor({1, 48, 4, 4}, 5);
        auto& tail = net.parameter("tail.weight");
        double prev = 1e30;
        for (float s : {1.0f, 0.1f, 0.01f}) {
            for (auto& v : tail.mutable_data()) v *= s;
            const double r = test::max_abs_diff(net.forward(x).bands.data(), x.data());
            CHECK(r < prev);
            prev = r;
        }
    }
    SUBCASE("forward is deterministic") {
        WDNet net(noisy_tiny(), 7);
        auto x = random_tensor({2, 48, 8, 8}, 6);
        CHECK(test::bitwise_equal(net.forward(x).bands.data(), net.forward(x).bands.data()));
    }
}

TEST_CASE("dense branch properties") {
    auto c = noisy_tiny();
    auto f = random_tensor({1, 8, 6, 6}, 8);
    SUBCASE("beta 0 passes features through") {
        c.beta = 0.0;
        WDNet net(c, 1);
        CHECK(test::bitwise_equal(net.dense_branch(f, 1, Tensor{}).data(), f.data()));
    }
    SUBCASE("unit attention equals no attention") {
        WDNet net(c, 1);
        auto ones = Tensor::full({1, 1, 6, 6}, 1.0f);
        CHECK(test::bitwise_equal(net.dense_branch(f, 2, ones).data(), net.dense_branch(f, 2, Tensor{}).data()));
    }
}

TEST_CASE("module is the sum of its branches") {
    WDNet net(noisy_tiny(), 3);
    auto f = random_tensor({1, 8, 6, 6}, 9);
    set_all(net.parameter("m1.dil.conv.weight"), 0.0f);
    set_all(net.parameter("m1.dil.conv.bias"), 0.0f);
    CHECK(test::max_abs(net.dilation_branch(f, 1).data()) == 0.0);
    CHECK(test::bitwise_equal(net.dual_branch_module(f, 1).data(), net.dense_branch(f, 1, Tensor{}).data()));

    // Module 2 carries the attention module.
    Tensor att;
    auto out = net.dual_branch_module(f, 2, &att);
    REQUIRE(att.defined());
    auto expect = add(net.dense_branch(f, 2, att), net.dilation_branch(f, 2));
    CHECK(test::bitwise_equal(out.data(), expect.data()));
    CHECK(out.shape() == f.shape());
}

TEST_CASE("dilated conv footprint follows the configured rate") {
    for (int k = 1; k <= 7; ++k) {
        WDNetConfig c;
        c.width = 2;
        c.dense_growth = 2;
        c.dpm_hidden = 2;
        c.init_noise = 0.0;
        WDNet net(c, 0);
        const int d = c.dilation_rates[k - 1];
        const int n = 2 * d + 7, mid = n / 2;
        auto& w = net.parameter("m" + std::to_string(k) + ".dil.dilated.weight");
        for (int t = 0; t < 9; ++t) w.mutable_data()[t] = 1.0f;  // out 0, in 0
        std::vector<float> img(2 * n * n, 0.0f);
        img[mid * n + mid] = 1.0f;
        auto y = net.dilation_branch(Tensor::from_data({1, 2, n, n}, img), k);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const int di = i - mid, dj = j - mid;
                const bool tap = (di == 0 || std::abs(di) == d) && (dj == 0 || std::abs(dj) == d);
                CHECK(y.data()[i * n + j] == (tap ? 1.0f : 0.0f));
            }
        }
    }
}

TEST_CASE("direction perception module") {
    auto c = WDNetConfig::tiny();
    c.init_noise = 0.0;
    SUBCASE("zero output conv gives 0.5") {
        WDNet net(noisy_tiny(), 4);
        set_all(net.parameter("m2.dpm.out.weight"), 0.0f);
        auto a = net.dpm_forward(random_tensor({2, 8, 5, 5}, 10));
        CHECK(a.shape() == Shape{2, 1, 5, 5});
        for (float v : a.data()) CHECK(v == 0.5f);
    }
    SUBCASE("two stages reach every pixel from one impulse") {
        WDNet net(c, 4);
        // Unit recurrences (the default), weight maps saturated to 1, positive fusion.
        for (const char* s : {"s1", "s2"}) {
            set_all(net.parameter(std::string("m2.dpm.") + s + ".maps.bias"), 40.0f);
            set_all(net.parameter(std::string("m2.dpm.") + s + ".fuse.weight"), 1.0f);
        }
        std::vector<float> img(8 * 25, 0.0f);
        img[1 * 5 + 3] = 1.0f;
        auto trace = net.dpm_trace(Tensor::from_data({1, 8, 5, 5}, img));
        int reached1 = 0;
        for (int p = 0; p < 25; ++p) reached1 += trace.stage1.data()[p] > 0.0f;
        CHECK(reached1 < 25);
        for (float v : trace.stage2.data()) CHECK(v > 0.0f);
    }
    SUBCASE("four directions change the map on diagonal stripes") {
        auto c4 = c;
        c4.dpm_directions = 4;
        WDNet n8(c, 4), n4(c4, 4);
        for (WDNet* net : {&n8, &n4}) {
            for (const char* s : {"s1", "s2"}) {
                set_all(net->parameter(std::string("m2.dpm.") + s + ".maps.bias"), 40.0f);
                set_all(net->parameter(std::string("m2.dpm.") + s + ".fuse.weight"), 0.01f);
            }
            set_all(net->parameter("m2.dpm.out.weight"), 0.01f);
        }
        const int n = 12;
        std::vector<float> img(8 * n * n, 0.0f);
        for (int ch = 0; ch < 8; ++ch) {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) img[(ch * n + i) * n + j] = ((i + j) % 4 == 0) ? 1.0f : 0.0f;
            }
        }
        auto x = Tensor::from_data({1, 8, n, n}, img);
        auto a8 = n8.dpm_forward(x), a4 = n4.dpm_forward(x);
        CHECK(test::max_abs_diff(a8.data(), a4.data()) > 1e-3);
        for (float v : a8.data()) CHECK((v > 0.0f && v < 1.0f));
    }
}

TEST_CASE("every parameter receives a gradient") {
    WDNet net(noisy_tiny(0.2), 11);
    auto x = random_tensor({2, 48, 6, 6}, 12);
    auto out = net.forward(x);
    auto loss = add(sum(mul(out.bands, random_tensor(out.bands.shape(), 13))),
                    sum(mul(out.attention, random_tensor(out.attention.shape(), 14))));
    net.zero_grad();
    backward(loss);
    for (const auto& [name, t] : net.parameters()) {
        CAPTURE(name);
        if (name.find(".maps.") != std::string::npos) continue;
        CHECK(test::max_abs(t.grad()) > 0.0);
    }
}

TEST_CASE("module and branch gradients in double precision") {
    WDNet64 net = WDNet(noisy_tiny(0.2), 15).cast<double>();
    auto f = random_tensor<double>({1, 8, 6, 6}, 16, -1, 1, true);
    auto probe = random_tensor<double>({1, 8, 6, 6}, 17);
    GradCheckOptions o;
    o.max_entries = 6;
    auto dil = grad_check<double>([&] { return sum(mul(net.dilation_branch(f, 2), probe)); },
                                  {{"f", f}, {"w", net.parameter("m2.dil.dilated.weight")}}, o);
    INFO(dil.to_string());
    CHECK(dil.max_relative_error() < 1e-3);
    auto mod = grad_check<double>([&] { return sum(mul(net.dual_branch_module(f, 2), probe)); }, net.parameters(), o);
    INFO(mod.to_string());
    CHECK(mod.max_relative_error() < 1e-3);
}

TEST_CASE("tiny model loss gradient at 32-bit") {
    WDNet net(WDNetConfig::tiny(), 21);
    auto input = random_tensor({1, 3, 16, 16}, 22, 0, 1);
    auto target = add(input, random_tensor({1, 3, 16, 16}, 23, -0.05, 0.05));
    auto mask = random_tensor({1, 1, 16, 16}, 24, 0, 1);
    GradCheckOptions o;
    o.epsilon = 3e-3;
    o.max_entries = 4;
    auto r = grad_check<float>(
        [&] { return test::model_loss(net, input, target, mask, LossWeights::desk()); }, net.parameters(), o);
    INFO(r.to_string());
    // Float differences cannot resolve the smallest per-parameter gradients;
    // the error is measured against the whole gradient.
    CHECK(r.global_relative_error() < 1e-2);
}
