#include <random>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "wdnet/kernels.hpp"

using namespace wdnet::kernels;

namespace {

template <typename T>
std::vector<T> rnd(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(u(rng));
    return v;
}

template <typename T>
double rel_diff(const std::vector<T>& a, const std::vector<T>& b) {
    double d = 0, m = 1e-30;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max(d, std::abs(double(a[i]) - double(b[i])));
        m = std::max(m, std::abs(double(b[i])));
    }
    return d / m;
}

std::vector<ConvGeometry> geometries() {
    std::vector<ConvGeometry> out;
    auto g = [](int b, int ic, int h, int w, int oc, int k, int s, int d, int p) {
        ConvGeometry c;
        c.batch = b, c.in_ch = ic, c.in_h = h, c.in_w = w, c.out_ch = oc;
        c.k_h = c.k_w = k, c.stride = s, c.dilation = d, c.pad = p;
        return c;
    };
    out.push_back(g(2, 3, 9, 11, 4, 3, 1, 1, 1));    // plain 3×3
    out.push_back(g(3, 5, 16, 16, 6, 3, 1, 3, 3));   // dilated, size preserving
    out.push_back(g(1, 4, 13, 9, 2, 3, 2, 1, 1));    // strided
    out.push_back(g(2, 3, 12, 10, 5, 3, 2, 2, 2));   // strided and dilated
    out.push_back(g(2, 7, 8, 8, 3, 1, 1, 1, 0));     // pointwise
    out.push_back(g(1, 2, 10, 7, 3, 5, 1, 1, 0));    // unpadded 5×5
    out.push_back(g(2, 4, 6, 6, 4, 3, 1, 8, 8));     // dilation wider than the image
    out.push_back(g(1, 16, 40, 40, 8, 3, 1, 2, 2));  // several row tiles
    return out;
}

template <typename T>
void conv_agrees(double tol) {
    std::mt19937_64 rng(42);
    for (const auto& g : geometries()) {
        CAPTURE(g.in_ch);
        CAPTURE(g.stride);
        CAPTURE(g.dilation);
        CAPTURE(g.k_h);
        const std::size_t nin = std::size_t(g.batch) * g.in_ch * g.in_h * g.in_w;
        const std::size_t nw = std::size_t(g.out_ch) * g.in_ch * g.k_h * g.k_w;
        const std::size_t nout = std::size_t(g.batch) * g.out_ch * g.out_h() * g.out_w();
        auto in = rnd<T>(nin, rng), w = rnd<T>(nw, rng), b = rnd<T>(g.out_ch, rng), go = rnd<T>(nout, rng);

        std::vector<T> out(nout), ref(nout);
        conv2d_forward(g, in.data(), w.data(), b.data(), out.data());
        reference::conv2d_forward(g, in.data(), w.data(), b.data(), ref.data());
        CHECK(rel_diff(out, ref) < tol);

        // Accumulation semantics: start from the same non-zero buffers.
        auto gi = rnd<T>(nin, rng), gw = rnd<T>(nw, rng), gb = rnd<T>(g.out_ch, rng);
        auto ri = gi, rw = gw, rb = gb;
        conv2d_backward(g, in.data(), w.data(), go.data(), gi.data(), gw.data(), gb.data());
        reference::conv2d_backward(g, in.data(), w.data(), go.data(), ri.data(), rw.data(), rb.data());
        CHECK(rel_diff(gi, ri) < tol);
        CHECK(rel_diff(gw, rw) < tol);
        CHECK(rel_diff(gb, rb) < tol);

        // Null outputs are skipped.
        std::vector<T> only_w(nw, T(0)), ref_w(nw, T(0));
        conv2d_backward(g, in.data(), w.data(), go.data(), static_cast<T*>(nullptr), only_w.data(), static_cast<T*>(nullptr));
        reference::conv2d_backward(g, in.data(), w.data(), go.data(), static_cast<T*>(nullptr), ref_w.data(),
                                   static_cast<T*>(nullptr));
        CHECK(rel_diff(only_w, ref_w) < tol);
    }
}

template <typename T>
void sweep_agrees() {
    std::mt19937_64 rng(7);
    const int B = 2, C = 3, H = 7, W = 9;
    const std::size_t n = std::size_t(B) * C * H * W;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            if (!dy && !dx) continue;
            auto x = rnd<T>(n, rng), w = rnd<T>(C, rng), gh = rnd<T>(n, rng);
            std::vector<T> h(n), rh(n);
            sweep_forward(B, C, H, W, dy, dx, x.data(), w.data(), h.data());
            reference::sweep_forward(B, C, H, W, dy, dx, x.data(), w.data(), rh.data());
            CHECK(h == rh);
            std::vector<T> gx(n, T(0)), gw(C, T(0)), rx(n, T(0)), rw(C, T(0));
            sweep_backward(B, C, H, W, dy, dx, x.data(), w.data(), h.data(), gh.data(), gx.data(), gw.data());
            reference::sweep_backward(B, C, H, W, dy, dx, x.data(), w.data(), rh.data(), gh.data(), rx.data(), rw.data());
            CHECK(rel_diff(gx, rx) < 1e-12);
            CHECK(rel_diff(gw, rw) < 1e-5);
        }
    }
}

}  // namespace

TEST_CASE("parallel conv matches the serial reference (float)") { conv_agrees<float>(1e-5); }
TEST_CASE("parallel conv matches the serial reference (double)") { conv_agrees<double>(1e-12); }
TEST_CASE("parallel sweep matches the serial reference (float)") { sweep_agrees<float>(); }
TEST_CASE("parallel sweep matches the serial reference (double)") { sweep_agrees<double>(); }

TEST_CASE("parallel haar packet matches the serial reference") {
    std::mt19937_64 rng(3);
    for (int level = 1; level <= 3; ++level) {
        const int planes = 5, H = 16, W = 24;
        auto x = rnd<double>(std::size_t(planes) * H * W, rng);
        std::vector<double> a(x.size()), b(x.size()), ia(x.size()), ib(x.size());
        haar_packet_forward(planes, H, W, level, x.data(), a.data());
        reference::haar_packet_forward(planes, H, W, level, x.data(), b.data());
        CHECK(rel_diff(a, b) < 1e-14);
        haar_packet_inverse(planes, H, W, level, a.data(), ia.data());
        reference::haar_packet_inverse(planes, H, W, level, b.data(), ib.data());
        CHECK(rel_diff(ia, ib) < 1e-14);
        CHECK(rel_diff(ia, x) < 1e-13);
    }
}

TEST_CASE("results do not depend on the thread count") {
    ConvGeometry g;
    g.batch = 5, g.in_ch = 6, g.in_h = g.in_w = 20, g.out_ch = 7, g.dilation = 2, g.pad = 2;
    std::mt19937_64 rng(11);
    const std::size_t nin = std::size_t(g.batch) * g.in_ch * 400, nw = std::size_t(g.out_ch) * g.in_ch * 9,
                      nout = std::size_t(g.batch) * g.out_ch * 400;
    auto in = rnd<float>(nin, rng), w = rnd<float>(nw, rng), go = rnd<float>(nout, rng);
    auto run = [&](int threads) {
        set_threads(threads);
        std::vector<float> out(nout), gi(nin, 0.f), gw(nw, 0.f), gb(g.out_ch, 0.f);
        conv2d_forward(g, in.data(), w.data(), static_cast<const float*>(nullptr), out.data());
        conv2d_backward(g, in.data(), w.data(), go.data(), gi.data(), gw.data(), gb.data());
        out.insert(out.end(), gi.begin(), gi.end());
        out.insert(out.end(), gw.begin(), gw.end());
        out.insert(out.end(), gb.begin(), gb.end());
        return out;
    };
    const int saved = max_threads();
    const auto one = run(1);
    const auto three = run(3);
    set_threads(saved);
    CHECK(wdnet::test::bitwise_equal(one, three));
}
