// Serial, definition-level versions of the compute kernels. Slow on purpose:
// each follows the textbook formula directly so it can serve as the oracle
// for the parallel kernels.

#include "wdnet/kernels.hpp"

#include <vector>

namespace wdnet::kernels::reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* w, const T* b, T* out) {
    const int oh = g.out_h(), ow = g.out_w();
    for (int n = 0; n < g.batch; ++n)
        for (int oc = 0; oc < g.out_ch; ++oc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = b ? b[oc] : T(0);
                    for (int ic = 0; ic < g.in_ch; ++ic)
                        for (int ky = 0; ky < g.k_h; ++ky)
                            for (int kx = 0; kx < g.k_w; ++kx) {
                                const int iy = oy * g.stride - g.pad + ky * g.dilation;
                                const int ix = ox * g.stride - g.pad + kx * g.dilation;
                                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                                acc += w[((oc * g.in_ch + ic) * g.k_h + ky) * g.k_w + kx] *
                                       in[((n * g.in_ch + ic) * g.in_h + iy) * g.in_w + ix];
                            }
                    out[((n * g.out_ch + oc) * oh + oy) * ow + ox] = acc;
                }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* in, const T* w, const T* grad_out,
                     T* grad_in, T* grad_w, T* grad_b) {
    const int oh = g.out_h(), ow = g.out_w();
    for (int n = 0; n < g.batch; ++n)
        for (int oc = 0; oc < g.out_ch; ++oc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const T go = grad_out[((n * g.out_ch + oc) * oh + oy) * ow + ox];
                    if (grad_b) grad_b[oc] += go;
                    for (int ic = 0; ic < g.in_ch; ++ic)
                        for (int ky = 0; ky < g.k_h; ++ky)
                            for (int kx = 0; kx < g.k_w; ++kx) {
                                const int iy = oy * g.stride - g.pad + ky * g.dilation;
                                const int ix = ox * g.stride - g.pad + kx * g.dilation;
                                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                                const int wi = ((oc * g.in_ch + ic) * g.k_h + ky) * g.k_w + kx;
                                const int ii = ((n * g.in_ch + ic) * g.in_h + iy) * g.in_w + ix;
                                if (grad_w) grad_w[wi] += go * in[ii];
                                if (grad_in) grad_in[ii] += go * w[wi];
                            }
                }
}

namespace {

// Scan position a (0..H-1) to row index for a step direction.
inline int scan_index(int a, int step, int extent) { return step >= 0 ? a : extent - 1 - a; }

}  // namespace

template <typename T>
void sweep_forward(int batch, int channels, int height, int width, int dy, int dx, const T* x,
                   const T* w, T* h) {
    for (int n = 0; n < batch; ++n)
        for (int c = 0; c < channels; ++c) {
            const int base = (n * channels + c) * height * width;
            for (int a = 0; a < height; ++a)
                for (int e = 0; e < width; ++e) {
                    const int i = scan_index(a, dy, height), j = scan_index(e, dx, width);
                    const int pi = i - dy, pj = j - dx;
                    T prev = 0;
                    if (pi >= 0 && pi < height && pj >= 0 && pj < width)
                        prev = h[base + pi * width + pj];
                    const T z = x[base + i * width + j] + w[c] * prev;
                    h[base + i * width + j] = z > 0 ? z : T(0);
                }
        }
}

template <typename T>
void sweep_backward(int batch, int channels, int height, int width, int dy, int dx, const T* x,
                    const T* w, const T* h, const T* grad_h, T* grad_x, T* grad_w) {
    (void)x;
    std::vector<T> gz(static_cast<std::size_t>(height) * width);
    for (int n = 0; n < batch; ++n)
        for (int c = 0; c < channels; ++c) {
            const int base = (n * channels + c) * height * width;
            for (int a = height - 1; a >= 0; --a)
                for (int e = width - 1; e >= 0; --e) {
                    const int i = scan_index(a, dy, height), j = scan_index(e, dx, width);
                    T g = grad_h[base + i * width + j];
                    const int ni = i + dy, nj = j + dx;
                    if (ni >= 0 && ni < height && nj >= 0 && nj < width) g += w[c] * gz[ni * width + nj];
                    const T gzv = h[base + i * width + j] > 0 ? g : T(0);
                    gz[i * width + j] = gzv;
                    if (grad_x) grad_x[base + i * width + j] += gzv;
                    const int pi = i - dy, pj = j - dx;
                    if (grad_w && pi >= 0 && pi < height && pj >= 0 && pj < width)
                        grad_w[c] += gzv * h[base + pi * width + pj];
                }
        }
}

namespace {

// Recursive packet tree straight from the 2×2 Haar formulas.
template <typename T>
void packet_split_recursive(int h, int w, int level, const std::vector<T>& band,
                            std::vector<T>& out) {
    if (level == 0) {
        out.insert(out.end(), band.begin(), band.end());
        return;
    }
    const int hh = h / 2, hw = w / 2;
    std::vector<T> q[4];
    for (auto& v : q) v.resize(static_cast<std::size_t>(hh) * hw);
    for (int y = 0; y < hh; ++y)
        for (int x = 0; x < hw; ++x) {
            const T a = band[(2 * y) * w + 2 * x], b = band[(2 * y) * w + 2 * x + 1];
            const T c = band[(2 * y + 1) * w + 2 * x], d = band[(2 * y + 1) * w + 2 * x + 1];
            q[0][y * hw + x] = (a + b + c + d) / 2;
            q[1][y * hw + x] = (a - b + c - d) / 2;
            q[2][y * hw + x] = (a + b - c - d) / 2;
            q[3][y * hw + x] = (a - b - c + d) / 2;
        }
    for (auto& v : q) packet_split_recursive(hh, hw, level - 1, v, out);
}

template <typename T>
std::vector<T> packet_merge_recursive(int h, int w, int level, const T* bands) {
    const std::size_t n = static_cast<std::size_t>(h) * w;
    if (level == 0) return std::vector<T>(bands, bands + n);
    const int hh = h / 2, hw = w / 2;
    const std::size_t sub = n / 4;
    std::vector<T> q[4];
    for (int k = 0; k < 4; ++k) q[k] = packet_merge_recursive(hh, hw, level - 1, bands + k * sub);
    std::vector<T> out(n);
    for (int y = 0; y < hh; ++y)
        for (int x = 0; x < hw; ++x) {
            const T s = q[0][y * hw + x], u = q[1][y * hw + x], v = q[2][y * hw + x],
                    t = q[3][y * hw + x];
            out[(2 * y) * w + 2 * x] = (s + u + v + t) / 2;
            out[(2 * y) * w + 2 * x + 1] = (s - u + v - t) / 2;
            out[(2 * y + 1) * w + 2 * x] = (s + u - v - t) / 2;
            out[(2 * y + 1) * w + 2 * x + 1] = (s - u - v + t) / 2;
        }
    return out;
}

}  // namespace

template <typename T>
void haar_packet_forward(int planes, int height, int width, int level, const T* in, T* out) {
    const std::size_t hw = static_cast<std::size_t>(height) * width;
    for (int pl = 0; pl < planes; ++pl) {
        std::vector<T> band(in + pl * hw, in + (pl + 1) * hw), res;
        res.reserve(hw);
        packet_split_recursive(height, width, level, band, res);
        std::copy(res.begin(), res.end(), out + pl * hw);
    }
}

template <typename T>
void haar_packet_inverse(int planes, int height, int width, int level, const T* in, T* out) {
    const std::size_t hw = static_cast<std::size_t>(height) * width;
    for (int pl = 0; pl < planes; ++pl) {
        auto res = packet_merge_recursive(height, width, level, in + pl * hw);
        std::copy(res.begin(), res.end(), out + pl * hw);
    }
}

#define WDNET_INSTANTIATE(T)                                                                    \
    template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);    \
    template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*, \
                                     T*);                                                       \
    template void sweep_forward<T>(int, int, int, int, int, int, const T*, const T*, T*);       \
    template void sweep_backward<T>(int, int, int, int, int, int, const T*, const T*, const T*, \
                                    const T*, T*, T*);                                          \
    template void haar_packet_forward<T>(int, int, int, int, const T*, T*);                     \
    template void haar_packet_inverse<T>(int, int, int, int, const T*, T*);

WDNET_INSTANTIATE(float)
WDNET_INSTANTIATE(double)
#undef WDNET_INSTANTIATE

}  // namespace wdnet::kernels::reference
