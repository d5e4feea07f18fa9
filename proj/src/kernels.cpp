#include "wdnet/kernels.hpp"

// Eigen's own GEMM threading would make results depend on the thread count;
// parallelism comes from the OpenMP loops below instead.
#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>
#include <omp.h>

#include <algorithm>
#include <cstring>
#include <vector>

namespace wdnet::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

bool is_pointwise(const ConvGeometry& g) {
    return g.k_h == 1 && g.k_w == 1 && g.stride == 1 && g.pad == 0;
}

// Valid output columns [lo, hi) for kernel column offset `off` so that
// ox*stride + off lands inside [0, in_w).
void valid_range(int off, int stride, int in_w, int out_w, int& lo, int& hi) {
    lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
    hi = in_w - off <= 0 ? 0 : (in_w - off - 1) / stride + 1;
    hi = std::min(hi, out_w);
    lo = std::min(lo, hi);
}

// Column matrix of output rows [oy0, oy1): row r = (ic, ky, kx), column =
// (oy - oy0) * out_w + ox.
template <typename T>
void im2col(const ConvGeometry& g, const T* in, int oy0, int oy1, T* col) {
    const int ow = g.out_w();
    const std::size_t p = static_cast<std::size_t>(oy1 - oy0) * ow;
    for (int ic = 0; ic < g.in_ch; ++ic) {
        const T* plane = in + static_cast<std::size_t>(ic) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.k_h; ++ky) {
            for (int kx = 0; kx < g.k_w; ++kx) {
                T* row = col + ((static_cast<std::size_t>(ic) * g.k_h + ky) * g.k_w + kx) * p;
                const int xoff = kx * g.dilation - g.pad;
                int lo, hi;
                valid_range(xoff, g.stride, g.in_w, ow, lo, hi);
                for (int oy = oy0; oy < oy1; ++oy) {
                    T* dst = row + static_cast<std::size_t>(oy - oy0) * ow;
                    const int iy = oy * g.stride - g.pad + ky * g.dilation;
                    if (iy < 0 || iy >= g.in_h) {
                        std::fill(dst, dst + ow, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
                    std::fill(dst, dst + lo, T(0));
                    if (g.stride == 1) {
                        std::memcpy(dst + lo, src + lo + xoff, sizeof(T) * (hi - lo));
                    } else {
                        for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + xoff];
                    }
                    std::fill(dst + hi, dst + ow, T(0));
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* in) {
    const int oh = g.out_h(), ow = g.out_w();
    const std::size_t p = static_cast<std::size_t>(oh) * ow;
    for (int ic = 0; ic < g.in_ch; ++ic) {
        T* plane = in + static_cast<std::size_t>(ic) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.k_h; ++ky) {
            for (int kx = 0; kx < g.k_w; ++kx) {
                const T* row = col + ((static_cast<std::size_t>(ic) * g.k_h + ky) * g.k_w + kx) * p;
                const int xoff = kx * g.dilation - g.pad;
                int lo, hi;
                valid_range(xoff, g.stride, g.in_w, ow, lo, hi);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky * g.dilation;
                    if (iy < 0 || iy >= g.in_h) continue;
                    const T* src = row + static_cast<std::size_t>(oy) * ow;
                    T* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
                    for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride + xoff] += src[ox];
                }
            }
        }
    }
}

// Output rows per im2col tile, sized so one column tile stays in L2.
int tile_rows(const ConvGeometry& g) {
    constexpr std::size_t kTileElems = 192 * 1024;
    const std::size_t k = static_cast<std::size_t>(g.in_ch) * g.k_h * g.k_w;
    const std::size_t per_row = k * static_cast<std::size_t>(g.out_w());
    return static_cast<int>(std::clamp<std::size_t>(kTileElems / std::max<std::size_t>(per_row, 1), 1,
                                                    static_cast<std::size_t>(g.out_h())));
}

template <typename T>
using StridedMat = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using StridedConstMat = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// One sample: out (OC×OH·OW) = W · cols(in) [+ b], tiled over output rows.
// `out` is overwritten, or accumulated into when `accumulate` is set.
template <typename T>
void conv_sample(const ConvGeometry& g, const T* in, const T* w, const T* b, T* out,
                 std::vector<T>& col, bool accumulate) {
    const int oh = g.out_h(), ow = g.out_w();
    const Eigen::Index k = static_cast<Eigen::Index>(g.in_ch) * g.k_h * g.k_w;
    const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
    MapConstMat<T> weights(w, g.out_ch, k);
    if (is_pointwise(g)) {
        MapMat<T> o(out, g.out_ch, p);
        if (accumulate) o.noalias() += weights * MapConstMat<T>(in, k, p);
        else o.noalias() = weights * MapConstMat<T>(in, k, p);
    } else {
        const int rows = tile_rows(g);
        col.resize(static_cast<std::size_t>(k) * rows * ow);
        for (int oy0 = 0; oy0 < oh; oy0 += rows) {
            const int oy1 = std::min(oh, oy0 + rows);
            const Eigen::Index cols = static_cast<Eigen::Index>(oy1 - oy0) * ow;
            im2col(g, in, oy0, oy1, col.data());
            StridedMat<T> o(out + static_cast<std::size_t>(oy0) * ow, g.out_ch, cols, Eigen::OuterStride<>(p));
            if (accumulate) o.noalias() += weights * MapConstMat<T>(col.data(), k, cols);
            else o.noalias() = weights * MapConstMat<T>(col.data(), k, cols);
        }
    }
    if (b) {
        MapMat<T> o(out, g.out_ch, p);
        for (int oc = 0; oc < g.out_ch; ++oc) o.row(oc).array() += b[oc];
    }
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }
void set_threads(int n) { omp_set_num_threads(std::max(1, n)); }

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* w, const T* b, T* out) {
    const std::size_t in_stride = static_cast<std::size_t>(g.in_ch) * g.in_h * g.in_w;
    const std::size_t out_stride = static_cast<std::size_t>(g.out_ch) * g.out_h() * g.out_w();
#pragma omp parallel
    {
        std::vector<T> col;
#pragma omp for schedule(static)
        for (int n = 0; n < g.batch; ++n) {
            conv_sample(g, in + n * in_stride, w, b, out + n * out_stride, col, false);
        }
    }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* in, const T* w, const T* grad_out,
                     T* grad_in, T* grad_w, T* grad_b) {
    const int oh = g.out_h(), ow = g.out_w();
    const Eigen::Index k = static_cast<Eigen::Index>(g.in_ch) * g.k_h * g.k_w;
    const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
    const std::size_t in_stride = static_cast<std::size_t>(g.in_ch) * g.in_h * g.in_w;
    const std::size_t out_stride = static_cast<std::size_t>(g.out_ch) * p;
    const std::size_t wsize = static_cast<std::size_t>(g.out_ch) * k;
    const bool pointwise = is_pointwise(g);
    MapConstMat<T> weights(w, g.out_ch, k);

    // With unit stride the input gradient is a convolution of grad_out with
    // the spatially flipped, channel-transposed kernel.
    const bool transposed_path = g.stride == 1 && !pointwise;
    ConvGeometry tg = g;
    std::vector<T> flipped;
    if (grad_in && transposed_path) {
        tg.in_ch = g.out_ch;
        tg.out_ch = g.in_ch;
        tg.in_h = oh;
        tg.in_w = ow;
        tg.pad = g.dilation * (g.k_h - 1) - g.pad;
        flipped.resize(wsize);
        for (int oc = 0; oc < g.out_ch; ++oc)
            for (int ic = 0; ic < g.in_ch; ++ic)
                for (int ky = 0; ky < g.k_h; ++ky)
                    for (int kx = 0; kx < g.k_w; ++kx)
                        flipped[((static_cast<std::size_t>(ic) * g.out_ch + oc) * g.k_h + (g.k_h - 1 - ky)) * g.k_w +
                                (g.k_w - 1 - kx)] = w[((static_cast<std::size_t>(oc) * g.in_ch + ic) * g.k_h + ky) * g.k_w + kx];
    }
    const bool same_pad_both = g.k_h == g.k_w && g.pad <= g.dilation * (g.k_h - 1);

    // Per-sample weight gradients, reduced in sample order afterwards.
    std::vector<T> partial_w(grad_w ? wsize * g.batch : 0);

#pragma omp parallel
    {
        std::vector<T> col, dcol;
#pragma omp for schedule(static)
        for (int n = 0; n < g.batch; ++n) {
            const T* go = grad_out + n * out_stride;
            if (grad_w) {
                MapMat<T> gw(partial_w.data() + n * wsize, g.out_ch, k);
                const T* src = in + n * in_stride;
                if (pointwise) {
                    gw.noalias() = MapConstMat<T>(go, g.out_ch, p) * MapConstMat<T>(src, k, p).transpose();
                } else {
                    gw.setZero();
                    const int rows = tile_rows(g);
                    col.resize(static_cast<std::size_t>(k) * rows * ow);
                    for (int oy0 = 0; oy0 < oh; oy0 += rows) {
                        const int oy1 = std::min(oh, oy0 + rows);
                        const Eigen::Index cols = static_cast<Eigen::Index>(oy1 - oy0) * ow;
                        im2col(g, src, oy0, oy1, col.data());
                        StridedConstMat<T> dout(go + static_cast<std::size_t>(oy0) * ow, g.out_ch, cols,
                                                Eigen::OuterStride<>(p));
                        gw.noalias() += dout * MapConstMat<T>(col.data(), k, cols).transpose();
                    }
                }
            }
            if (grad_in) {
                T* gi = grad_in + n * in_stride;
                if (pointwise) {
                    MapMat<T>(gi, k, p).noalias() += weights.transpose() * MapConstMat<T>(go, g.out_ch, p);
                } else if (transposed_path && same_pad_both) {
                    conv_sample(tg, go, flipped.data(), static_cast<const T*>(nullptr), gi, col, true);
                } else {
                    dcol.resize(static_cast<std::size_t>(k) * p);
                    MapMat<T>(dcol.data(), k, p).noalias() = weights.transpose() * MapConstMat<T>(go, g.out_ch, p);
                    col2im_add(g, dcol.data(), gi);
                }
            }
        }
    }

    if (grad_w) {
        for (int n = 0; n < g.batch; ++n) {
            const T* src = partial_w.data() + n * wsize;
            for (std::size_t i = 0; i < wsize; ++i) grad_w[i] += src[i];
        }
    }
    if (grad_b) {
        for (int n = 0; n < g.batch; ++n) {
            for (int oc = 0; oc < g.out_ch; ++oc) {
                const T* row = grad_out + n * out_stride + oc * p;
                T acc = 0;
                for (Eigen::Index i = 0; i < p; ++i) acc += row[i];
                grad_b[oc] += acc;
            }
        }
    }
}

template <typename T>
void sweep_forward(int batch, int channels, int height, int width, int dy, int dx, const T* x,
                   const T* w, T* h) {
    const int planes = batch * channels;
    const std::size_t hw = static_cast<std::size_t>(height) * width;
    const int i0 = dy >= 0 ? 0 : height - 1, di = dy >= 0 ? 1 : -1;
    const int j0 = dx >= 0 ? 0 : width - 1, dj = dx >= 0 ? 1 : -1;
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const T wc = w[pl % channels];
        const T* xp = x + pl * hw;
        T* hp = h + pl * hw;
        for (int a = 0, i = i0; a < height; ++a, i += di) {
            const int pi = i - dy;
            for (int c = 0, j = j0; c < width; ++c, j += dj) {
                const int pj = j - dx;
                T z = xp[i * width + j];
                if (pi >= 0 && pi < height && pj >= 0 && pj < width) z += wc * hp[pi * width + pj];
                hp[i * width + j] = z > T(0) ? z : T(0);
            }
        }
    }
}

template <typename T>
void sweep_backward(int batch, int channels, int height, int width, int dy, int dx, const T* x,
                    const T* w, const T* h, const T* grad_h, T* grad_x, T* grad_w) {
    (void)x;
    const int planes = batch * channels;
    const std::size_t hw = static_cast<std::size_t>(height) * width;
    // Reverse of the forward scan.
    const int i0 = dy >= 0 ? height - 1 : 0, di = dy >= 0 ? -1 : 1;
    const int j0 = dx >= 0 ? width - 1 : 0, dj = dx >= 0 ? -1 : 1;
    std::vector<T> partial_w(grad_w ? planes : 0, T(0));
#pragma omp parallel
    {
        std::vector<T> gz(hw);
#pragma omp for schedule(static)
        for (int pl = 0; pl < planes; ++pl) {
            const T wc = w[pl % channels];
            const T* hp = h + pl * hw;
            const T* gh = grad_h + pl * hw;
            T acc_w = 0;
            for (int a = 0, i = i0; a < height; ++a, i += di) {
                for (int c = 0, j = j0; c < width; ++c, j += dj) {
                    T g = gh[i * width + j];
                    const int ni = i + dy, nj = j + dx;
                    if (ni >= 0 && ni < height && nj >= 0 && nj < width) {
                        g += wc * gz[ni * width + nj];
                    }
                    const T gzv = hp[i * width + j] > T(0) ? g : T(0);
                    gz[i * width + j] = gzv;
                    const int pi = i - dy, pj = j - dx;
                    if (pi >= 0 && pi < height && pj >= 0 && pj < width) {
                        acc_w += gzv * hp[pi * width + pj];
                    }
                }
            }
            if (grad_x) {
                T* gx = grad_x + pl * hw;
                for (std::size_t q = 0; q < hw; ++q) gx[q] += gz[q];
            }
            if (grad_w) partial_w[pl] = acc_w;
        }
    }
    if (grad_w) {
        for (int pl = 0; pl < planes; ++pl) grad_w[pl % channels] += partial_w[pl];
    }
}

namespace {

// One packet level on a single band: split src (h×w) into four (h/2×w/2)
// bands written to dst[0..3].
template <typename T>
void haar_split(int h, int w, const T* src, T* dst) {
    const int hh = h / 2, hw = w / 2;
    const std::size_t q = static_cast<std::size_t>(hh) * hw;
    T* ll = dst;
    T* hl = dst + q;
    T* lh = dst + 2 * q;
    T* hh_ = dst + 3 * q;
    for (int y = 0; y < hh; ++y) {
        const T* r0 = src + static_cast<std::size_t>(2 * y) * w;
        const T* r1 = r0 + w;
        for (int x = 0; x < hw; ++x) {
            const T a = r0[2 * x], b = r0[2 * x + 1], c = r1[2 * x], d = r1[2 * x + 1];
            const std::size_t o = static_cast<std::size_t>(y) * hw + x;
            ll[o] = T(0.5) * ((a + b) + (c + d));
            hl[o] = T(0.5) * ((a - b) + (c - d));
            lh[o] = T(0.5) * ((a + b) - (c + d));
            hh_[o] = T(0.5) * ((a - b) - (c - d));
        }
    }
}

template <typename T>
void haar_merge(int h, int w, const T* src, T* dst) {
    const int hh = h / 2, hw = w / 2;
    const std::size_t q = static_cast<std::size_t>(hh) * hw;
    const T* ll = src;
    const T* hl = src + q;
    const T* lh = src + 2 * q;
    const T* hh_ = src + 3 * q;
    for (int y = 0; y < hh; ++y) {
        T* r0 = dst + static_cast<std::size_t>(2 * y) * w;
        T* r1 = r0 + w;
        for (int x = 0; x < hw; ++x) {
            const std::size_t o = static_cast<std::size_t>(y) * hw + x;
            const T s = ll[o], u = hl[o], v = lh[o], t = hh_[o];
            r0[2 * x] = T(0.5) * ((s + u) + (v + t));
            r0[2 * x + 1] = T(0.5) * ((s - u) + (v - t));
            r1[2 * x] = T(0.5) * ((s + u) - (v + t));
            r1[2 * x + 1] = T(0.5) * ((s - u) - (v - t));
        }
    }
}

}  // namespace

template <typename T>
void haar_packet_forward(int planes, int height, int width, int level, const T* in, T* out) {
    const std::size_t hw = static_cast<std::size_t>(height) * width;
#pragma omp parallel
    {
        std::vector<T> a(hw), b(hw);
#pragma omp for schedule(static)
        for (int pl = 0; pl < planes; ++pl) {
            std::copy(in + pl * hw, in + (pl + 1) * hw, a.begin());
            int h = height, w = width, bands = 1;
            for (int l = 0; l < level; ++l) {
                const std::size_t band = static_cast<std::size_t>(h) * w;
                T* dst = l + 1 == level ? out + pl * hw : b.data();
                for (int k = 0; k < bands; ++k) haar_split(h, w, a.data() + k * band, dst + k * band);
                if (l + 1 < level) std::swap(a, b);
                h /= 2;
                w /= 2;
                bands *= 4;
            }
            if (level == 0) std::copy(a.begin(), a.end(), out + pl * hw);
        }
    }
}

template <typename T>
void haar_packet_inverse(int planes, int height, int width, int level, const T* in, T* out) {
    const std::size_t hw = static_cast<std::size_t>(height) * width;
#pragma omp parallel
    {
        std::vector<T> a(hw), b(hw);
#pragma omp for schedule(static)
        for (int pl = 0; pl < planes; ++pl) {
            std::copy(in + pl * hw, in + (pl + 1) * hw, a.begin());
            int bands = 1;
            for (int l = 0; l < level; ++l) bands *= 4;
            for (int l = level; l > 0; --l) {
                const int h = height >> (l - 1), w = width >> (l - 1);
                const std::size_t band = static_cast<std::size_t>(h) * w;
                bands /= 4;
                T* dst = l == 1 ? out + pl * hw : b.data();
                for (int k = 0; k < bands; ++k) haar_merge(h, w, a.data() + k * band, dst + k * band);
                if (l > 1) std::swap(a, b);
            }
            if (level == 0) std::copy(a.begin(), a.end(), out + pl * hw);
        }
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

}  // namespace wdnet::kernels
