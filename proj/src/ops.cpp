#include "wdnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wdnet/kernels.hpp"

namespace wdnet {

namespace {

void require_rank4(const Shape& s, std::string_view op) {
    if (s.size() != 4) {
        throw Error(std::string(op) + ": expected a B×C×H×W tensor, got " + to_string(s));
    }
}

// Index mapping for the binary ops: plain elementwise, or one operand with a
// single channel broadcast along C.
struct Broadcast {
    Shape out;
    bool a_bcast = false;
    bool b_bcast = false;
    std::size_t hw = 0;
    int channels = 0;

    std::size_t a_index(std::size_t q) const { return a_bcast ? squash(q) : q; }
    std::size_t b_index(std::size_t q) const { return b_bcast ? squash(q) : q; }
    std::size_t squash(std::size_t q) const {
        const std::size_t plane = q / hw;
        return (plane / channels) * hw + q % hw;
    }
};

Broadcast broadcast(const Shape& a, const Shape& b, std::string_view op) {
    Broadcast r;
    if (a == b) {
        r.out = a;
        return r;
    }
    const bool ok = a.size() == 4 && b.size() == 4 && a[0] == b[0] && a[2] == b[2] &&
                    a[3] == b[3] && (a[1] == 1 || b[1] == 1);
    if (!ok) {
        throw Error(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                    " are not broadcastable");
    }
    r.out = a[1] >= b[1] ? a : b;
    r.a_bcast = a[1] == 1 && b[1] != 1;
    r.b_bcast = b[1] == 1 && a[1] != 1;
    r.hw = static_cast<std::size_t>(a[2]) * a[3];
    r.channels = r.out[1];
    return r;
}

enum class BinaryKind { Add, Sub, Mul };

template <typename T>
TensorT<T> binary(const TensorT<T>& a, const TensorT<T>& b, BinaryKind kind, std::string_view op) {
    const Broadcast bc = broadcast(a.shape(), b.shape(), op);
    const std::size_t n = numel(bc.out);
    std::vector<T> out(n);
    const T* av = a.data().data();
    const T* bv = b.data().data();
    for (std::size_t q = 0; q < n; ++q) {
        const T x = av[bc.a_index(q)], y = bv[bc.b_index(q)];
        out[q] = kind == BinaryKind::Add ? x + y : kind == BinaryKind::Sub ? x - y : x * y;
    }
    return make_result<T>(op, bc.out, std::move(out), {a, b}, [bc, kind](Node<T>& self) {
        const std::size_t n = self.value.size();
        const T* g = self.grad.data();
        T* ga = self.input_grad(0);
        T* gb = self.input_grad(1);
        const T* av = self.input_value(0);
        const T* bv = self.input_value(1);
        for (std::size_t q = 0; q < n; ++q) {
            const std::size_t ia = bc.a_index(q), ib = bc.b_index(q);
            switch (kind) {
                case BinaryKind::Add:
                    if (ga) ga[ia] += g[q];
                    if (gb) gb[ib] += g[q];
                    break;
                case BinaryKind::Sub:
                    if (ga) ga[ia] += g[q];
                    if (gb) gb[ib] -= g[q];
                    break;
                case BinaryKind::Mul:
                    if (ga) ga[ia] += g[q] * bv[ib];
                    if (gb) gb[ib] += g[q] * av[ia];
                    break;
            }
        }
    });
}

}  // namespace

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& kernel, const TensorT<T>& bias,
                  Conv2dOptions options) {
    require_rank4(x.shape(), "conv2d");
    require_rank4(kernel.shape(), "conv2d kernel");
    if (options.stride <= 0 || options.dilation <= 0) {
        throw Error("conv2d: stride and dilation must be positive");
    }
    if (options.padding < 0) throw Error("conv2d: negative padding");
    if (kernel.dim(1) != x.dim(1)) {
        throw Error("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                    " input channels, input has " + std::to_string(x.dim(1)));
    }
    if (bias.defined() && (bias.numel() != static_cast<std::size_t>(kernel.dim(0)))) {
        throw Error("conv2d: bias length does not match output channels");
    }
    kernels::ConvGeometry g;
    g.batch = x.dim(0);
    g.in_ch = x.dim(1);
    g.in_h = x.dim(2);
    g.in_w = x.dim(3);
    g.out_ch = kernel.dim(0);
    g.k_h = kernel.dim(2);
    g.k_w = kernel.dim(3);
    g.stride = options.stride;
    g.dilation = options.dilation;
    g.pad = options.padding;
    if (g.out_h() <= 0 || g.out_w() <= 0) throw Error("conv2d: empty output for input " + to_string(x.shape()));
    Shape out_shape{g.batch, g.out_ch, g.out_h(), g.out_w()};
    std::vector<T> out(numel(out_shape));
    kernels::conv2d_forward<T>(g, x.data().data(), kernel.data().data(),
                               bias.defined() ? bias.data().data() : nullptr, out.data());
    std::vector<TensorT<T>> inputs{x, kernel};
    if (bias.defined()) inputs.push_back(bias);
    const bool has_bias = bias.defined();
    return make_result<T>("conv2d", std::move(out_shape), std::move(out), inputs,
                          [g, has_bias](Node<T>& self) {
                              kernels::conv2d_backward<T>(
                                  g, self.input_value(0), self.input_value(1), self.grad.data(),
                                  self.input_grad(0), self.input_grad(1),
                                  has_bias ? self.input_grad(2) : nullptr);
                          });
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    return binary(a, b, BinaryKind::Add, "add");
}
template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    return binary(a, b, BinaryKind::Sub, "sub");
}
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    return binary(a, b, BinaryKind::Mul, "mul");
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T factor) {
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= factor;
    return make_result<T>("scale", a.shape(), std::move(out), {a}, [factor](Node<T>& self) {
        T* ga = self.input_grad(0);
        for (std::size_t q = 0; q < self.grad.size(); ++q) ga[q] += factor * self.grad[q];
    });
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = v > T(0) ? v : T(0);
    return make_result<T>("relu", a.shape(), std::move(out), {a}, [](Node<T>& self) {
        T* ga = self.input_grad(0);
        const T* x = self.input_value(0);
        for (std::size_t q = 0; q < self.grad.size(); ++q) {
            if (x[q] > T(0)) ga[q] += self.grad[q];
        }
    });
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
    std::vector<T> out(a.numel());
    const auto x = a.data();
    // Kept strictly inside (0, 1) where the exact value would round to an endpoint.
    constexpr T lo = std::numeric_limits<T>::min(), hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
    for (std::size_t q = 0; q < out.size(); ++q) out[q] = std::clamp(T(1) / (T(1) + std::exp(-x[q])), lo, hi);
    return make_result<T>("sigmoid", a.shape(), std::move(out), {a}, [](Node<T>& self) {
        T* ga = self.input_grad(0);
        for (std::size_t q = 0; q < self.grad.size(); ++q) {
            const T s = self.value[q];
            ga[q] += self.grad[q] * s * (T(1) - s);
        }
    });
}

template <typename T>
TensorT<T> concat_channels(const std::vector<TensorT<T>>& parts) {
    if (parts.empty()) throw Error("concat_channels: no inputs");
    for (const auto& p : parts) require_rank4(p.shape(), "concat_channels");
    const Shape& s0 = parts.front().shape();
    int channels = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
            throw Error("concat_channels: " + to_string(s) + " does not match " + to_string(s0));
        }
        channels += s[1];
    }
    const std::size_t hw = static_cast<std::size_t>(s0[2]) * s0[3];
    const int batch = s0[0];
    Shape out_shape{batch, channels, s0[2], s0[3]};
    std::vector<T> out(numel(out_shape));
    std::vector<int> offsets;
    int off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const int c = p.dim(1);
        for (int n = 0; n < batch; ++n) {
            const T* src = p.data().data() + static_cast<std::size_t>(n) * c * hw;
            std::copy(src, src + c * hw, out.data() + (static_cast<std::size_t>(n) * channels + off) * hw);
        }
        off += c;
    }
    return make_result<T>("concat_channels", out_shape, std::move(out), parts,
                          [offsets, channels, hw, batch](Node<T>& self) {
                              for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                                  T* gi = self.input_grad(i);
                                  if (!gi) continue;
                                  const int c = self.inputs[i]->shape[1];
                                  for (int n = 0; n < batch; ++n) {
                                      const T* src = self.grad.data() +
                                                     (static_cast<std::size_t>(n) * channels + offsets[i]) * hw;
                                      T* dst = gi + static_cast<std::size_t>(n) * c * hw;
                                      for (std::size_t q = 0; q < c * hw; ++q) dst[q] += src[q];
                                  }
                              }
                          });
}

template <typename T>
TensorT<T> gather_channels(const TensorT<T>& x, const std::vector<int>& order) {
    require_rank4(x.shape(), "gather_channels");
    const int batch = x.dim(0), channels = x.dim(1);
    for (int c : order) {
        if (c < 0 || c >= channels) throw Error("gather_channels: channel index out of range");
    }
    if (order.empty()) throw Error("gather_channels: empty selection");
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    const int out_c = static_cast<int>(order.size());
    Shape out_shape{batch, out_c, x.dim(2), x.dim(3)};
    std::vector<T> out(numel(out_shape));
    for (int n = 0; n < batch; ++n)
        for (int i = 0; i < out_c; ++i) {
            const T* src = x.data().data() + (static_cast<std::size_t>(n) * channels + order[i]) * hw;
            std::copy(src, src + hw, out.data() + (static_cast<std::size_t>(n) * out_c + i) * hw);
        }
    return make_result<T>("gather_channels", out_shape, std::move(out), {x},
                          [order, batch, channels, out_c, hw](Node<T>& self) {
                              T* gx = self.input_grad(0);
                              for (int n = 0; n < batch; ++n)
                                  for (int i = 0; i < out_c; ++i) {
                                      const T* src = self.grad.data() + (static_cast<std::size_t>(n) * out_c + i) * hw;
                                      T* dst = gx + (static_cast<std::size_t>(n) * channels + order[i]) * hw;
                                      for (std::size_t q = 0; q < hw; ++q) dst[q] += src[q];
                                  }
                          });
}

template <typename T>
TensorT<T> slice_channels(const TensorT<T>& x, int begin, int count) {
    require_rank4(x.shape(), "slice_channels");
    if (begin < 0 || count <= 0 || begin + count > x.dim(1)) {
        throw Error("slice_channels: range [" + std::to_string(begin) + ", " +
                    std::to_string(begin + count) + ") outside " + std::to_string(x.dim(1)) +
                    " channels");
    }
    std::vector<int> order(count);
    for (int i = 0; i < count; ++i) order[i] = begin + i;
    return gather_channels(x, order);
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw Error("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_result<T>("reshape", std::move(shape), std::move(out), {x}, [](Node<T>& self) {
        T* gx = self.input_grad(0);
        for (std::size_t q = 0; q < self.grad.size(); ++q) gx[q] += self.grad[q];
    });
}

template <typename T>
TensorT<T> downsample_avg(const TensorT<T>& x, int factor) {
    require_rank4(x.shape(), "downsample_avg");
    if (factor <= 0) throw Error("downsample_avg: factor must be positive");
    const int h = x.dim(2), w = x.dim(3);
    if (h % factor || w % factor) {
        throw Error("downsample_avg: " + std::to_string(h) + "x" + std::to_string(w) +
                    " is not divisible by " + std::to_string(factor));
    }
    const int oh = h / factor, ow = w / factor, planes = x.dim(0) * x.dim(1);
    Shape out_shape{x.dim(0), x.dim(1), oh, ow};
    std::vector<T> out(numel(out_shape), T(0));
    const T inv = T(1) / T(factor * factor);
    const T* xv = x.data().data();
    for (int p = 0; p < planes; ++p)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                T acc = 0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        acc += xv[(static_cast<std::size_t>(p) * h + oy * factor + dy) * w + ox * factor + dx];
                out[(static_cast<std::size_t>(p) * oh + oy) * ow + ox] = acc * inv;
            }
    return make_result<T>("downsample_avg", out_shape, std::move(out), {x},
                          [factor, planes, h, w, oh, ow, inv](Node<T>& self) {
                              T* gx = self.input_grad(0);
                              for (int p = 0; p < planes; ++p)
                                  for (int y = 0; y < h; ++y)
                                      for (int xx = 0; xx < w; ++xx)
                                          gx[(static_cast<std::size_t>(p) * h + y) * w + xx] +=
                                              inv * self.grad[(static_cast<std::size_t>(p) * oh + y / factor) * ow + xx / factor];
                          });
}

template <typename T>
TensorT<T> sum(const TensorT<T>& x) {
    double acc = 0;
    for (T v : x.data()) acc += v;
    return make_result<T>("sum", {1}, {static_cast<T>(acc)}, {x}, [](Node<T>& self) {
        T* gx = self.input_grad(0);
        const std::size_t n = self.inputs[0]->value.size();
        for (std::size_t q = 0; q < n; ++q) gx[q] += self.grad[0];
    });
}

template <typename T>
TensorT<T> mean(const TensorT<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

Step step_of(Direction d) {
    switch (d) {
        case Direction::East: return {0, 1};
        case Direction::West: return {0, -1};
        case Direction::South: return {1, 0};
        case Direction::North: return {-1, 0};
        case Direction::SouthEast: return {1, 1};
        case Direction::SouthWest: return {1, -1};
        case Direction::NorthEast: return {-1, 1};
        case Direction::NorthWest: return {-1, -1};
    }
    return {};
}

std::string_view name_of(Direction d) {
    switch (d) {
        case Direction::East: return "E";
        case Direction::West: return "W";
        case Direction::South: return "S";
        case Direction::North: return "N";
        case Direction::SouthEast: return "SE";
        case Direction::SouthWest: return "SW";
        case Direction::NorthEast: return "NE";
        case Direction::NorthWest: return "NW";
    }
    return "?";
}

std::vector<Direction> compass(int count) {
    if (count == 4) return {Direction::East, Direction::West, Direction::South, Direction::North};
    if (count == 8) {
        return {Direction::East,      Direction::West,      Direction::South,     Direction::North,
                Direction::SouthEast, Direction::SouthWest, Direction::NorthEast, Direction::NorthWest};
    }
    throw Error("direction count must be 4 or 8, got " + std::to_string(count));
}

template <typename T>
TensorT<T> directional_sweep(const TensorT<T>& x, Step step, const TensorT<T>& weight) {
    require_rank4(x.shape(), "directional_sweep");
    if (step.dy == 0 && step.dx == 0) throw Error("directional_sweep: zero direction vector");
    if (std::abs(step.dy) > 1 || std::abs(step.dx) > 1) {
        throw Error("directional_sweep: direction must be a unit grid step");
    }
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (weight.numel() != static_cast<std::size_t>(c)) {
        throw Error("directional_sweep: expected " + std::to_string(c) + " recurrent weights");
    }
    std::vector<T> out(x.numel());
    kernels::sweep_forward<T>(b, c, h, w, step.dy, step.dx, x.data().data(), weight.data().data(),
                              out.data());
    return make_result<T>("directional_sweep", x.shape(), std::move(out), {x, weight},
                          [b, c, h, w, step](Node<T>& self) {
                              kernels::sweep_backward<T>(b, c, h, w, step.dy, step.dx,
                                                         self.input_value(0), self.input_value(1),
                                                         self.value.data(), self.grad.data(),
                                                         self.input_grad(0), self.input_grad(1));
                          });
}

#define WDNET_INSTANTIATE(T)                                                                         \
    template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,          \
                                  Conv2dOptions);                                                    \
    template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                               \
    template TensorT<T> sub<T>(const TensorT<T>&, const TensorT<T>&);                               \
    template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);                               \
    template TensorT<T> scale<T>(const TensorT<T>&, T);                                              \
    template TensorT<T> relu<T>(const TensorT<T>&);                                                  \
    template TensorT<T> sigmoid<T>(const TensorT<T>&);                                               \
    template TensorT<T> concat_channels<T>(const std::vector<TensorT<T>>&);                          \
    template TensorT<T> slice_channels<T>(const TensorT<T>&, int, int);                              \
    template TensorT<T> gather_channels<T>(const TensorT<T>&, const std::vector<int>&);              \
    template TensorT<T> reshape<T>(const TensorT<T>&, Shape);                                       \
    template TensorT<T> downsample_avg<T>(const TensorT<T>&, int);                                   \
    template TensorT<T> sum<T>(const TensorT<T>&);                                                   \
    template TensorT<T> mean<T>(const TensorT<T>&);                                                  \
    template TensorT<T> directional_sweep<T>(const TensorT<T>&, Step, const TensorT<T>&);

WDNET_INSTANTIATE(float)
WDNET_INSTANTIATE(double)
#undef WDNET_INSTANTIATE

}  // namespace wdnet
