#include "wdnet/losses.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "wdnet/ops.hpp"

namespace wdnet {

LossWeights LossWeights::desk() {
    LossWeights w;
    w.lambda_perceptual = 0.0;
    return w;
}

void LossWeights::validate() const {
    const double all[] = {lambda_attention, lambda_l1, lambda_perceptual, lambda_wavelet,
                          gamma_low, gamma_high, alpha};
    for (double v : all) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error("loss weights must be finite and >= 0");
    }
    if (!(alpha > 1.0)) throw Error("detail loss alpha must be > 1");
    if (mask_threshold < 0 || mask_threshold > 255) throw Error("mask threshold must lie in [0, 255]");
}

MoireMask make_mask(const Image8& moire, const Image8& clean, int threshold) {
    if (!moire.same_size(clean)) throw Error("make_mask: image shapes differ");
    MoireMask m;
    m.width = moire.width;
    m.height = moire.height;
    m.values.resize(static_cast<std::size_t>(m.width) * m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            int diff = 0;
            for (int c = 0; c < moire.channels; ++c) {
                diff = std::max(diff, std::abs(int(moire.at(y, x, c)) - int(clean.at(y, x, c))));
            }
            m.values[static_cast<std::size_t>(y) * m.width + x] = diff > threshold ? 1 : 0;
        }
    return m;
}

Tensor mask_tensor(const std::vector<const MoireMask*>& masks) {
    if (masks.empty()) throw Error("mask_tensor: empty batch");
    const int h = masks.front()->height, w = masks.front()->width;
    std::vector<float> data;
    data.reserve(masks.size() * h * w);
    for (const auto* m : masks) {
        if (m->height != h || m->width != w) throw Error("mask_tensor: masks differ in size");
        for (auto v : m->values) data.push_back(static_cast<float>(v));
    }
    return Tensor::from_data({static_cast<int>(masks.size()), 1, h, w}, std::move(data));
}

namespace {

template <typename T>
void require_same(const TensorT<T>& a, const TensorT<T>& b, std::string_view op) {
    if (a.shape() != b.shape()) {
        throw Error(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                    to_string(b.shape()) + " differ");
    }
}

template <typename T>
void require_same_layout(const SubbandStackT<T>& a, const SubbandStackT<T>& b, std::string_view op) {
    if (a.level != b.level || a.layout != b.layout) {
        throw Error(std::string(op) + ": subband layouts differ");
    }
    require_same(a.bands, b.bands, op);
    if (a.bands.dim(1) != band_count(a.level)) {
        throw Error(std::string(op) + ": band count does not match level");
    }
}

}  // namespace

template <typename T>
TensorT<T> l1_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    require_same(pred, target, "l1_loss");
    const std::size_t n = pred.numel();
    double acc = 0;
    for (std::size_t q = 0; q < n; ++q) acc += std::abs(double(pred.data()[q]) - double(target.data()[q]));
    const T inv = T(1) / static_cast<T>(n);
    return make_result<T>("l1_loss", {1}, {static_cast<T>(acc / double(n))}, {pred, target},
                          [inv](Node<T>& self) {
                              const T* p = self.input_value(0);
                              const T* t = self.input_value(1);
                              T* gp = self.input_grad(0);
                              T* gt = self.input_grad(1);
                              const T g = self.grad[0] * inv;
                              const std::size_t n = self.inputs[0]->value.size();
                              for (std::size_t q = 0; q < n; ++q) {
                                  const T d = p[q] - t[q];
                                  const T s = d > 0 ? g : d < 0 ? -g : T(0);
                                  if (gp) gp[q] += s;
                                  if (gt) gt[q] -= s;
                              }
                          });
}

template <typename T>
TensorT<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    require_same(pred, target, "mse_loss");
    const std::size_t n = pred.numel();
    double acc = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const double d = double(pred.data()[q]) - double(target.data()[q]);
        acc += d * d;
    }
    const T inv = T(1) / static_cast<T>(n);
    return make_result<T>("mse_loss", {1}, {static_cast<T>(acc / double(n))}, {pred, target},
                          [inv](Node<T>& self) {
                              const T* p = self.input_value(0);
                              const T* t = self.input_value(1);
                              T* gp = self.input_grad(0);
                              T* gt = self.input_grad(1);
                              const T g = T(2) * self.grad[0] * inv;
                              const std::size_t n = self.inputs[0]->value.size();
                              for (std::size_t q = 0; q < n; ++q) {
                                  const T d = g * (p[q] - t[q]);
                                  if (gp) gp[q] += d;
                                  if (gt) gt[q] -= d;
                              }
                          });
}

template <typename T>
TensorT<T> wavelet_mse(const SubbandStackT<T>& pred, const SubbandStackT<T>& target,
                       const LossWeights& weights) {
    require_same_layout(pred, target, "wavelet_mse");
    const int batch = pred.bands.dim(0), bands = pred.bands.dim(1);
    const std::size_t hw = static_cast<std::size_t>(pred.bands.dim(2)) * pred.bands.dim(3);
    const T g_low = static_cast<T>(weights.gamma_low), g_high = static_cast<T>(weights.gamma_high);
    const T* p = pred.bands.data().data();
    const T* t = target.bands.data().data();
    double acc = 0;
    for (int n = 0; n < batch; ++n)
        for (int c = 0; c < bands; ++c) {
            double band = 0;
            const std::size_t base = (static_cast<std::size_t>(n) * bands + c) * hw;
            for (std::size_t q = 0; q < hw; ++q) {
                const double d = double(p[base + q]) - double(t[base + q]);
                band += d * d;
            }
            acc += (c < 3 ? g_low : g_high) * band;
        }
    const T inv_b = T(1) / static_cast<T>(batch);
    return make_result<T>(
        "wavelet_mse", {1}, {static_cast<T>(acc / batch)}, {pred.bands, target.bands},
        [batch, bands, hw, g_low, g_high, inv_b](Node<T>& self) {
            const T* p = self.input_value(0);
            const T* t = self.input_value(1);
            T* gp = self.input_grad(0);
            T* gt = self.input_grad(1);
            for (int n = 0; n < batch; ++n)
                for (int c = 0; c < bands; ++c) {
                    const T k = T(2) * (c < 3 ? g_low : g_high) * inv_b * self.grad[0];
                    const std::size_t base = (static_cast<std::size_t>(n) * bands + c) * hw;
                    for (std::size_t q = 0; q < hw; ++q) {
                        const T d = k * (p[base + q] - t[base + q]);
                        if (gp) gp[base + q] += d;
                        if (gt) gt[base + q] -= d;
                    }
                }
        });
}

template <typename T>
TensorT<T> detail_loss(const SubbandStackT<T>& pred, const SubbandStackT<T>& target, double alpha) {
    require_same_layout(pred, target, "detail_loss");
    const int batch = pred.bands.dim(0), bands = pred.bands.dim(1);
    const std::size_t hw = static_cast<std::size_t>(pred.bands.dim(2)) * pred.bands.dim(3);
    const T a = static_cast<T>(alpha);
    const T* p = pred.bands.data().data();
    const T* t = target.bands.data().data();
    double acc = 0;
    for (int n = 0; n < batch; ++n)
        for (int c = 3; c < bands; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * bands + c) * hw;
            for (std::size_t q = 0; q < hw; ++q) {
                const double v = alpha * double(t[base + q]) * t[base + q] - double(p[base + q]) * p[base + q];
                if (v > 0) acc += v;
            }
        }
    const T inv_b = T(1) / static_cast<T>(batch);
    return make_result<T>(
        "detail_loss", {1}, {static_cast<T>(acc / batch)}, {pred.bands, target.bands},
        [batch, bands, hw, a, inv_b](Node<T>& self) {
            const T* p = self.input_value(0);
            const T* t = self.input_value(1);
            T* gp = self.input_grad(0);
            T* gt = self.input_grad(1);
            const T g = T(2) * inv_b * self.grad[0];
            for (int n = 0; n < batch; ++n)
                for (int c = 3; c < bands; ++c) {
                    const std::size_t base = (static_cast<std::size_t>(n) * bands + c) * hw;
                    for (std::size_t q = 0; q < hw; ++q) {
                        const T pv = p[base + q], tv = t[base + q];
                        if (a * tv * tv - pv * pv <= 0) continue;
                        if (gp) gp[base + q] -= g * pv;
                        if (gt) gt[base + q] += g * a * tv;
                    }
                }
        });
}

template <typename T>
TensorT<T> attention_loss(const TensorT<T>& attention, const TensorT<T>& mask) {
    if (attention.rank() != 4 || mask.rank() != 4 || attention.dim(1) != 1 || mask.dim(1) != 1 ||
        attention.dim(0) != mask.dim(0)) {
        throw Error("attention_loss: expected B×1×h×w map and B×1×H×W mask, got " +
                    to_string(attention.shape()) + " and " + to_string(mask.shape()));
    }
    const int h = attention.dim(2), w = attention.dim(3);
    if (mask.dim(2) % h || mask.dim(3) % w || mask.dim(2) / h != mask.dim(3) / w) {
        throw Error("attention_loss: mask " + to_string(mask.shape()) +
                    " cannot be downsampled to " + to_string(attention.shape()));
    }
    return mse_loss(attention, downsample_avg(mask, mask.dim(2) / h));
}

template <typename T>
TensorT<T> perceptual_loss(const TensorT<T>& pred_rgb, const TensorT<T>& target_rgb,
                           const FeatureExtractor<T>& extractor) {
    if (!extractor) throw Error("perceptual_loss: no feature extractor configured");
    const TensorT<T> fp = extractor(pred_rgb);
    const TensorT<T> ft = extractor(target_rgb);
    if (fp.shape() != ft.shape()) throw Error("perceptual_loss: extractor output shapes differ");
    return mse_loss(fp, ft);
}

template <typename T>
FeatureExtractor<T> random_conv_extractor(std::uint64_t seed) {
    struct Layer {
        TensorT<T> weight, bias;
    };
    std::mt19937_64 rng(seed);
    std::vector<Layer> layers;
    const int chans[4] = {3, 8, 16, 16};
    for (int l = 0; l < 3; ++l) {
        const int in = chans[l], out = chans[l + 1];
        // He-uniform bound keeps activations at a stable scale.
        std::uniform_real_distribution<double> u(-std::sqrt(6.0 / (in * 9)), std::sqrt(6.0 / (in * 9)));
        std::vector<T> w(static_cast<std::size_t>(out) * in * 9);
        for (auto& v : w) v = static_cast<T>(u(rng));
        layers.push_back({TensorT<T>::from_data({out, in, 3, 3}, std::move(w)), TensorT<T>::zeros({out})});
    }
    return [layers](const TensorT<T>& x) {
        TensorT<T> h = x;
        for (const auto& l : layers) h = relu(conv2d(h, l.weight, l.bias, {1, 1, 1}));
        return h;
    };
}

double LossBreakdown::weighted_sum(const LossWeights& w) const {
    return w.lambda_attention * attention + w.lambda_l1 * l1 + w.lambda_perceptual * perceptual +
           w.lambda_wavelet * (wavelet_mse + detail);
}

std::string LossBreakdown::to_string() const {
    std::ostringstream os;
    os.precision(6);
    os << "total=" << total << " attention=" << attention << " l1=" << l1
       << " perceptual=" << perceptual << " wavelet_mse=" << wavelet_mse << " detail=" << detail;
    return os.str();
}

template <typename T>
TensorT<T> total_loss(const LossParts<T>& parts, const LossWeights& w) {
    TensorT<T> acc;
    auto accumulate = [&acc](const TensorT<T>& term, double weight) {
        if (!term.defined() || weight == 0.0) return;
        const TensorT<T> scaled = scale(term, static_cast<T>(weight));
        acc = acc.defined() ? add(acc, scaled) : scaled;
    };
    accumulate(parts.attention, w.lambda_attention);
    accumulate(parts.l1, w.lambda_l1);
    accumulate(parts.perceptual, w.lambda_perceptual);
    accumulate(parts.wavelet_mse, w.lambda_wavelet);
    accumulate(parts.detail, w.lambda_wavelet);
    return acc.defined() ? acc : TensorT<T>::scalar(T(0));
}

template <typename T>
LossBreakdown breakdown(const LossParts<T>& parts, const TensorT<T>& total) {
    auto v = [](const TensorT<T>& t) { return t.defined() ? static_cast<double>(t.item()) : 0.0; };
    LossBreakdown b;
    b.attention = v(parts.attention);
    b.l1 = v(parts.l1);
    b.perceptual = v(parts.perceptual);
    b.wavelet_mse = v(parts.wavelet_mse);
    b.detail = v(parts.detail);
    b.wavelet = b.wavelet_mse + b.detail;
    b.total = v(total);
    return b;
}

#define WDNET_INSTANTIATE(T)                                                                    \
    template TensorT<T> l1_loss<T>(const TensorT<T>&, const TensorT<T>&);                       \
    template TensorT<T> mse_loss<T>(const TensorT<T>&, const TensorT<T>&);                      \
    template TensorT<T> wavelet_mse<T>(const SubbandStackT<T>&, const SubbandStackT<T>&,        \
                                       const LossWeights&);                                     \
    template TensorT<T> detail_loss<T>(const SubbandStackT<T>&, const SubbandStackT<T>&, double); \
    template TensorT<T> attention_loss<T>(const TensorT<T>&, const TensorT<T>&);                \
    template TensorT<T> perceptual_loss<T>(const TensorT<T>&, const TensorT<T>&,                \
                                           const FeatureExtractor<T>&);                         \
    template FeatureExtractor<T> random_conv_extractor<T>(std::uint64_t);                       \
    template TensorT<T> total_loss<T>(const LossParts<T>&, const LossWeights&);                 \
    template LossBreakdown breakdown<T>(const LossParts<T>&, const TensorT<T>&);

WDNET_INSTANTIATE(float)
WDNET_INSTANTIATE(double)
#undef WDNET_INSTANTIATE

}  // namespace wdnet
