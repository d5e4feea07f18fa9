#pragma once

#include <functional>
#include <string>

#include "wdnet/image.hpp"
#include "wdnet/tensor.hpp"
#include "wdnet/wavelet.hpp"

namespace wdnet {

/// Weights of the total objective
///   L = λ_attention·L_a + λ_l1·L_l1 + λ_perceptual·L_p + λ_wavelet·(l_mse + l_detail)
/// with l_mse = γ_low·Σ_{low bands} ‖ĉ−c‖² + γ_high·Σ_{other bands} ‖ĉ−c‖².
struct LossWeights {
    double lambda_attention = 1.0;
    double lambda_l1 = 5.0;
    double lambda_perceptual = 10.0;
    double lambda_wavelet = 200.0;
    double gamma_low = 0.01;
    double gamma_high = 1.1;
    double alpha = 1.2;
    /// Mask threshold in 8-bit units; a pixel is moiré when the largest
    /// channel difference strictly exceeds it.
    int mask_threshold = 15;

    /// Published weights with the perceptual term disabled (no feature
    /// extractor ships with the toolkit).
    static LossWeights desk();
    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

/// Binary moiré mask, 1×H×W values in {0, 1}.
struct MoireMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;
    bool operator==(const MoireMask&) const = default;
};

MoireMask make_mask(const Image8& moire, const Image8& clean, int threshold = 15);
/// B×1×H×W float tensor of a batch of masks.
Tensor mask_tensor(const std::vector<const MoireMask*>& masks);

// Reductions: l1 and attention/perceptual terms are means over all elements;
// the two wavelet terms are sums over band elements, averaged over the batch.

template <typename T>
TensorT<T> l1_loss(const TensorT<T>& pred, const TensorT<T>& target);

template <typename T>
TensorT<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target);

template <typename T>
TensorT<T> wavelet_mse(const SubbandStackT<T>& pred, const SubbandStackT<T>& target,
                       const LossWeights& weights);

/// Σ over non-low bands of max(α·c² − ĉ², 0), c the target coefficient.
template <typename T>
TensorT<T> detail_loss(const SubbandStackT<T>& pred, const SubbandStackT<T>& target, double alpha);

/// Mean squared error between the attention map and the mask averaged down
/// to the map's resolution.
template <typename T>
TensorT<T> attention_loss(const TensorT<T>& attention, const TensorT<T>& mask);

template <typename T>
using FeatureExtractor = std::function<TensorT<T>(const TensorT<T>&)>;

template <typename T>
TensorT<T> perceptual_loss(const TensorT<T>& pred_rgb, const TensorT<T>& target_rgb,
                           const FeatureExtractor<T>& extractor);

/// Fixed-seed three-layer 3×3 conv + relu feature extractor (3→8→16→16).
/// Stands in for a pretrained network; parameters are constants.
template <typename T>
FeatureExtractor<T> random_conv_extractor(std::uint64_t seed);

template <typename T>
struct LossParts {
    TensorT<T> attention;
    TensorT<T> l1;
    TensorT<T> perceptual;
    TensorT<T> wavelet_mse;
    TensorT<T> detail;
};

/// Scalar values of every component, for logging.
struct LossBreakdown {
    double attention = 0;
    double l1 = 0;
    double perceptual = 0;
    double wavelet_mse = 0;
    double detail = 0;
    double wavelet = 0;
    double total = 0;

    /// λ-weighted sum recomputed from the components.
    double weighted_sum(const LossWeights& w) const;
    std::string to_string() const;
};

/// Weighted combination; undefined parts count as zero.
template <typename T>
TensorT<T> total_loss(const LossParts<T>& parts, const LossWeights& weights);

template <typename T>
LossBreakdown breakdown(const LossParts<T>& parts, const TensorT<T>& total);

}  // namespace wdnet
