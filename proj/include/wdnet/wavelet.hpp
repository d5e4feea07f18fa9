#pragma once

// Haar wavelet-packet transform and the RGB <-> subband-stack packing used
// as the network's input/output representation.
//
// Band order of a packed stack: the three all-low-pass bands (R, G, B), then
// every remaining band of R, of G, then of B. Within one colour the bands
// follow the depth-first packet tree, LL, HL, LH, HH at every node, where the
// first letter is the filter applied along a row (horizontal frequency) and
// the second the filter along a column.

#include <string>
#include <string_view>
#include <vector>

#include "wdnet/image.hpp"
#include "wdnet/tensor.hpp"

namespace wdnet {

inline constexpr std::string_view kBandLayout = "haar-packet/low3-first/color-major/dfs-v1";

struct WaveletConfig {
    int level = 2;
    void validate() const;
};

/// 3·4^level.
int band_count(int level);
/// 4^level.
int bands_per_channel(int level);

/// Labels of the packed bands in order, e.g. "R:LL.LL", "G:LL.LL", ...
std::vector<std::string> band_ordering(int level);

/// order[i] = index, in the colour-major raw packet output, of packed band i.
std::vector<int> packing_order(int level);
/// Inverse permutation of packing_order.
std::vector<int> unpacking_order(int level);

template <typename T>
struct SubbandStackT {
    int level = 2;
    /// B×(3·4^level)×(H/2^level)×(W/2^level)
    TensorT<T> bands;
    std::string layout{kBandLayout};
};
using SubbandStack = SubbandStackT<float>;

/// Per-channel packet transform without packing: B×C×H×W ->
/// B×(C·4^level)×h×w, channel c owning bands [c·4^level, (c+1)·4^level).
template <typename T>
TensorT<T> haar_packet(const TensorT<T>& x, int level);
template <typename T>
TensorT<T> haar_packet_inverse(const TensorT<T>& bands, int level);

/// RGB image (B×3×H×W, or 3×H×W) to packed subbands. Differentiable.
template <typename T>
SubbandStackT<T> fwt2(const TensorT<T>& image, const WaveletConfig& config = {});

/// Packed subbands back to B×3×H×W. Differentiable.
template <typename T>
TensorT<T> ifwt2(const SubbandStackT<T>& stack);

struct BandDifference {
    std::string label;
    double mse = 0.0;
    int height = 0;
    int width = 0;
    /// |fwt(gray(a)) - fwt(gray(b))| for this band, gray in [0,1].
    std::vector<double> magnitude;
};

struct SubbandDiffReport {
    int level = 2;
    std::vector<BandDifference> bands;

    /// "label<TAB>mse" lines preceded by a header.
    std::string table() const;
    /// 2^level × 2^level tiles of difference magnitudes scaled by the largest
    /// magnitude over all bands; all black when the images agree.
    Image8 grid() const;
};

/// Where two images differ in the packet domain of their gray levels.
SubbandDiffReport subband_diff_report(const Image8& a, const Image8& b,
                                      const WaveletConfig& config = {});

}  // namespace wdnet
