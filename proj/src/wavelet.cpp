#include "wdnet/wavelet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wdnet/kernels.hpp"
#include "wdnet/ops.hpp"

namespace wdnet {

void WaveletConfig::validate() const {
    if (level < 1 || level > 3) {
        throw Error("wavelet level must be 1, 2 or 3, got " + std::to_string(level));
    }
}

int bands_per_channel(int level) { return 1 << (2 * level); }
int band_count(int level) { return 3 * bands_per_channel(level); }

namespace {

std::string packet_path(int index, int level) {
    static const char* names[4] = {"LL", "HL", "LH", "HH"};
    std::string s;
    for (int l = level - 1; l >= 0; --l) {
        if (!s.empty()) s += '.';
        s += names[(index >> (2 * l)) & 3];
    }
    return s;
}

void require_divisible(int h, int w, int level, std::string_view op) {
    const int f = 1 << level;
    if (h % f || w % f) {
        throw Error(std::string(op) + ": image size " + std::to_string(w) + "x" + std::to_string(h) +
                    " is not divisible by " + std::to_string(f));
    }
}

}  // namespace

std::vector<int> packing_order(int level) {
    const int per = bands_per_channel(level);
    std::vector<int> order;
    order.reserve(3 * per);
    for (int c = 0; c < 3; ++c) order.push_back(c * per);
    for (int c = 0; c < 3; ++c)
        for (int k = 1; k < per; ++k) order.push_back(c * per + k);
    return order;
}

std::vector<int> unpacking_order(int level) {
    const auto fwd = packing_order(level);
    std::vector<int> inv(fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = static_cast<int>(i);
    return inv;
}

std::vector<std::string> band_ordering(int level) {
    WaveletConfig{level}.validate();
    static const char* colors[3] = {"R", "G", "B"};
    const int per = bands_per_channel(level);
    std::vector<std::string> labels;
    for (int raw : packing_order(level)) {
        labels.push_back(std::string(colors[raw / per]) + ":" + packet_path(raw % per, level));
    }
    return labels;
}

template <typename T>
TensorT<T> haar_packet(const TensorT<T>& x, int level) {
    if (x.rank() != 4) throw Error("haar_packet: expected B×C×H×W, got " + to_string(x.shape()));
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require_divisible(h, w, level, "haar_packet");
    const int per = bands_per_channel(level);
    Shape out_shape{b, c * per, h >> level, w >> level};
    std::vector<T> out(x.numel());
    kernels::haar_packet_forward<T>(b * c, h, w, level, x.data().data(), out.data());
    return make_result<T>("haar_packet", out_shape, std::move(out), {x},
                          [b, c, h, w, level](Node<T>& self) {
                              // Orthonormal: the adjoint is the inverse.
                              std::vector<T> tmp(self.grad.size());
                              kernels::haar_packet_inverse<T>(b * c, h, w, level, self.grad.data(),
                                                              tmp.data());
                              T* gx = self.input_grad(0);
                              for (std::size_t q = 0; q < tmp.size(); ++q) gx[q] += tmp[q];
                          });
}

template <typename T>
TensorT<T> haar_packet_inverse(const TensorT<T>& bands, int level) {
    if (bands.rank() != 4) {
        throw Error("haar_packet_inverse: expected B×C×h×w, got " + to_string(bands.shape()));
    }
    const int per = bands_per_channel(level);
    if (bands.dim(1) % per) {
        throw Error("haar_packet_inverse: " + std::to_string(bands.dim(1)) +
                    " bands is not a multiple of " + std::to_string(per));
    }
    const int b = bands.dim(0), c = bands.dim(1) / per;
    const int h = bands.dim(2) << level, w = bands.dim(3) << level;
    Shape out_shape{b, c, h, w};
    std::vector<T> out(bands.numel());
    kernels::haar_packet_inverse<T>(b * c, h, w, level, bands.data().data(), out.data());
    return make_result<T>("haar_packet_inverse", out_shape, std::move(out), {bands},
                          [b, c, h, w, level](Node<T>& self) {
                              std::vector<T> tmp(self.grad.size());
                              kernels::haar_packet_forward<T>(b * c, h, w, level, self.grad.data(),
                                                              tmp.data());
                              T* gx = self.input_grad(0);
                              for (std::size_t q = 0; q < tmp.size(); ++q) gx[q] += tmp[q];
                          });
}

template <typename T>
SubbandStackT<T> fwt2(const TensorT<T>& image, const WaveletConfig& config) {
    config.validate();
    TensorT<T> x = image;
    if (image.rank() == 3) x = reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
    if (x.rank() != 4 || x.dim(1) != 3) {
        throw Error("fwt2: expected a 3-channel image, got " + to_string(image.shape()));
    }
    require_divisible(x.dim(2), x.dim(3), config.level, "fwt2");
    SubbandStackT<T> out;
    out.level = config.level;
    out.bands = gather_channels(haar_packet(x, config.level), packing_order(config.level));
    return out;
}

template <typename T>
TensorT<T> ifwt2(const SubbandStackT<T>& stack) {
    WaveletConfig{stack.level}.validate();
    if (stack.layout != kBandLayout) throw Error("ifwt2: unknown band layout '" + stack.layout + "'");
    if (stack.bands.rank() != 4 || stack.bands.dim(1) != band_count(stack.level)) {
        throw Error("ifwt2: expected " + std::to_string(band_count(stack.level)) +
                    " bands for level " + std::to_string(stack.level) + ", got shape " +
                    to_string(stack.bands.shape()));
    }
    return haar_packet_inverse(gather_channels(stack.bands, unpacking_order(stack.level)),
                               stack.level);
}

std::string SubbandDiffReport::table() const {
    std::ostringstream os;
    os << "band\tmse\n";
    os.precision(8);
    for (const auto& b : bands) os << b.label << '\t' << b.mse << '\n';
    return os.str();
}

Image8 SubbandDiffReport::grid() const {
    if (bands.empty()) return {};
    const int side = 1 << level;
    const int h = bands.front().height, w = bands.front().width;
    double peak = 0.0;
    for (const auto& b : bands)
        for (double v : b.magnitude) peak = std::max(peak, v);
    Image8 img(w * side, h * side, 1);
    if (peak <= 0.0) return img;
    for (std::size_t k = 0; k < bands.size(); ++k) {
        const int ty = static_cast<int>(k) / side, tx = static_cast<int>(k) % side;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double v = bands[k].magnitude[static_cast<std::size_t>(y) * w + x] / peak;
                img.at(ty * h + y, tx * w + x, 0) = static_cast<std::uint8_t>(std::lround(255.0 * v));
            }
    }
    return img;
}

SubbandDiffReport subband_diff_report(const Image8& a, const Image8& b, const WaveletConfig& config) {
    config.validate();
    if (a.width != b.width || a.height != b.height) {
        throw Error("subband_diff_report: image sizes differ (" + std::to_string(a.width) + "x" +
                    std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                    std::to_string(b.height) + ")");
    }
    require_divisible(a.height, a.width, config.level, "subband_diff_report");
    auto gray_tensor = [](const Image8& img) {
        auto g = luma(img);
        for (auto& v : g) v /= 255.0;
        return Tensor64::from_data({1, 1, img.height, img.width}, std::move(g));
    };
    const auto ba = haar_packet(gray_tensor(a), config.level);
    const auto bb = haar_packet(gray_tensor(b), config.level);
    const int per = bands_per_channel(config.level);
    const int h = a.height >> config.level, w = a.width >> config.level;
    const std::size_t n = static_cast<std::size_t>(h) * w;

    SubbandDiffReport report;
    report.level = config.level;
    for (int k = 0; k < per; ++k) {
        BandDifference d;
        d.label = packet_path(k, config.level);
        d.height = h;
        d.width = w;
        d.magnitude.resize(n);
        double acc = 0.0;
        for (std::size_t q = 0; q < n; ++q) {
            const double diff = ba.data()[k * n + q] - bb.data()[k * n + q];
            d.magnitude[q] = std::abs(diff);
            acc += diff * diff;
        }
        d.mse = acc / static_cast<double>(n);
        report.bands.push_back(std::move(d));
    }
    return report;
}

#define WDNET_INSTANTIATE(T)                                                        \
    template TensorT<T> haar_packet<T>(const TensorT<T>&, int);                     \
    template TensorT<T> haar_packet_inverse<T>(const TensorT<T>&, int);             \
    template SubbandStackT<T> fwt2<T>(const TensorT<T>&, const WaveletConfig&);     \
    template TensorT<T> ifwt2<T>(const SubbandStackT<T>&);

WDNET_INSTANTIATE(float)
WDNET_INSTANTIATE(double)
#undef WDNET_INSTANTIATE

}  // namespace wdnet
