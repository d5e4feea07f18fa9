#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wdnet/tensor.hpp"

namespace wdnet {

/// 8-bit image, interleaved channels (1 = gray, 3 = RGB), row-major.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    Image8() = default;
    Image8(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

    std::uint8_t& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool same_size(const Image8& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    bool operator==(const Image8&) const = default;
};

/// Reads any 8/16-bit PNG and converts it to gray (channels=1) or RGB.
Image8 read_png(const std::filesystem::path& path, int channels = 3);
void write_png(const std::filesystem::path& path, const Image8& image);

/// C×H×W tensor scaled to [0,1], with a leading batch axis of 1.
Tensor to_tensor(const Image8& image);
/// Inverse of to_tensor for one batch item: clamp to [0,1], ×255, round.
Image8 from_tensor(const Tensor& t, int batch_index = 0);

/// ITU-R 601 luma, 0.299 R + 0.587 G + 0.114 B, in 8-bit units.
std::vector<double> luma(const Image8& image);

Image8 crop(const Image8& image, int x0, int y0, int width, int height);
Image8 center_crop(const Image8& image, int width, int height);
/// Bilinear resample (pixel-centre aligned).
Image8 resize(const Image8& image, int width, int height);

}  // namespace wdnet
