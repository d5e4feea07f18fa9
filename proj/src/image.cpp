#include "wdnet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace wdnet {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image8 read_png(const std::filesystem::path& path, int channels) {
    if (channels != 1 && channels != 3) throw Error("read_png: channels must be 1 or 3");
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw Error("cannot open image " + path.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8)) {
        throw Error("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("libpng initialisation failed");
    }
    Image8 img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("corrupt PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    const bool gray_src = color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA;
    if (channels == 3 && gray_src) png_set_gray_to_rgb(png);
    if (channels == 1 && !gray_src) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = channels;
    if (static_cast<int>(png_get_channels(png, info)) != channels) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("unsupported PNG layout: " + path.string());
    }
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * channels);
    rows.resize(img.height);
    for (int y = 0; y < img.height; ++y) {
        rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
    if (image.channels != 1 && image.channels != 3) throw Error("write_png: unsupported channel count");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw Error("cannot write image " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(image.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("failed writing PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, image.width, image.height, 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y) {
        rows[y] = const_cast<png_bytep>(image.pixels.data() +
                                        static_cast<std::size_t>(y) * image.width * image.channels);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor to_tensor(const Image8& image) {
    const int c = image.channels, h = image.height, w = image.width;
    std::vector<float> data(static_cast<std::size_t>(c) * h * w);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                data[(static_cast<std::size_t>(ch) * h + y) * w + x] = image.at(y, x, ch) / 255.0f;
    return Tensor::from_data({1, c, h, w}, std::move(data));
}

Image8 from_tensor(const Tensor& t, int batch_index) {
    if (t.rank() != 4) throw Error("from_tensor: expected B×C×H×W, got " + to_string(t.shape()));
    const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
    if (c != 1 && c != 3) throw Error("from_tensor: channel count must be 1 or 3");
    Image8 img(w, h, c);
    const float* src = t.data().data() + static_cast<std::size_t>(batch_index) * c * h * w;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float v = std::clamp(src[(static_cast<std::size_t>(ch) * h + y) * w + x], 0.0f, 1.0f);
                img.at(y, x, ch) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    return img;
}

std::vector<double> luma(const Image8& image) {
    std::vector<double> out(static_cast<std::size_t>(image.width) * image.height);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            double v;
            if (image.channels == 1) {
                v = image.at(y, x, 0);
            } else {
                v = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
            }
            out[static_cast<std::size_t>(y) * image.width + x] = v;
        }
    return out;
}

Image8 crop(const Image8& image, int x0, int y0, int width, int height) {
    if (x0 < 0 || y0 < 0 || width <= 0 || height <= 0 || x0 + width > image.width ||
        y0 + height > image.height) {
        throw Error("crop window exceeds the " + std::to_string(image.width) + "x" +
                    std::to_string(image.height) + " image");
    }
    Image8 out(width, height, image.channels);
    const std::size_t row = static_cast<std::size_t>(width) * image.channels;
    for (int y = 0; y < height; ++y) {
        const auto* src = image.pixels.data() +
                          (static_cast<std::size_t>(y0 + y) * image.width + x0) * image.channels;
        std::copy(src, src + row, out.pixels.data() + y * row);
    }
    return out;
}

Image8 center_crop(const Image8& image, int width, int height) {
    return crop(image, (image.width - width) / 2, (image.height - height) / 2, width, height);
}

Image8 resize(const Image8& image, int width, int height) {
    if (width <= 0 || height <= 0) throw Error("resize: target size must be positive");
    Image8 out(width, height, image.channels);
    const double sx = static_cast<double>(image.width) / width;
    const double sy = static_cast<double>(image.height) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
        const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, image.height - 1);
        const double ty = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
            const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, image.width - 1);
            const double tx = fx - x0;
            for (int c = 0; c < image.channels; ++c) {
                const double top = image.at(y0, x0, c) * (1 - tx) + image.at(y0, x1, c) * tx;
                const double bot = image.at(y1, x0, c) * (1 - tx) + image.at(y1, x1, c) * tx;
                out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bot * ty));
            }
        }
    }
    return out;
}

}  // namespace wdnet
