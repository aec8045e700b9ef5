#include "tgr/image.hpp"

#include "tgr/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

namespace tgr {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw ValidationError(std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

std::uint8_t quantize(float v) {
    if (!(v > 0.0f)) return 0;
    if (v >= 1.0f) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0f));
}

} // namespace

void write_png(const Image& image, const std::string& path) {
    int color_type;
    switch (image.channels) {
    case 1: color_type = PNG_COLOR_TYPE_GRAY; break;
    case 3: color_type = PNG_COLOR_TYPE_RGB; break;
    case 4: color_type = PNG_COLOR_TYPE_RGBA; break;
    default: throw ValidationError("write_png: unsupported channel count " + std::to_string(image.channels));
    }
    if (image.width <= 0 || image.height <= 0 || image.data.size() != image.pixel_count() * image.channels)
        throw ValidationError("write_png: malformed image");

    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw ValidationError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw ValidationError("png: out of memory");
    }
    std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width) * image.channels);
    try {
        png_init_io(png, file.get());
        png_set_IHDR(png, info, image.width, image.height, 8, color_type, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int y = 0; y < image.height; ++y) {
            const float* src = image.data.data() + static_cast<std::size_t>(y) * row.size();
            std::transform(src, src + row.size(), row.begin(), quantize);
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw ValidationError("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw ValidationError("png: out of memory");
    }
    Image out;
    try {
        png_init_io(png, file.get());
        png_read_info(png, info);
        png_set_strip_16(png);
        png_set_packing(png);
        png_set_strip_alpha(png);
        const int ct = png_get_color_type(png, info);
        if (ct == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (ct == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
        png_read_update_info(png, info);
        const int channels = png_get_channels(png, info);
        out = Image(static_cast<int>(png_get_image_width(png, info)),
                    static_cast<int>(png_get_image_height(png, info)), channels);
        std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
        for (int y = 0; y < out.height; ++y) {
            png_read_row(png, row.data(), nullptr);
            float* dst = out.data.data() + static_cast<std::size_t>(y) * out.width * channels;
            for (std::size_t k = 0; k < static_cast<std::size_t>(out.width) * channels; ++k)
                dst[k] = row[k] / 255.0f;
        }
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

std::array<float, 3> turbo(float t) {
    // Polynomial fit of the Turbo colormap.
    const double x = std::clamp(static_cast<double>(t), 0.0, 1.0);
    const double x2 = x * x, x3 = x2 * x, x4 = x3 * x, x5 = x4 * x;
    const double r = 0.13572138 + 4.61539260 * x - 42.66032258 * x2 + 132.13108234 * x3 - 152.94239396 * x4 + 59.28637943 * x5;
    const double g = 0.09140261 + 2.19418839 * x + 4.84296658 * x2 - 14.18503333 * x3 + 4.27729857 * x4 + 2.82956604 * x5;
    const double b = 0.10667330 + 12.64194608 * x - 60.58204836 * x2 + 110.36276771 * x3 - 89.90310912 * x4 + 27.34824973 * x5;
    auto c = [](double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); };
    return {c(r), c(g), c(b)};
}

Image colorize(const Image& scalar, float lo, float hi) {
    if (scalar.channels != 1) throw ValidationError("colorize expects a single-channel image");
    Image out(scalar.width, scalar.height, 3);
    const float span = hi > lo ? hi - lo : 1.0f;
    for (std::size_t p = 0; p < scalar.pixel_count(); ++p) {
        const auto rgb = turbo((scalar.data[p] - lo) / span);
        std::copy(rgb.begin(), rgb.end(), out.data.begin() + static_cast<std::ptrdiff_t>(3 * p));
    }
    return out;
}

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ValidationError("psnr: image shapes differ");
    if (a.data.empty()) throw ValidationError("psnr: empty images");
    double se = 0;
    for (std::size_t k = 0; k < a.data.size(); ++k) {
        const double d = static_cast<double>(a.data[k]) - b.data[k];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

} // namespace tgr
