#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace tgr {

/// Interleaved float image, row-major H x W x C.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c = 3, float fill = 0.0f)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
    float& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool same_shape(const Image& o) const noexcept {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

/// 8-bit PNG; values are clamped to [0, 1]. Supports 1, 3 or 4 channels.
void write_png(const Image& image, const std::string& path);
/// Reads an 8-bit gray/RGB/RGBA PNG into [0, 1] floats, dropping alpha.
Image read_png(const std::string& path);

/// Turbo colormap lookup for t in [0, 1].
std::array<float, 3> turbo(float t);

/// Maps a single-channel image with values in [lo, hi] to RGB via turbo.
Image colorize(const Image& scalar, float lo, float hi);

/// Peak signal-to-noise ratio in dB for images in [0, 1]; +inf when equal.
double psnr(const Image& a, const Image& b);

} // namespace tgr
