#include "tgr/rasterizer.hpp"

#include "raster_common.hpp"
#include "tgr/error.hpp"
#include "tgr/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace tgr {

namespace detail {

void check_camera(const Camera& camera) { camera.validate(); }

void gather_payload(const GaussianScene& scene, ChannelSet channels, std::vector<float>& out) {
    const std::size_t dim = channels.payload_dim();
    out.assign(scene.size() * dim, 0.0f);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        float* row = out.data() + i * dim;
        if (channels.color) {
            for (int c = 0; c < 3; ++c) row[c] = scene.colors[i][c];
            row += 3;
        }
        if (channels.feature) {
            const auto l = scene.lang_of(i);
            std::copy(l.begin(), l.end(), row);
        }
    }
}

TileBins bin_tiles(const std::vector<ProjectedGaussian>& sorted, const Camera& camera,
                   const RasterSettings& settings) {
    TileBins bins;
    const int ts = settings.tile_size;
    bins.tiles_x = (camera.width + ts - 1) / ts;
    bins.tiles_y = (camera.height + ts - 1) / ts;
    const std::size_t tile_count = static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y;

    auto tile_range = [&](const ProjectedGaussian& g, int& x0, int& x1, int& y0, int& y1) {
        x0 = std::clamp(static_cast<int>(std::floor((g.mean2d.x() - g.radius) / ts)), 0, bins.tiles_x - 1);
        x1 = std::clamp(static_cast<int>(std::floor((g.mean2d.x() + g.radius) / ts)), 0, bins.tiles_x - 1);
        y0 = std::clamp(static_cast<int>(std::floor((g.mean2d.y() - g.radius) / ts)), 0, bins.tiles_y - 1);
        y1 = std::clamp(static_cast<int>(std::floor((g.mean2d.y() + g.radius) / ts)), 0, bins.tiles_y - 1);
    };

    std::vector<std::size_t> counts(tile_count, 0);
    for (const ProjectedGaussian& g : sorted) {
        int x0, x1, y0, y1;
        tile_range(g, x0, x1, y0, y1);
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx) ++counts[static_cast<std::size_t>(ty) * bins.tiles_x + tx];
    }
    bins.offsets.assign(tile_count + 1, 0);
    for (std::size_t t = 0; t < tile_count; ++t) bins.offsets[t + 1] = bins.offsets[t] + counts[t];
    bins.entries.resize(bins.offsets.back());
    std::vector<std::size_t> cursor(bins.offsets.begin(), bins.offsets.end() - 1);
    // Walking the depth-sorted list keeps every tile list sorted.
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        int x0, x1, y0, y1;
        tile_range(sorted[k], x0, x1, y0, y1);
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx)
                bins.entries[cursor[static_cast<std::size_t>(ty) * bins.tiles_x + tx]++] =
                    static_cast<std::uint32_t>(k);
    }
    return bins;
}

} // namespace detail

double blend_kernel(double d2, double cutoff_sigma) { return detail::kernel(d2, cutoff_sigma); }

double blend_kernel_derivative(double d2, double cutoff_sigma) {
    return detail::kernel_derivative(d2, cutoff_sigma);
}

std::vector<ProjectedGaussian> project(const GaussianScene& scene, const Camera& camera,
                                       const RasterSettings& settings) {
    detail::check_camera(camera);
    std::vector<ProjectedGaussian> out;
    out.reserve(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto p = detail::project_one<double>(scene, i, camera, settings, true);
        if (!p.visible) continue;
        ProjectedGaussian g;
        g.index = static_cast<std::uint32_t>(i);
        g.mean2d = {static_cast<float>(p.mean_x), static_cast<float>(p.mean_y)};
        g.cov2d = {static_cast<float>(p.cov_xx), static_cast<float>(p.cov_xy),
                   static_cast<float>(p.cov_yy)};
        g.conic = {static_cast<float>(p.conic_xx), static_cast<float>(p.conic_xy),
                   static_cast<float>(p.conic_yy)};
        g.depth = p.cam.z();
        g.opacity = static_cast<float>(p.opacity);
        g.radius = static_cast<float>(p.radius);
        out.push_back(g);
    }
    std::sort(out.begin(), out.end(), [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
        return a.depth != b.depth ? a.depth < b.depth : a.index < b.index;
    });
    return out;
}

using detail::KernelConstants;
using detail::pixel_alpha;

RenderOutput render(const GaussianScene& scene, const Camera& camera, ChannelSet channels,
                    const RasterSettings& settings) {
    const std::vector<ProjectedGaussian> sorted = project(scene, camera, settings);
    const detail::TileBins bins = detail::bin_tiles(sorted, camera, settings);

    std::vector<float> payload;
    detail::gather_payload(scene, channels, payload);
    const std::size_t dim = channels.payload_dim();

    RenderOutput out;
    out.width = camera.width;
    out.height = camera.height;
    out.channels = channels;
    const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
    if (channels.color) out.color.assign(pixels * 3, 0.0f);
    if (channels.feature) out.feature.assign(pixels * kLangDim, 0.0f);
    out.alpha.assign(pixels, 0.0f);
    out.depth.assign(pixels, 0.0f);

    const KernelConstants kc(settings);
    const int ts = settings.tile_size;
    const std::size_t tile_count = static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y;

    parallel_for(tile_count, [&](std::size_t tile) {
        const int tx = static_cast<int>(tile % bins.tiles_x);
        const int ty = static_cast<int>(tile / bins.tiles_x);
        const std::size_t begin = bins.offsets[tile], end = bins.offsets[tile + 1];
        std::vector<float> acc(dim);
        for (int y = ty * ts; y < std::min(camera.height, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(camera.width, (tx + 1) * ts); ++x) {
                std::fill(acc.begin(), acc.end(), 0.0f);
                float transmittance = 1.0f;
                float alpha_sum = 0.0f;
                float depth_sum = 0.0f;
                const float px = static_cast<float>(x), py = static_cast<float>(y);
                for (std::size_t e = begin; e < end; ++e) {
                    const ProjectedGaussian& g = sorted[bins.entries[e]];
                    const float alpha = pixel_alpha(g, px, py, kc, settings.alpha_max);
                    if (alpha <= 0.0f) continue;
                    const float w = alpha * transmittance;
                    const float* row = payload.data() + static_cast<std::size_t>(g.index) * dim;
                    for (std::size_t c = 0; c < dim; ++c) acc[c] += row[c] * w;
                    alpha_sum += w;
                    depth_sum += static_cast<float>(g.depth) * w;
                    transmittance *= 1.0f - alpha;
                    if (transmittance < settings.transmittance_min) break;
                }
                const std::size_t p = out.pixel(x, y);
                std::size_t c = 0;
                if (channels.color) {
                    for (int k = 0; k < 3; ++k) out.color[p * 3 + k] = acc[c++];
                }
                if (channels.feature) {
                    for (std::size_t k = 0; k < kLangDim; ++k) out.feature[p * kLangDim + k] = acc[c++];
                }
                out.alpha[p] = alpha_sum;
                out.depth[p] = depth_sum;
            }
        }
    });
    return out;
}

std::vector<BlendTerm> blend_terms(const GaussianScene& scene, const Camera& camera, int x, int y,
                                   const RasterSettings& settings) {
    const std::vector<ProjectedGaussian> sorted = project(scene, camera, settings);
    const detail::TileBins bins = detail::bin_tiles(sorted, camera, settings);
    const KernelConstants kc(settings);
    const std::size_t tile = static_cast<std::size_t>(y / settings.tile_size) * bins.tiles_x +
                             static_cast<std::size_t>(x / settings.tile_size);
    std::vector<BlendTerm> terms;
    float transmittance = 1.0f;
    for (std::size_t e = bins.offsets[tile]; e < bins.offsets[tile + 1]; ++e) {
        const ProjectedGaussian& g = sorted[bins.entries[e]];
        const float alpha = pixel_alpha(g, static_cast<float>(x), static_cast<float>(y), kc, settings.alpha_max);
        if (alpha <= 0.0f) continue;
        terms.push_back({g.index, alpha, alpha * transmittance});
        transmittance *= 1.0f - alpha;
        if (transmittance < settings.transmittance_min) break;
    }
    return terms;
}

void SceneGradients::resize(std::size_t n) {
    positions.assign(n, Eigen::Vector3d::Zero());
    log_scales.assign(n, Eigen::Vector3d::Zero());
    rotations.assign(n, Eigen::Vector4d::Zero());
    colors.assign(n, Eigen::Vector3d::Zero());
    opacity_logits.assign(n, 0.0);
    lang.assign(n * kLangDim, 0.0);
    mean2d_norm.assign(n, 0.0);
}

void SceneGradients::add(const SceneGradients& o) {
    if (o.positions.size() != positions.size())
        throw InvariantError("SceneGradients::add: size mismatch");
    for (std::size_t i = 0; i < positions.size(); ++i) {
        positions[i] += o.positions[i];
        log_scales[i] += o.log_scales[i];
        rotations[i] += o.rotations[i];
        colors[i] += o.colors[i];
        opacity_logits[i] += o.opacity_logits[i];
        mean2d_norm[i] += o.mean2d_norm[i];
    }
    for (std::size_t k = 0; k < lang.size(); ++k) lang[k] += o.lang[k];
}

bool SceneGradients::all_zero() const {
    auto zero = [](const auto& v) {
        for (const auto& x : v)
            if constexpr (std::is_arithmetic_v<std::decay_t<decltype(x)>>) {
                if (x != 0.0) return false;
            } else {
                if (!x.isZero(0.0)) return false;
            }
        return true;
    };
    return zero(positions) && zero(log_scales) && zero(rotations) && zero(colors) &&
           zero(opacity_logits) && zero(lang);
}

} // namespace tgr
