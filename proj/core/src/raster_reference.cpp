#include "raster_common.hpp"
#include "tgr/error.hpp"
#include "tgr/rasterizer.hpp"

#include <algorithm>
#include <string>

namespace tgr {

ReferenceRender render_reference_extended(const GaussianScene& scene, const Camera& camera,
                                          ChannelSet channels, const RasterSettings& settings) {
    using Real = long double;
    if (scene.size() > kReferenceMaxGaussians)
        throw ValidationError("render_reference: " + std::to_string(scene.size()) +
                              " Gaussians exceeds the oracle limit of " +
                              std::to_string(kReferenceMaxGaussians));
    detail::check_camera(camera);

    struct Item {
        std::size_t index;
        detail::Projection<Real> proj;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        auto p = detail::project_one<Real>(scene, i, camera, settings, false);
        if (p.visible) items.push_back({i, p});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        const Real da = a.proj.cam.z(), db = b.proj.cam.z();
        return da != db ? da < db : a.index < b.index;
    });

    std::vector<float> payload;
    detail::gather_payload(scene, channels, payload);
    const std::size_t dim = channels.payload_dim();

    ReferenceRender out;
    out.width = camera.width;
    out.height = camera.height;
    out.channels = channels;
    const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
    if (channels.color) out.color.assign(pixels * 3, 0.0L);
    if (channels.feature) out.feature.assign(pixels * kLangDim, 0.0L);
    out.alpha.assign(pixels, 0.0L);
    out.depth.assign(pixels, 0.0L);

    const Real cutoff = static_cast<Real>(settings.cutoff_sigma);
    const Real alpha_max = static_cast<Real>(settings.alpha_max);
    std::vector<Real> acc(dim);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            std::fill(acc.begin(), acc.end(), Real(0));
            Real transmittance = 1, alpha_sum = 0, depth_sum = 0;
            for (const Item& item : items) {
                const auto& p = item.proj;
                const Real dx = Real(x) - p.mean_x, dy = Real(y) - p.mean_y;
                const Real d2 = p.conic_xx * dx * dx + 2 * p.conic_xy * dx * dy + p.conic_yy * dy * dy;
                const Real alpha = std::min(alpha_max, p.opacity * detail::kernel<Real>(d2, cutoff));
                if (alpha <= 0) continue;
                const Real w = alpha * transmittance;
                const float* row = payload.data() + item.index * dim;
                for (std::size_t c = 0; c < dim; ++c) acc[c] += static_cast<Real>(row[c]) * w;
                alpha_sum += w;
                depth_sum += p.cam.z() * w;
                transmittance *= 1 - alpha;
            }
            const std::size_t px = static_cast<std::size_t>(y) * camera.width + x;
            std::size_t c = 0;
            if (channels.color)
                for (int k = 0; k < 3; ++k) out.color[px * 3 + k] = acc[c++];
            if (channels.feature)
                for (std::size_t k = 0; k < kLangDim; ++k) out.feature[px * kLangDim + k] = acc[c++];
            out.alpha[px] = alpha_sum;
            out.depth[px] = depth_sum;
        }
    }
    return out;
}

RenderOutput render_reference(const GaussianScene& scene, const Camera& camera,
                              ChannelSet channels, const RasterSettings& settings) {
    const ReferenceRender ext = render_reference_extended(scene, camera, channels, settings);
    auto narrow = [](const std::vector<long double>& v) {
        return std::vector<float>(v.begin(), v.end());
    };
    RenderOutput out;
    out.width = ext.width;
    out.height = ext.height;
    out.channels = ext.channels;
    out.color = narrow(ext.color);
    out.feature = narrow(ext.feature);
    out.alpha = narrow(ext.alpha);
    out.depth = narrow(ext.depth);
    return out;
}

} // namespace tgr
