#include "raster_common.hpp"
#include "tgr/error.hpp"
#include "tgr/parallel.hpp"
#include "tgr/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tgr {

namespace {

/// Gradient with respect to the projected quantities of one tile-list entry.
struct ProjectedGrad {
    double mean_x = 0, mean_y = 0;
    double conic_xx = 0, conic_xy = 0, conic_yy = 0; // d2 = a dx^2 + 2 b dx dy + c dy^2
    double opacity = 0;
    double depth = 0;
};

void check_size(const std::vector<float>& buf, std::size_t expected, const char* name) {
    if (!buf.empty() && buf.size() != expected)
        throw ValidationError(std::string("render_backward: upstream ") + name + " has " +
                              std::to_string(buf.size()) + " values, expected " +
                              std::to_string(expected));
}

/// d(loss)/d(unnormalized quaternion) from d(loss)/d(R).
Eigen::Vector4d quat_gradient(const Eigen::Vector4d& qn, double norm, const Eigen::Matrix3d& g) {
    const double w = qn[0], x = qn[1], y = qn[2], z = qn[3];
    Eigen::Vector4d gq;
    gq[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    gq[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
                 z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
    gq[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                 w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
    gq[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                 y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    // Through q / |q|.
    return (gq - qn * qn.dot(gq)) / norm;
}

} // namespace

SceneGradients render_backward(const GaussianScene& scene, const Camera& camera,
                               ChannelSet channels, const RenderGradients& upstream,
                               const RasterSettings& settings) {
    const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
    check_size(upstream.color, channels.color ? pixels * 3 : 0, "color");
    check_size(upstream.feature, channels.feature ? pixels * kLangDim : 0, "feature");
    check_size(upstream.alpha, pixels, "alpha");
    check_size(upstream.depth, pixels, "depth");

    const std::vector<ProjectedGaussian> sorted = project(scene, camera, settings);
    const detail::TileBins bins = detail::bin_tiles(sorted, camera, settings);
    std::vector<float> payload;
    detail::gather_payload(scene, channels, payload);
    const std::size_t dim = channels.payload_dim();

    const double cutoff = settings.cutoff_sigma;
    const detail::KernelConstants kc(settings);
    const float alpha_max = settings.alpha_max;
    const int ts = settings.tile_size;
    const std::size_t tile_count = static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y;

    // Per-entry partials: tile t owns entries [offsets[t], offsets[t+1]).
    std::vector<ProjectedGrad> entry_grad(bins.entries.size());
    std::vector<double> entry_payload_grad(bins.entries.size() * dim, 0.0);

    auto upstream_at = [](const std::vector<float>& buf, std::size_t k) {
        return buf.empty() ? 0.0 : static_cast<double>(buf[k]);
    };

    parallel_for(tile_count, [&](std::size_t tile) {
        const int tx = static_cast<int>(tile % bins.tiles_x);
        const int ty = static_cast<int>(tile / bins.tiles_x);
        const std::size_t begin = bins.offsets[tile], end = bins.offsets[tile + 1];
        if (begin == end) return;

        struct Term {
            std::size_t entry;
            double alpha, transmittance, dx, dy, d2, kernel;
            bool clamped;
        };
        std::vector<Term> terms;
        std::vector<double> g_payload(dim);

        for (int y = ty * ts; y < std::min(camera.height, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(camera.width, (tx + 1) * ts); ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * camera.width + x;
                std::size_t c = 0;
                if (channels.color)
                    for (int k = 0; k < 3; ++k) g_payload[c++] = upstream_at(upstream.color, p * 3 + k);
                if (channels.feature)
                    for (std::size_t k = 0; k < kLangDim; ++k)
                        g_payload[c++] = upstream_at(upstream.feature, p * kLangDim + k);
                const double g_alpha = upstream_at(upstream.alpha, p);
                const double g_depth = upstream_at(upstream.depth, p);
                bool any = g_alpha != 0.0 || g_depth != 0.0;
                for (double v : g_payload) any = any || v != 0.0;
                if (!any) continue;

                // Replay the forward compositing in the renderer's float arithmetic.
                terms.clear();
                float transmittance = 1.0f;
                const float px = static_cast<float>(x), py = static_cast<float>(y);
                for (std::size_t e = begin; e < end; ++e) {
                    const ProjectedGaussian& g = sorted[bins.entries[e]];
                    float d2 = 0.0f;
                    const float raw = detail::pixel_alpha_raw(g, px, py, kc, &d2);
                    const float alpha = std::min(alpha_max, raw);
                    if (alpha <= 0.0f) continue;
                    const double dx = static_cast<double>(px) - g.mean2d.x();
                    const double dy = static_cast<double>(py) - g.mean2d.y();
                    const double d2_exact = g.conic.x() * dx * dx + 2.0 * g.conic.y() * dx * dy +
                                            g.conic.z() * dy * dy;
                    terms.push_back({e, alpha, transmittance, dx, dy, d2_exact,
                                     detail::kernel<double>(d2_exact, cutoff), raw >= alpha_max});
                    transmittance *= 1.0f - alpha;
                    if (transmittance < settings.transmittance_min) break;
                }

                // Suffix sweep: B holds sum_{k>i} P_k w_k / T_{i+1}.
                double suffix = 0.0;
                for (auto it = terms.rbegin(); it != terms.rend(); ++it) {
                    const ProjectedGaussian& g = sorted[bins.entries[it->entry]];
                    const float* row = payload.data() + static_cast<std::size_t>(g.index) * dim;
                    double projected = g_alpha + g_depth * g.depth;
                    for (std::size_t k = 0; k < dim; ++k) projected += g_payload[k] * row[k];

                    const double weight = it->alpha * it->transmittance;
                    double* pg = entry_payload_grad.data() + it->entry * dim;
                    for (std::size_t k = 0; k < dim; ++k) pg[k] += g_payload[k] * weight;
                    ProjectedGrad& eg = entry_grad[it->entry];
                    eg.depth += g_depth * weight;

                    const double d_alpha = it->transmittance * (projected - suffix);
                    suffix = it->alpha * projected + (1.0 - it->alpha) * suffix;
                    if (it->clamped) continue;

                    eg.opacity += d_alpha * it->kernel;
                    const double d_d2 = d_alpha * g.opacity * detail::kernel_derivative<double>(it->d2, cutoff);
                    eg.conic_xx += d_d2 * it->dx * it->dx;
                    eg.conic_xy += d_d2 * 2.0 * it->dx * it->dy;
                    eg.conic_yy += d_d2 * it->dy * it->dy;
                    // d(d2)/d(mean) = -2 Q (pixel - mean)
                    eg.mean_x += d_d2 * -2.0 * (g.conic.x() * it->dx + g.conic.y() * it->dy);
                    eg.mean_y += d_d2 * -2.0 * (g.conic.y() * it->dx + g.conic.z() * it->dy);
                }
            }
        }
    });

    // Reduce per-entry partials in fixed tile order.
    std::vector<ProjectedGrad> proj_grad(sorted.size());
    std::vector<double> payload_grad(sorted.size() * dim, 0.0);
    for (std::size_t e = 0; e < bins.entries.size(); ++e) {
        const std::size_t k = bins.entries[e];
        ProjectedGrad& dst = proj_grad[k];
        const ProjectedGrad& src = entry_grad[e];
        dst.mean_x += src.mean_x;
        dst.mean_y += src.mean_y;
        dst.conic_xx += src.conic_xx;
        dst.conic_xy += src.conic_xy;
        dst.conic_yy += src.conic_yy;
        dst.opacity += src.opacity;
        dst.depth += src.depth;
        for (std::size_t c = 0; c < dim; ++c) payload_grad[k * dim + c] += entry_payload_grad[e * dim + c];
    }

    SceneGradients grads;
    grads.resize(scene.size());

    parallel_for(sorted.size(), [&](std::size_t k) {
        const std::size_t i = sorted[k].index;
        const ProjectedGrad& pg = proj_grad[k];
        const auto proj = detail::project_one<double>(scene, i, camera, settings, false);

        std::size_t c = 0;
        if (channels.color)
            for (int a = 0; a < 3; ++a) grads.colors[i][a] = payload_grad[k * dim + c++];
        if (channels.feature)
            for (std::size_t a = 0; a < kLangDim; ++a) grads.lang[i * kLangDim + a] = payload_grad[k * dim + c++];

        grads.opacity_logits[i] = pg.opacity * proj.opacity * (1.0 - proj.opacity);
        grads.mean2d_norm[i] = std::hypot(pg.mean_x, pg.mean_y);

        // Conic -> dilated covariance: dL/dS = -Q G Q with symmetric G.
        Eigen::Matrix2d q;
        q << proj.conic_xx, proj.conic_xy, proj.conic_xy, proj.conic_yy;
        Eigen::Matrix2d g_conic;
        g_conic << pg.conic_xx, 0.5 * pg.conic_xy, 0.5 * pg.conic_xy, pg.conic_yy;
        const Eigen::Matrix2d g_cov2 = -q * g_conic * q;

        // cov2 = M cov3 M^T with M = J W.
        const Eigen::Matrix<double, 2, 3> m = proj.jac * proj.view;
        const Eigen::Matrix3d g_cov3 = m.transpose() * g_cov2 * m;
        const Eigen::Matrix<double, 2, 3> g_m = 2.0 * g_cov2 * m * proj.cov3;
        const Eigen::Matrix<double, 2, 3> g_jac = g_m * proj.view.transpose();

        const double fx = camera.fx, fy = camera.fy;
        const double tx = proj.cam.x(), ty = proj.cam.y(), tz = proj.cam.z();
        const double iz = 1.0 / tz, iz2 = iz * iz, iz3 = iz2 * iz;
        Eigen::Vector3d g_cam;
        g_cam.x() = pg.mean_x * fx * iz + g_jac(0, 2) * (-fx * iz2);
        g_cam.y() = pg.mean_y * fy * iz + g_jac(1, 2) * (-fy * iz2);
        g_cam.z() = pg.mean_x * (-fx * tx * iz2) + pg.mean_y * (-fy * ty * iz2) +
                    g_jac(0, 0) * (-fx * iz2) + g_jac(0, 2) * (2.0 * fx * tx * iz3) +
                    g_jac(1, 1) * (-fy * iz2) + g_jac(1, 2) * (2.0 * fy * ty * iz3) + pg.depth;
        grads.positions[i] = proj.view.transpose() * g_cam;

        // cov3 = A A^T with A = R S.
        const Eigen::Matrix3d a = proj.rot * proj.scale.asDiagonal();
        const Eigen::Matrix3d g_a = 2.0 * g_cov3 * a;
        Eigen::Matrix3d g_rot;
        for (int col = 0; col < 3; ++col) {
            g_rot.col(col) = g_a.col(col) * proj.scale[col];
            grads.log_scales[i][col] = g_a.col(col).dot(proj.rot.col(col)) * proj.scale[col];
        }
        grads.rotations[i] = quat_gradient(proj.quat_unit, proj.quat_norm, g_rot);
    });
    return grads;
}

} // namespace tgr
