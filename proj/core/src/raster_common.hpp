#pragma once

#include "tgr/camera.hpp"
#include "tgr/rasterizer.hpp"
#include "tgr/scene.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace tgr::detail {

template <class T>
using Mat3 = Eigen::Matrix<T, 3, 3>;
template <class T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <class T>
using Mat23 = Eigen::Matrix<T, 2, 3>;

template <class T>
Mat3<T> rotation_from_quat(const Eigen::Matrix<T, 4, 1>& q) {
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3<T> r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// Full projection state for one Gaussian; the backward pass reuses the
/// intermediates.
template <class T>
struct Projection {
    bool visible = false;
    Vec3<T> cam;           // camera-space mean
    Mat3<T> view;          // world-to-camera rotation
    Eigen::Matrix<T, 4, 1> quat_unit;
    T quat_norm = 1;
    Mat3<T> rot;           // Gaussian rotation
    Vec3<T> scale;         // exp(log_scale)
    Mat3<T> cov3;
    Mat23<T> jac;          // perspective Jacobian
    T mean_x = 0, mean_y = 0;
    T cov_xx = 0, cov_xy = 0, cov_yy = 0; // dilated
    T conic_xx = 0, conic_xy = 0, conic_yy = 0;
    T opacity = 0;
    T radius = 0;
};

/// Projects Gaussian i. With `frustum_cull` the Gaussian is also rejected
/// when its support box misses every pixel center.
template <class T>
Projection<T> project_one(const GaussianScene& scene, std::size_t i, const Camera& camera,
                          const RasterSettings& settings, bool frustum_cull) {
    Projection<T> p;
    p.view = camera.world_to_camera.rotation.cast<T>();
    const Vec3<T> pos = scene.positions[i].cast<T>();
    p.cam = p.view * pos + camera.world_to_camera.translation.cast<T>();
    if (!(p.cam.z() > static_cast<T>(settings.near_plane))) return p;

    const Eigen::Matrix<T, 4, 1> q = scene.rotations[i].cast<T>();
    p.quat_norm = q.norm();
    p.quat_unit = q / p.quat_norm;
    p.rot = rotation_from_quat<T>(p.quat_unit);
    for (int a = 0; a < 3; ++a) p.scale[a] = std::exp(static_cast<T>(scene.log_scales[i][a]));
    const Mat3<T> rs = p.rot * p.scale.asDiagonal();
    p.cov3 = rs * rs.transpose();

    const T fx = static_cast<T>(camera.fx), fy = static_cast<T>(camera.fy);
    const T tz = p.cam.z();
    const T inv_z = T(1) / tz;
    p.jac << fx * inv_z, 0, -fx * p.cam.x() * inv_z * inv_z,
        0, fy * inv_z, -fy * p.cam.y() * inv_z * inv_z;
    const Mat23<T> m = p.jac * p.view;
    const Eigen::Matrix<T, 2, 2> cov2 = m * p.cov3 * m.transpose();

    const T dil = static_cast<T>(settings.cov2d_dilation);
    p.cov_xx = cov2(0, 0) + dil;
    p.cov_xy = T(0.5) * (cov2(0, 1) + cov2(1, 0));
    p.cov_yy = cov2(1, 1) + dil;
    const T det = p.cov_xx * p.cov_yy - p.cov_xy * p.cov_xy;
    if (!(det > 0)) return p;
    p.conic_xx = p.cov_yy / det;
    p.conic_xy = -p.cov_xy / det;
    p.conic_yy = p.cov_xx / det;

    p.mean_x = fx * p.cam.x() * inv_z + static_cast<T>(camera.cx);
    p.mean_y = fy * p.cam.y() * inv_z + static_cast<T>(camera.cy);

    const T half_trace = T(0.5) * (p.cov_xx + p.cov_yy);
    const T lambda_max = half_trace + std::sqrt(std::max(T(0), half_trace * half_trace - det));
    p.radius = static_cast<T>(settings.cutoff_sigma) * std::sqrt(lambda_max);
    p.opacity = T(1) / (T(1) + std::exp(-static_cast<T>(scene.opacity_logits[i])));

    if (frustum_cull) {
        if (p.mean_x + p.radius < 0 || p.mean_x - p.radius > static_cast<T>(camera.width - 1) ||
            p.mean_y + p.radius < 0 || p.mean_y - p.radius > static_cast<T>(camera.height - 1))
            return p;
    }
    p.visible = true;
    return p;
}

/// Truncated Gaussian on the squared distance u = d^2 with cutoff c:
///   k(u) = (exp(-u/2) - e_c + (e_c/2)(u - c^2)) / (1 - e_c - (e_c/2) c^2),  e_c = exp(-c^2/2)
/// for u < c^2 and 0 beyond. The linear correction makes k and dk/du vanish
/// at the cutoff, so the rendered image is C1 in every parameter.
template <class T>
T kernel(T d2, T cutoff_sigma) {
    const T cut2 = cutoff_sigma * cutoff_sigma;
    if (!(d2 < cut2)) return T(0);
    const T ec = std::exp(T(-0.5) * cut2);
    const T norm = T(1) - ec - T(0.5) * ec * cut2;
    return (std::exp(T(-0.5) * d2) - ec + T(0.5) * ec * (d2 - cut2)) / norm;
}

template <class T>
T kernel_derivative(T d2, T cutoff_sigma) {
    const T cut2 = cutoff_sigma * cutoff_sigma;
    if (!(d2 < cut2)) return T(0);
    const T ec = std::exp(T(-0.5) * cut2);
    const T norm = T(1) - ec - T(0.5) * ec * cut2;
    return T(0.5) * (ec - std::exp(T(-0.5) * d2)) / norm;
}

struct KernelConstants {
    float cut2;
    float floor_value; // e_c
    float slope;       // e_c / 2
    float scale;       // 1 / norm

    explicit KernelConstants(const RasterSettings& s) {
        const double c2 = s.cutoff_sigma * s.cutoff_sigma;
        const double ec = std::exp(-0.5 * c2);
        cut2 = static_cast<float>(c2);
        floor_value = static_cast<float>(ec);
        slope = static_cast<float>(0.5 * ec);
        scale = static_cast<float>(1.0 / (1.0 - ec - 0.5 * ec * c2));
    }
};

/// Unclamped opacity * kernel at a pixel in the renderer's float arithmetic;
/// writes the squared distance to d2_out. Returns 0 outside the support.
inline float pixel_alpha_raw(const ProjectedGaussian& g, float px, float py,
                             const KernelConstants& kc, float* d2_out = nullptr) {
    const float dx = px - g.mean2d.x();
    const float dy = py - g.mean2d.y();
    const float d2 = g.conic.x() * dx * dx + 2.0f * g.conic.y() * dx * dy + g.conic.z() * dy * dy;
    if (d2_out) *d2_out = d2;
    if (!(d2 < kc.cut2)) return 0.0f;
    const float k = (std::exp(-0.5f * d2) - kc.floor_value + kc.slope * (d2 - kc.cut2)) * kc.scale;
    return g.opacity * std::max(0.0f, k);
}

inline float pixel_alpha(const ProjectedGaussian& g, float px, float py, const KernelConstants& kc,
                         float alpha_max) {
    return std::min(alpha_max, pixel_alpha_raw(g, px, py, kc));
}

/// Per-Gaussian payload rows (color then lang), as selected.
void gather_payload(const GaussianScene& scene, ChannelSet channels, std::vector<float>& out);

/// Tile binning shared by forward and backward.
struct TileBins {
    int tiles_x = 0;
    int tiles_y = 0;
    /// For tile t, entries [offsets[t], offsets[t+1]) of `entries` index into
    /// the sorted projection list.
    std::vector<std::size_t> offsets;
    std::vector<std::uint32_t> entries;
};

TileBins bin_tiles(const std::vector<ProjectedGaussian>& sorted, const Camera& camera,
                   const RasterSettings& settings);

void check_camera(const Camera& camera);

} // namespace tgr::detail
