#include "tgr/csd.hpp"

#include "tgr/error.hpp"
#include "tgr/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tgr {

namespace {

constexpr double kFullCircleCoverage = 300.0;

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double wrap_degrees(double a) {
    a = std::fmod(a, 360.0);
    return a < 0 ? a + 360.0 : a;
}

} // namespace

ViewRing select_views(const ObjectBox& box, std::span<const Camera> dataset_cameras, std::uint64_t seed) {
    if (dataset_cameras.empty()) throw ValidationError("view selection needs at least one dataset camera");
    if (!box.center.allFinite() || !box.half_extents.allFinite()) throw ValidationError("object box is not finite");
    const Eigen::Vector3d center = box.center.cast<double>();

    Eigen::Vector3d up = Eigen::Vector3d::Zero();
    for (const auto& cam : dataset_cameras) up -= cam.world_to_camera.rotation.row(1).transpose();
    if (up.norm() < 1e-9) up = -dataset_cameras.front().world_to_camera.rotation.row(1).transpose();
    up.normalize();

    // In-plane frame: e1 toward the first camera that is off the axis.
    Eigen::Vector3d e1 = Eigen::Vector3d::Zero();
    for (const auto& cam : dataset_cameras) {
        const Eigen::Vector3d d = cam.world_to_camera.center() - center;
        const Eigen::Vector3d planar = d - d.dot(up) * up;
        if (planar.norm() > 1e-9) {
            e1 = planar.normalized();
            break;
        }
    }
    if (e1.isZero()) e1 = (std::abs(up.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY()).cross(up).normalized();
    const Eigen::Vector3d e2 = up.cross(e1);

    std::vector<double> azimuth, radius, elevation;
    for (const auto& cam : dataset_cameras) {
        const Eigen::Vector3d d = cam.world_to_camera.center() - center;
        const double h = d.dot(up);
        const Eigen::Vector3d planar = d - h * up;
        azimuth.push_back(wrap_degrees(std::atan2(planar.dot(e2), planar.dot(e1)) * 180.0 / std::numbers::pi));
        radius.push_back(d.norm());
        elevation.push_back(std::atan2(h, planar.norm()));
    }
    const double r = median(radius);
    const double el = median(elevation);
    if (!(r > 0)) throw ValidationError("dataset cameras coincide with the object center");

    // Coverage is what remains after removing the largest empty gap.
    std::vector<double> sorted = azimuth;
    std::sort(sorted.begin(), sorted.end());
    double gap = 360.0 - (sorted.back() - sorted.front());
    double arc_start = sorted.front();
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i] - sorted[i - 1] > gap) {
            gap = sorted[i] - sorted[i - 1];
            arc_start = sorted[i];
        }
    }
    const double coverage = 360.0 - gap;

    ViewRing ring;
    if (coverage >= kFullCircleCoverage) {
        ring.mode = RingMode::FullCircle;
        Rng rng(seed);
        const double start = rng.uniform(0.0, 360.0);
        for (std::size_t k = 0; k < kRingSize; ++k) ring.azimuths[k] = start + 90.0 * static_cast<double>(k);
    } else {
        ring.mode = RingMode::BoundedArc;
        for (std::size_t k = 0; k < kRingSize; ++k)
            ring.azimuths[k] = arc_start + coverage * static_cast<double>(k) / static_cast<double>(kRingSize - 1);
    }

    const Camera& ref = dataset_cameras.front();
    for (std::size_t k = 0; k < kRingSize; ++k) {
        const double a = ring.azimuths[k] * std::numbers::pi / 180.0;
        const Eigen::Vector3d dir = std::cos(el) * (std::cos(a) * e1 + std::sin(a) * e2) + std::sin(el) * up;
        Camera cam = Camera::look_at(center + r * dir, center, up, ref.fx, ref.fy, ref.width, ref.height);
        cam.cx = ref.cx;
        cam.cy = ref.cy;
        cam.id = "ring" + std::to_string(k);
        ring.cameras[k] = cam;
    }
    return ring;
}

std::vector<Camera> orbit_cameras(const ObjectBox& box, int count, int size) {
    if (count < 1 || size < 1) throw ValidationError("orbit needs at least one camera and one pixel");
    const Eigen::Vector3d center = box.center.cast<double>();
    const double radius = 3.0 * std::max(static_cast<double>(box.half_extents.norm()), 1e-3);
    const Eigen::Vector3d up(0, -1, 0);
    const double el = 15.0 * std::numbers::pi / 180.0;
    const double focal = 0.5 * size;
    std::vector<Camera> cams;
    for (int k = 0; k < count; ++k) {
        const double a = 2.0 * std::numbers::pi * k / count;
        const Eigen::Vector3d dir(std::cos(el) * std::sin(a), -std::sin(el), -std::cos(el) * std::cos(a));
        Camera cam = Camera::look_at(center + radius * dir, center, up, focal, focal, size, size);
        cam.id = "orbit" + std::to_string(k);
        cams.push_back(cam);
    }
    return cams;
}

} // namespace tgr
