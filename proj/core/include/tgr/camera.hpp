#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace tgr {

/// Rigid world-to-camera transform. Camera frame: +x right, +y down, +z forward.
struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
    /// Camera center in world coordinates.
    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
};

/// Pinhole camera.
struct Camera {
    std::string id;
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    RigidTransform world_to_camera;

    /// Throws ValidationError if intrinsics or the rotation are invalid.
    void validate() const;

    /// Camera at `eye` looking at `target`. `up` is the world up direction
    /// (image rows run opposite to it).
    static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                          const Eigen::Vector3d& up, double fx, double fy, int width,
                          int height);
};

/// Camera list JSON: [{"id", "width", "height", "fx", "fy", "cx", "cy",
/// "rotation": [9 row-major], "translation": [3]}].
std::vector<Camera> load_cameras(const std::string& path);
void save_cameras(const std::vector<Camera>& cameras, const std::string& path);

} // namespace tgr
