#include "tgr/camera.hpp"

#include "tgr/error.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace tgr {

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
        throw ValidationError("camera " + id + ": focal lengths must be positive");
    if (width < 1 || height < 1) throw ValidationError("camera " + id + ": empty image size");
    if (!std::isfinite(cx) || !std::isfinite(cy) || !world_to_camera.translation.allFinite())
        throw ValidationError("camera " + id + ": non-finite parameters");
    const Eigen::Matrix3d& r = world_to_camera.rotation;
    if (!r.allFinite() ||
        (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw ValidationError("camera " + id + ": rotation is not orthonormal");
    if (r.determinant() < 0.0) throw ValidationError("camera " + id + ": rotation is a reflection");
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double fx, double fy, int width, int height) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d up_dir = up.normalized();
    if (std::abs(forward.dot(up_dir)) > 1.0 - 1e-9)
        up_dir = std::abs(forward.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    const Eigen::Vector3d down = (forward * forward.dot(up_dir) - up_dir).normalized();
    const Eigen::Vector3d right = down.cross(forward);

    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.width = width;
    cam.height = height;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.world_to_camera.rotation.row(0) = right;
    cam.world_to_camera.rotation.row(1) = down;
    cam.world_to_camera.rotation.row(2) = forward;
    cam.world_to_camera.translation = -cam.world_to_camera.rotation * eye;
    return cam;
}

std::vector<Camera> load_cameras(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open camera file " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    const nlohmann::json& list = doc.is_object() && doc.contains("cameras") ? doc["cameras"] : doc;
    if (!list.is_array()) throw ParseError(path + ": expected a camera array");

    std::vector<Camera> cameras;
    for (std::size_t k = 0; k < list.size(); ++k) {
        const auto& j = list[k];
        try {
            Camera cam;
            cam.id = j.value("id", std::to_string(k));
            cam.width = j.at("width").get<int>();
            cam.height = j.at("height").get<int>();
            cam.fx = j.at("fx").get<double>();
            cam.fy = j.at("fy").get<double>();
            cam.cx = j.value("cx", 0.5 * (cam.width - 1));
            cam.cy = j.value("cy", 0.5 * (cam.height - 1));
            const auto rot = j.at("rotation").get<std::vector<double>>();
            const auto trans = j.at("translation").get<std::vector<double>>();
            if (rot.size() != 9 || trans.size() != 3)
                throw ParseError("rotation needs 9 values and translation 3");
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) cam.world_to_camera.rotation(r, c) = rot[r * 3 + c];
                cam.world_to_camera.translation[r] = trans[r];
            }
            cam.validate();
            cameras.push_back(std::move(cam));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ": camera " + std::to_string(k) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ParseError(path + ": camera " + std::to_string(k) + ": " + e.what());
        }
    }
    return cameras;
}

void save_cameras(const std::vector<Camera>& cameras, const std::string& path) {
    nlohmann::json list = nlohmann::json::array();
    for (const Camera& cam : cameras) {
        std::vector<double> rot(9), trans(3);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) rot[r * 3 + c] = cam.world_to_camera.rotation(r, c);
            trans[r] = cam.world_to_camera.translation[r];
        }
        list.push_back({{"id", cam.id}, {"width", cam.width}, {"height", cam.height},
                        {"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy},
                        {"rotation", rot}, {"translation", trans}});
    }
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write camera file " + path);
    out << list.dump(2) << '\n';
}

} // namespace tgr
