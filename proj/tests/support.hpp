#pragma once

#include "tgr/camera.hpp"
#include "tgr/random.hpp"
#include "tgr/rasterizer.hpp"
#include "tgr/scene.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace tgr::test {

struct SceneRanges {
    double z_min = 2.0, z_max = 6.0;
    double spread = 0.45;          // |x|,|y| <= spread * z
    double scale_min = 0.04, scale_max = 0.3;
    double logit_min = -2.0, logit_max = 3.0;
};

inline Eigen::Vector4f random_quaternion(Rng& rng) {
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    return (q / q.norm()).cast<float>();
}

inline GaussianScene random_scene(Rng& rng, std::size_t n, const SceneRanges& r = {}) {
    GaussianScene s;
    s.reserve(n);
    std::vector<float> lang(kLangDim);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = rng.uniform(r.z_min, r.z_max);
        const Vec3f pos(static_cast<float>(rng.uniform(-r.spread, r.spread) * z),
                        static_cast<float>(rng.uniform(-r.spread, r.spread) * z), static_cast<float>(z));
        Vec3f ls;
        for (int a = 0; a < 3; ++a)
            ls[a] = static_cast<float>(std::log(rng.uniform(r.scale_min, r.scale_max)));
        const Vec3f color(static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                          static_cast<float>(rng.uniform()));
        for (float& v : lang) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        s.push_back(pos, ls, random_quaternion(rng), color,
                    static_cast<float>(rng.uniform(r.logit_min, r.logit_max)), lang);
    }
    return s;
}

/// Camera at the origin looking down +z.
inline Camera front_camera(int width, int height, double focal = -1.0) {
    Camera cam;
    cam.id = "front";
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = focal > 0 ? focal : static_cast<double>(width);
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    return cam;
}

inline std::vector<float> random_buffer(Rng& rng, std::size_t n) {
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

inline RenderGradients random_upstream(Rng& rng, const Camera& cam, ChannelSet channels) {
    const std::size_t px = static_cast<std::size_t>(cam.width) * cam.height;
    RenderGradients g;
    if (channels.color) g.color = random_buffer(rng, px * 3);
    if (channels.feature) g.feature = random_buffer(rng, px * kLangDim);
    g.alpha = random_buffer(rng, px);
    g.depth = random_buffer(rng, px);
    for (float& v : g.depth) v *= 0.2f;
    return g;
}

/// sum(upstream * output) evaluated on the extended-precision reference.
inline long double reference_loss(const GaussianScene& scene, const Camera& cam, ChannelSet ch,
                                  const RenderGradients& up) {
    const ReferenceRender r = render_reference_extended(scene, cam, ch);
    long double loss = 0;
    auto dot = [&](const std::vector<long double>& out, const std::vector<float>& g) {
        for (std::size_t k = 0; k < g.size(); ++k) loss += out[k] * static_cast<long double>(g[k]);
    };
    dot(r.color, up.color);
    dot(r.feature, up.feature);
    dot(r.alpha, up.alpha);
    dot(r.depth, up.depth);
    return loss;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("tgr_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace tgr::test
