#pragma once

#include "support.hpp"

#include "tgr/csd.hpp"
#include "tgr/features.hpp"
#include "tgr/guidance.hpp"

#include <array>
#include <numbers>
#include <numeric>

namespace tgr::test {

inline std::vector<float> random_unit(Rng& rng, std::size_t dim = kLangDim) {
    std::vector<float> v(dim);
    double n2 = 0;
    for (float& x : v) {
        x = static_cast<float>(rng.normal());
        n2 += static_cast<double>(x) * x;
    }
    for (float& x : v) x = static_cast<float>(x / std::sqrt(n2));
    return v;
}

/// Two Gaussians side by side in front of a 16x16 camera. The supervision is
/// the feature render of the same geometry carrying `targets`, so a zero-loss
/// solution exists: each Gaussian's embedding equal to its target.
struct TwoRegionFixture {
    GaussianScene scene; // lang all zero
    FeatureView view;
    std::array<std::vector<float>, 2> targets;
};

inline TwoRegionFixture two_region_fixture(std::uint64_t seed = 7) {
    Rng rng(seed);
    TwoRegionFixture f;
    f.targets = {random_unit(rng), random_unit(rng)};
    const float ls = std::log(0.15f);
    f.scene.push_back({-0.5f, 0.0f, 2.0f}, {ls, ls, ls}, {1, 0, 0, 0}, {1, 0, 0}, 3.0f);
    f.scene.push_back({0.5f, 0.0f, 2.0f}, {ls, ls, ls}, {1, 0, 0, 0}, {0, 0, 1}, 3.0f);
    f.view.camera = front_camera(16, 16, 16.0);
    GaussianScene labelled = f.scene;
    for (std::size_t i = 0; i < 2; ++i) std::copy(f.targets[i].begin(), f.targets[i].end(), labelled.lang_of(i).begin());
    const RenderOutput out = render(labelled, f.view.camera, ChannelSet::feature_only());
    f.view.features = FeatureMap(16, 16, kPcaDim);
    f.view.features.data = out.feature;
    f.view.features.source_camera_id = f.view.camera.id;
    return f;
}

/// 50 Gaussians with L = q1 on the left, 50 with L = q2 on the right, q1 and
/// q2 orthonormal and random.
struct TwoClusterFixture {
    GaussianScene scene;
    std::vector<float> q1, q2;
};

inline TwoClusterFixture two_cluster_fixture(std::uint64_t seed = 11) {
    Rng rng(seed);
    TwoClusterFixture f;
    f.q1 = random_unit(rng);
    f.q2 = random_unit(rng);
    double p = 0;
    for (std::size_t c = 0; c < kLangDim; ++c) p += static_cast<double>(f.q1[c]) * f.q2[c];
    double n2 = 0;
    for (std::size_t c = 0; c < kLangDim; ++c) {
        f.q2[c] = static_cast<float>(f.q2[c] - p * f.q1[c]);
        n2 += static_cast<double>(f.q2[c]) * f.q2[c];
    }
    for (float& x : f.q2) x = static_cast<float>(x / std::sqrt(n2));
    for (int i = 0; i < 100; ++i) {
        const bool left = i < 50;
        const Vec3f pos(static_cast<float>((left ? -1.0 : 1.0) + rng.uniform(-0.4, 0.4)),
                        static_cast<float>(rng.uniform(-0.4, 0.4)), static_cast<float>(4.0 + rng.uniform(-0.4, 0.4)));
        const float ls = std::log(0.08f);
        f.scene.push_back(pos, {ls, ls, ls}, random_quaternion(rng), {0.5f, 0.5f, 0.5f}, 2.0f, left ? f.q1 : f.q2);
    }
    return f;
}

/// Two grey objects side by side. Object A (indices 0..24) carries qa,
/// object B (25..49) carries qb orthogonal to qa. Dataset cameras cover a
/// 60 degree arc in front, so view rings are deterministic.
struct TwoObjectFixture {
    GaussianScene scene;
    std::vector<float> qa, qb;
    std::vector<Camera> cameras;
    std::size_t a_count = 25;
};

inline TwoObjectFixture two_object_fixture(std::uint64_t seed = 21, int size = 32) {
    auto clusters = two_cluster_fixture(seed);
    TwoObjectFixture f;
    f.qa = clusters.q1;
    f.qb = clusters.q2;
    Rng rng(seed + 1);
    for (int i = 0; i < 50; ++i) {
        const bool a = i < 25;
        const Vec3f pos(static_cast<float>((a ? -0.6 : 0.6) + rng.uniform(-0.25, 0.25)),
                        static_cast<float>(rng.uniform(-0.25, 0.25)), static_cast<float>(rng.uniform(-0.25, 0.25)));
        const float ls = static_cast<float>(std::log(rng.uniform(0.08, 0.14)));
        f.scene.push_back(pos, {ls, ls, ls}, random_quaternion(rng), {0.5f, 0.5f, 0.5f}, 2.5f, a ? f.qa : f.qb);
    }
    for (int k = 0; k < 5; ++k) {
        const double az = (-30.0 + 15.0 * k) * std::numbers::pi / 180.0;
        Camera cam = Camera::look_at({4.0 * std::sin(az), -0.5, -4.0 * std::cos(az)}, {0, 0, 0}, {0, -1, 0}, size, size,
                                     size, size);
        cam.id = "cam" + std::to_string(k);
        f.cameras.push_back(cam);
    }
    return f;
}

inline QueryEmbedding query_a(const TwoObjectFixture& f) { return QueryEmbedding::make(f.qa, "object a"); }

/// Edit settings for the toy scenes: the default rates are tuned for
/// thousands of steps, so colors move faster here.
inline EditConfig toy_edit_config(int steps = 300) {
    EditConfig c;
    c.prompt = "make object a red";
    c.tau = 0.5;
    c.steps = steps;
    c.lr.color = 0.01;
    c.lr.opacity = 0.01;
    c.seed = 5;
    return c;
}

/// Alpha of object A alone thresholded at 0.5, per ring camera.
inline std::vector<std::uint8_t> footprint(const GaussianScene& scene, std::size_t count, const Camera& cam) {
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const RenderOutput out = render(scene.select(idx), cam, ChannelSet{false, false});
    std::vector<std::uint8_t> mask(out.alpha.size());
    for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = out.alpha[p] >= 0.5f;
    return mask;
}

/// File-provider targets: the original ring renders tinted red inside
/// object A's footprint and unchanged elsewhere.
inline std::vector<FileProvider::Target> red_tint_targets(const TwoObjectFixture& f, const ViewRing& ring) {
    std::vector<FileProvider::Target> targets;
    for (const auto& cam : ring.cameras) {
        Image img = render_image(f.scene, cam);
        const auto mask = footprint(f.scene, f.a_count, cam);
        for (std::size_t p = 0; p < mask.size(); ++p)
            if (mask[p]) {
                img.data[p * 3 + 0] = 0.95f;
                img.data[p * 3 + 1] = 0.1f;
                img.data[p * 3 + 2] = 0.1f;
            }
        targets.push_back({cam, img});
    }
    return targets;
}

/// Mean RGB distance between render and target over object A's footprint.
inline double region_distance(const GaussianScene& scene, const TwoObjectFixture& f,
                              const std::vector<FileProvider::Target>& targets) {
    double sum = 0;
    std::size_t count = 0;
    for (const auto& t : targets) {
        const Image img = render_image(scene, t.camera);
        const auto mask = footprint(f.scene, f.a_count, t.camera);
        for (std::size_t p = 0; p < mask.size(); ++p) {
            if (!mask[p]) continue;
            double d2 = 0;
            for (int c = 0; c < 3; ++c) d2 += std::pow(img.data[p * 3 + c] - t.image.data[p * 3 + c], 2);
            sum += std::sqrt(d2);
            ++count;
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

/// Full edit of object A toward file-based red-tint targets.
struct RedTintOutcome {
    double initial_distance = 0.0;
    double final_distance = 0.0;
    /// First step whose distance is at most half the initial one, or -1.
    int halved_at = -1;
    std::size_t frozen_checked = 0;
    std::size_t frozen_changed = 0;
    std::size_t gaussians_out = 0;
};

inline RedTintOutcome run_red_tint_edit(int steps = 300) {
    const auto f = two_object_fixture();
    const EditConfig cfg = toy_edit_config(steps);
    const auto r = retrieve(f.scene, query_a(f), cfg.tau);
    // The fixture cameras cover a bounded arc, so the ring does not depend on the seed.
    const ViewRing ring = select_views(*r.box, f.cameras, 0);
    const auto targets = red_tint_targets(f, ring);
    FileProvider files(targets);
    NullProvider null;
    RedTintOutcome o;
    o.initial_distance = region_distance(f.scene, f, targets);
    EditHooks hooks;
    hooks.on_step = [&](int step, const GaussianScene& scene) {
        if (o.halved_at < 0 && region_distance(scene, f, targets) <= 0.5 * o.initial_distance) o.halved_at = step + 1;
    };
    const auto result = edit(f.scene, query_a(f), cfg, f.cameras, files, null, hooks);
    o.final_distance = region_distance(result.scene, f, targets);
    o.gaussians_out = result.scene.size();
    const auto gates = score_gates(r.scores, cfg);
    for (std::size_t k = 0; k < result.scene.size(); ++k) {
        const long long src = result.origin[k];
        if (src < 0 || gates[static_cast<std::size_t>(src)] > 0.0f) continue;
        ++o.frozen_checked;
        o.frozen_changed += !result.scene.gaussian_bit_equal(k, f.scene, static_cast<std::size_t>(src));
    }
    // Every gate-zero input Gaussian must survive.
    std::size_t zero_gate = 0;
    for (float g : gates) zero_gate += g == 0.0f;
    o.frozen_changed += zero_gate - o.frozen_checked;
    return o;
}

} // namespace tgr::test
