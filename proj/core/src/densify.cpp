#include "tgr/csd.hpp"

#include "tgr/error.hpp"
#include "tgr/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tgr {

std::size_t densify_count(std::size_t candidates, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("densify fraction must lie in (0, 1]");
    const double exact = fraction * static_cast<double>(candidates);
    const double nearest = std::round(exact);
    // 0.01 * 700 evaluates to 7.000000000000001; do not let that round up to 8.
    const double count = std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
    return std::min(candidates, static_cast<std::size_t>(count));
}

DensifyResult densify_and_prune(GaussianScene& scene, std::span<const float> gate, std::span<const double> grad,
                                const EditConfig& config, std::uint64_t seed) {
    const std::size_t n = scene.size();
    if (gate.size() != n || grad.size() != n) throw ValidationError("densification inputs do not cover the scene");

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i)
        if (gate[i] > 0.0f) candidates.push_back(i);
    const std::size_t count = densify_count(candidates.size(), config.densify_fraction);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return grad[a] > grad[b]; });
    std::vector<std::size_t> chosen(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(chosen.begin(), chosen.end());

    std::vector<double> max_scale(n);
    for (std::size_t i = 0; i < n; ++i) max_scale[i] = std::exp(static_cast<double>(scene.log_scales[i].maxCoeff()));
    double median = 0.0;
    if (n > 0) {
        std::vector<double> sorted = max_scale;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
        median = sorted[n / 2];
    }

    DensifyResult out;
    out.densified = chosen;
    std::vector<bool> removed(n, false);
    GaussianScene children;
    std::vector<std::size_t> child_parent;
    Rng rng(seed);
    const float shrink = std::log(static_cast<float>(config.split_shrink));
    for (std::size_t i : chosen) {
        if (max_scale[i] > median) {
            const Eigen::Matrix3d R = quat_to_matrix(scene.rotations[i].cast<double>());
            const Eigen::Vector3d s = scene.log_scales[i].cast<double>().array().exp();
            for (int c = 0; c < 2; ++c) {
                const Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
                children.append_from(scene, i);
                const std::size_t k = children.size() - 1;
                children.positions[k] = (scene.positions[i].cast<double>() + R * s.cwiseProduct(z)).cast<float>();
                children.log_scales[k] = scene.log_scales[i].array() - shrink;
                child_parent.push_back(i);
            }
            removed[i] = true;
            ++out.split;
        } else {
            children.append_from(scene, i);
            child_parent.push_back(i);
            ++out.cloned;
        }
    }

    // Prune gate-positive Gaussians that became transparent, children included.
    const auto transparent = [&](const GaussianScene& s, std::size_t i) {
        return s.opacity(i) < static_cast<float>(config.prune_opacity);
    };
    GaussianScene next;
    next.reserve(n + children.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (removed[i]) continue;
        if (gate[i] > 0.0f && transparent(scene, i)) {
            ++out.pruned;
            continue;
        }
        next.append_from(scene, i);
        out.gate.push_back(gate[i]);
        out.source.push_back(static_cast<long long>(i));
        out.parent.push_back(i);
    }
    for (std::size_t k = 0; k < children.size(); ++k) {
        const std::size_t p = child_parent[k];
        if (transparent(children, k)) {
            ++out.pruned;
            continue;
        }
        next.append_from(children, k);
        out.gate.push_back(gate[p]);
        out.source.push_back(-1);
        out.parent.push_back(p);
    }
    scene = std::move(next);
    return out;
}

} // namespace tgr
