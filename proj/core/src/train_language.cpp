#include "tgr/features.hpp"

#include "tgr/error.hpp"
#include "tgr/optim.hpp"
#include "tgr/parallel.hpp"
#include "tgr/random.hpp"
#include "tgr/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tgr {

FeatureLoss feature_loss(std::span<const float> rendered, const FeatureMap& target,
                         const LanguageTrainingConfig& config) {
    const std::size_t pixels = target.pixel_count();
    const std::size_t dim = static_cast<std::size_t>(target.dim);
    if (rendered.size() != pixels * dim) throw ValidationError("rendered feature size does not match the target");
    FeatureLoss out;
    out.gradient.assign(rendered.size(), 0.0f);
    if (pixels == 0) return out;
    const double inv_pixels = 1.0 / static_cast<double>(pixels);
    const double l1_scale = config.l1_weight / static_cast<double>(dim);

    std::vector<double> row_loss(static_cast<std::size_t>(target.height), 0.0);
    parallel_for(static_cast<std::size_t>(target.height), [&](std::size_t y) {
        double acc = 0;
        for (std::size_t x = 0; x < static_cast<std::size_t>(target.width); ++x) {
            const std::size_t p = y * target.width + x;
            const float* f = rendered.data() + p * dim;
            const auto v = target.at(p);
            float* g = out.gradient.data() + p * dim;
            double l1 = 0, ff = 0, vv = 0, fv = 0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double d = static_cast<double>(f[c]) - v[c];
                l1 += std::abs(d);
                g[c] = static_cast<float>(l1_scale * ((d > 0) - (d < 0)) * inv_pixels);
                ff += static_cast<double>(f[c]) * f[c];
                vv += static_cast<double>(v[c]) * v[c];
                fv += static_cast<double>(f[c]) * v[c];
            }
            double loss = l1_scale * l1;
            if (vv > 0) {
                double cosine = 0;
                if (ff > 0) {
                    const double nf = std::sqrt(ff), nv = std::sqrt(vv);
                    cosine = fv / (nf * nv);
                    // d(1 - cos)/df = -(v / (|f||v|) - cos * f / |f|^2)
                    const double w = config.cosine_weight * inv_pixels;
                    for (std::size_t c = 0; c < dim; ++c)
                        g[c] += static_cast<float>(-w * (v[c] / (nf * nv) - cosine * f[c] / ff));
                }
                loss += config.cosine_weight * (1.0 - cosine);
            }
            acc += loss;
        }
        row_loss[y] = acc;
    });
    out.value = std::accumulate(row_loss.begin(), row_loss.end(), 0.0) * inv_pixels;
    return out;
}

LanguageTrainingResult train_language_embeddings(const GaussianScene& scene, std::span<const FeatureView> views,
                                                 const LanguageTrainingConfig& config) {
    if (views.empty()) throw ValidationError("language training needs at least one view");
    if (config.epochs <= 0) throw ValidationError("epochs must be positive");
    if (!(config.learning_rate > 0) || !(config.final_learning_rate > 0))
        throw ValidationError("learning rates must be positive");
    for (const auto& v : views) {
        if (v.features.dim != kPcaDim)
            throw ValidationError("view '" + v.camera.id + "' has " + std::to_string(v.features.dim) +
                                  "-dim features, expected " + std::to_string(kPcaDim));
        if (v.features.width != v.camera.width || v.features.height != v.camera.height)
            throw ValidationError("view '" + v.camera.id + "' feature map size does not match its camera");
        v.features.validate();
    }
    scene.validate();

    LanguageTrainingResult result;
    result.scene = scene;
    GaussianScene& s = result.scene;
    AdamState adam(s.size(), kLangDim);

    const std::size_t total_steps = static_cast<std::size_t>(config.epochs) * views.size();
    const double decay = total_steps > 1
        ? std::log(config.final_learning_rate / config.learning_rate) / static_cast<double>(total_steps - 1)
        : 0.0;

    std::vector<std::size_t> order(views.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.shuffle_seed != 0) {
            Rng rng(derive_seed(config.shuffle_seed, static_cast<std::uint64_t>(epoch)));
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        }
        double epoch_loss = 0;
        for (std::size_t vi : order) {
            const FeatureView& view = views[vi];
            const RenderOutput out = render(s, view.camera, ChannelSet::feature_only());
            FeatureLoss loss = feature_loss(out.feature, view.features, config);
            epoch_loss += loss.value;
            RenderGradients up;
            up.feature = std::move(loss.gradient);
            const SceneGradients grads = render_backward(s, view.camera, ChannelSet::feature_only(), up);
            const double lr = config.learning_rate * std::exp(decay * static_cast<double>(step));
            for (std::size_t i = 0; i < s.size(); ++i) {
                const double* g = grads.lang.data() + i * kLangDim;
                if (std::all_of(g, g + kLangDim, [](double x) { return x == 0.0; })) continue;
                adam_row(adam, i, s.lang.data() + i * kLangDim, g, lr);
            }
            ++step;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(views.size()));
    }
    return result;
}

std::vector<double> smooth(std::span<const double> values, int window) {
    if (window <= 0) throw ValidationError("smoothing window must be positive");
    const std::ptrdiff_t half = window / 2;
    const auto n = static_cast<std::ptrdiff_t>(values.size());
    std::vector<double> out(values.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + half);
        double acc = 0;
        for (std::ptrdiff_t j = lo; j <= hi; ++j) acc += values[j];
        out[i] = acc / static_cast<double>(hi - lo + 1);
    }
    return out;
}

} // namespace tgr
