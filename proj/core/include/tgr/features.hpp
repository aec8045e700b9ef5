#pragma once

#include "tgr/camera.hpp"
#include "tgr/containers.hpp"
#include "tgr/scene.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace tgr {

/// Target dimension of the language field.
inline constexpr int kPcaDim = static_cast<int>(kLangDim);
/// Default cap on the number of pixels sampled for the PCA fit.
inline constexpr std::size_t kPcaSampleCap = std::size_t{1} << 18;

/// Variances below this fraction of the largest are treated as exactly zero.
inline constexpr double kPcaRankTolerance = 1e-10;

/// Principal components of row-major samples (count x dim).
/// Covariance uses the 1/count normalization. Components beyond the numerical
/// rank still form an orthonormal completion but get variance 0 and are not
/// counted in `rank`. Each component's largest-magnitude entry is positive.
/// Throws ValidationError when count < k or dim < k.
PcaBasis fit_pca(std::span<const float> samples, int dim, int k = kPcaDim);

/// Uniform sample without replacement of up to `cap` pixels across all maps;
/// every pixel when the total is within the cap. Pixels keep map/row-major order.
std::vector<float> sample_pixels(std::span<const FeatureMap> maps, std::size_t cap, std::uint64_t seed);

/// Each pixel v becomes components * (v - mean).
FeatureMap project_features(const FeatureMap& map, const PcaBasis& basis);

/// Masked-average boundary refinement. Every covered pixel is assigned to the
/// smallest mask containing it (lowest index on ties) and takes the mean of
/// the original features over the pixels assigned to that mask. Uncovered
/// pixels are unchanged. Idempotent for a fixed mask set.
FeatureMap refine_with_masks(const FeatureMap& map, const MaskSet& masks);

/// A supervision view: camera plus its 64-dim feature map.
struct FeatureView {
    Camera camera;
    FeatureMap features;
};

struct LanguageTrainingConfig {
    int epochs = 30;
    double learning_rate = 2.5e-3;
    /// Learning rate reached at the final step; decay is exponential.
    double final_learning_rate = 2.5e-5;
    double l1_weight = 1.0;
    double cosine_weight = 0.2;
    /// When nonzero, the view order is shuffled every epoch with this seed.
    std::uint64_t shuffle_seed = 0;
};

struct LanguageTrainingResult {
    GaussianScene scene;
    /// Mean per-pixel loss for each epoch, measured while training.
    std::vector<double> epoch_loss;
};

/// Per-pixel loss: l1_weight * mean_c |f - v| + cosine_weight * (1 - cos(f, v)).
/// The cosine term is dropped where the supervision is the zero vector; a
/// zero rendered feature has cosine 0.
struct FeatureLoss {
    double value = 0.0;
    std::vector<float> gradient; // d(mean loss)/d(feature), H*W*64
};
FeatureLoss feature_loss(std::span<const float> rendered, const FeatureMap& target,
                         const LanguageTrainingConfig& config);

/// Optimizes only the language embeddings with Adam against rendered
/// features. Geometry and appearance stay bit-identical.
LanguageTrainingResult train_language_embeddings(const GaussianScene& scene, std::span<const FeatureView> views,
                                                 const LanguageTrainingConfig& config = {});

/// Centered moving average with a window clipped at the ends.
std::vector<double> smooth(std::span<const double> values, int window);

} // namespace tgr
