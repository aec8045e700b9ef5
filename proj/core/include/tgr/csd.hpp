#pragma once

#include "tgr/camera.hpp"
#include "tgr/config.hpp"
#include "tgr/containers.hpp"
#include "tgr/guidance.hpp"
#include "tgr/optim.hpp"
#include "tgr/rasterizer.hpp"
#include "tgr/retrieval.hpp"
#include "tgr/scene.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tgr {

/// Per-class learning rates. Defaults are the usual splatting rates scaled
/// by 0.1 for editing.
struct LearningRates {
    double position = 1.6e-5;
    double log_scale = 5e-4;
    double rotation = 1e-4;
    double opacity = 5e-3;
    double color = 2.5e-4;
};

struct EditConfig {
    std::string prompt;
    /// Optional scene description forwarded to the multi-view provider.
    std::string description;
    double tau = kDefaultTau;
    double tau_low = 0.4;
    double tau_high = 0.7;
    double lambda_ip0 = 1.0;
    double lambda_mv0 = 0.5;
    double mv_zero_fraction = 0.75;
    int steps = 1500;
    double t_min = kNoiseLevelMin;
    double t_max = kNoiseLevelMax;
    int densify_interval = 100;
    double densify_fraction = 0.01;
    double prune_opacity = 0.005;
    double split_shrink = 1.6;
    int checkpoint_interval = 500;
    double guidance_scale_image = 1.5;
    double guidance_scale_text = 7.5;
    LearningRates lr;
    std::uint64_t seed = 0;

    /// Throws ValidationError on out-of-range values.
    void validate() const;
    /// Reads known keys, rejecting unknown ones; missing keys keep defaults.
    static EditConfig from(const KeyValueConfig& kv);
    /// Every field, fully resolved.
    KeyValueConfig to_config() const;
};

struct ScheduleWeights {
    double image = 0.0;      // lambda_1
    double multiview = 0.0;  // lambda_2
};

/// lambda_2 = lambda_mv0 * max(0, 1 - e / mv_zero_fraction);
/// lambda_1 = lambda_ip0 + (lambda_mv0 - lambda_2). Throws when e is outside [0, 1].
ScheduleWeights weight_schedule(double epoch_fraction, const EditConfig& config);

/// clamp((s - tau_low) / (tau_high - tau_low), 0, 1).
float score_gate(float score, const EditConfig& config);
std::vector<float> score_gates(std::span<const float> scores, const EditConfig& config);

enum class RingMode { FullCircle, BoundedArc };

struct ViewRing {
    std::array<Camera, kRingSize> cameras;
    RingMode mode = RingMode::BoundedArc;
    /// Azimuth of each view about the object, degrees.
    std::array<double, kRingSize> azimuths{};
};

/// Four look-at cameras around the box center. The ring's axis is the mean
/// of the dataset cameras' up vectors. With azimuth coverage of at least 300
/// degrees the views sit 90 degrees apart from a seeded start; otherwise they
/// are spread evenly across the covered arc. Radius and elevation are the
/// dataset medians; intrinsics come from the first dataset camera.
ViewRing select_views(const ObjectBox& box, std::span<const Camera> dataset_cameras, std::uint64_t seed);

/// Stand-in dataset cameras when none are supplied: `count` views on a full
/// circle about the box with world up along -y, 15 degrees of elevation, a
/// radius of three bounding radii and a 90 degree horizontal field of view.
std::vector<Camera> orbit_cameras(const ObjectBox& box, int count = 8, int size = 256);

/// Optimizer state carried across steps.
struct CsdState {
    AdamState position, log_scale, rotation, color, opacity;
    /// Sum of per-step 2D-mean gradient norms and the number of steps, since
    /// the last densification.
    std::vector<double> grad_accum;
    std::vector<std::uint32_t> grad_steps;

    explicit CsdState(std::size_t n = 0);
    std::size_t size() const noexcept { return grad_accum.size(); }
    /// Rows follow `source`: an old index, or -1 for a fresh row.
    void remap(std::span<const long long> source);
};

/// lambda_1 * r_ip + lambda_2 * r_mv per pixel, evaluated in double then
/// rounded. Either residual may be absent (treated as zero).
Image combine_residuals(const Image* image_residual, const Image* multiview_residual, double lambda_1,
                        double lambda_2);

struct StepInputs {
    const ViewRing* ring = nullptr;
    /// Conditioning renders of the unedited scene, one per ring camera.
    const std::array<Image, kRingSize>* originals = nullptr;
    GuidanceProvider* image_provider = nullptr;
    GuidanceProvider* multiview_provider = nullptr;
    ScheduleWeights weights;
    float noise_level = static_cast<float>(kNoiseLevelMin);
    std::uint64_t noise_seed = 0;
};

struct StepReport {
    /// Pre-gate 2D-mean gradient norm per Gaussian.
    std::vector<double> grad_norm;
    double residual_norm_image = 0.0;
    double residual_norm_multiview = 0.0;
};

/// One coherent score distillation step. Providers with a zero weight are not
/// called. Residuals are combined per pixel, averaged over the four views,
/// back-propagated, and applied by Adam scaled by each Gaussian's gate.
/// Gaussians with gate 0 are untouched. If any provider throws, the scene
/// and state are left exactly as they were.
StepReport csd_step(GaussianScene& scene, CsdState& state, std::span<const float> gate, const StepInputs& inputs,
                    const EditConfig& config);

/// Builds the request the given provider would receive.
GuidanceRequest make_request(const StepInputs& inputs, const std::array<Image, kRingSize>& renders,
                             const EditConfig& config, bool multiview);

struct DensifyResult {
    std::vector<float> gate;
    /// For every output Gaussian: its input index, or -1 for a new child.
    std::vector<long long> source;
    /// For every output Gaussian: the input Gaussian it was copied from
    /// (itself for survivors, the parent for children).
    std::vector<std::size_t> parent;
    std::vector<std::size_t> densified; // input indices
    std::size_t split = 0;
    std::size_t cloned = 0;
    std::size_t pruned = 0;
};

/// ceil(fraction * candidates), robust to rounding in the product.
std::size_t densify_count(std::size_t candidates, double fraction);

/// Among Gaussians with gate > 0, densifies the ceil(fraction * count) with
/// the largest gradients (ties by index): split into two children sampled
/// from the Gaussian with scales / split_shrink when the largest scale
/// exceeds the scene median, otherwise cloned. Children copy every other
/// attribute, language included, and the gate. Then prunes gate > 0
/// Gaussians with opacity below prune_opacity. Survivors keep their order;
/// children are appended.
DensifyResult densify_and_prune(GaussianScene& scene, std::span<const float> gate, std::span<const double> grad,
                                const EditConfig& config, std::uint64_t seed);

struct EditLogRow {
    int step = 0;
    ScheduleWeights weights;
    float noise_level = 0.0f;
    double residual_norm_image = 0.0;
    double residual_norm_multiview = 0.0;
    std::size_t gaussians = 0;
};

struct EditResult {
    GaussianScene scene;
    std::vector<float> gate;
    /// Input index of every output Gaussian, or -1 when created by densification.
    std::vector<long long> origin;
    std::vector<EditLogRow> log;
    RetrievalResult retrieval;
};

struct EditHooks {
    /// Run directory for config, log, checkpoints and previews; empty disables output.
    std::string run_dir;
    /// Called after every step.
    std::function<void(int step, const GaussianScene&)> on_step;
};

/// Full edit loop: retrieve, gate, then per step select a ring, sample t,
/// run csd_step with the scheduled weights and densify at the interval.
/// Throws ValidationError("query matched no Gaussians at tau ...") on an empty retrieval.
EditResult edit(const GaussianScene& scene, const QueryEmbedding& query, const EditConfig& config,
                std::span<const Camera> dataset_cameras, GuidanceProvider& image_provider,
                GuidanceProvider& multiview_provider, const EditHooks& hooks = {});

std::string edit_log_csv(const std::vector<EditLogRow>& rows);

struct DeleteResult {
    GaussianScene scene;
    std::vector<std::size_t> removed;
    /// One single-mask set per camera: pixels with original alpha >= 0.5 and new alpha < 0.5.
    std::vector<MaskSet> holes;
};

DeleteResult delete_object(const GaussianScene& scene, const QueryEmbedding& query, double tau,
                           std::span<const Camera> cameras);

/// Renders the color channels as an RGB image.
Image render_image(const GaussianScene& scene, const Camera& camera);

} // namespace tgr
