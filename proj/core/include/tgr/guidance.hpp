#pragma once

#include "tgr/camera.hpp"
#include "tgr/image.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace tgr {

inline constexpr std::size_t kRingSize = 4;
inline constexpr double kNoiseLevelMin = 0.02;
inline constexpr double kNoiseLevelMax = 0.2;

/// World-to-camera pose as sent over the wire: rotation row-major, then translation.
using Pose = std::array<float, 12>;
Pose pose_of(const Camera& camera);
/// True when every entry differs by at most `tolerance`.
bool poses_match(const Pose& a, const Pose& b, float tolerance = 1e-4f);

/// Opaque provider settings. Ordered so that serialization is deterministic.
using ProviderConfig = std::map<std::string, std::string>;

/// Which residual a provider supplies: per-view image editing or joint multi-view.
enum class ProviderRole : std::uint8_t { SingleView = 1, MultiView = 2 };

struct GuidanceRequest {
    std::string prompt;
    float noise_level = static_cast<float>(kNoiseLevelMin);
    std::uint64_t noise_seed = 0;
    std::array<Pose, kRingSize> poses{};
    /// Current renders x_v; 3-channel, one per view.
    std::vector<Image> rendered_views;
    /// Renders of the unedited scene used as conditioning.
    std::vector<Image> original_views;
    ProviderConfig config;

    /// Four views, matching 3-channel shapes, finite pixels, t in range.
    void validate() const;
    bool operator==(const GuidanceRequest&) const;
};

struct GuidanceResponse {
    /// Per-pixel residual for each rendered view, same shape. Applied as the
    /// gradient of the render, so the optimizer moves against it.
    std::vector<Image> residuals;

    void validate(const GuidanceRequest& request) const;
    bool operator==(const GuidanceResponse&) const;
};

/// Backend mapping (renders, conditions, prompt, t) to residuals. Must be
/// deterministic given the request and safe to call concurrently.
class GuidanceProvider {
public:
    virtual ~GuidanceProvider() = default;
    virtual GuidanceResponse guide(const GuidanceRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// x + sigma_t * eps with eps standard normal from `seed` and sigma_t = t * sigma_scale.
/// Throws ValidationError when t lies outside [0.02, 0.2].
Image add_noise(const Image& image, double t, std::uint64_t seed, double sigma_scale = 1.0);

/// Zero residuals.
class NullProvider final : public GuidanceProvider {
public:
    GuidanceResponse guide(const GuidanceRequest& request) override;
    std::string name() const override { return "null"; }
};

/// Residual x - target, the gradient of 0.5 * |x - target|^2 with respect to
/// the clean render x. The target is built per view from the request.
class PhotometricProvider final : public GuidanceProvider {
public:
    using TargetFn = std::function<Image(const GuidanceRequest&, std::size_t view)>;

    explicit PhotometricProvider(TargetFn target, std::string label = "photometric");

    /// Target = (1 - strength) * original + strength * color.
    static std::unique_ptr<PhotometricProvider> tint(const std::array<float, 3>& color, float strength);
    /// Target = the original (unedited) render; a fixed point for the edit loop.
    static std::unique_ptr<PhotometricProvider> identity();

    GuidanceResponse guide(const GuidanceRequest& request) override;
    std::string name() const override { return label_; }

private:
    TargetFn target_;
    std::string label_;
};

/// Photometric guidance toward precomputed target images keyed by camera pose.
/// A request view without a target within the pose tolerance is a ServiceError.
class FileProvider final : public GuidanceProvider {
public:
    struct Target {
        Camera camera;
        Image image;
    };

    explicit FileProvider(std::vector<Target> targets, float pose_tolerance = 1e-4f);

    /// Reads `dir`/cameras.json and one `<camera id>.png` per camera.
    static std::unique_ptr<FileProvider> load(const std::string& dir);
    /// Writes the layout that load() reads.
    static void save(const std::vector<Target>& targets, const std::string& dir);

    GuidanceResponse guide(const GuidanceRequest& request) override;
    std::string name() const override { return "files"; }
    const std::vector<Target>& targets() const noexcept { return targets_; }

private:
    std::vector<Target> targets_;
    float tolerance_;
};

} // namespace tgr
