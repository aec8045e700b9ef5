#pragma once

#include "tgr/camera.hpp"
#include "tgr/scene.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace tgr {

/// Which payload channels a render carries. Alpha and depth are always produced.
struct ChannelSet {
    bool color = true;
    bool feature = false;

    std::size_t payload_dim() const noexcept {
        return (color ? 3 : 0) + (feature ? kLangDim : 0);
    }
    static ChannelSet color_only() { return {true, false}; }
    static ChannelSet feature_only() { return {false, true}; }
    static ChannelSet all() { return {true, true}; }
};

/// Rasterization constants shared by the tiled renderer, its backward pass
/// and the brute-force reference.
struct RasterSettings {
    double near_plane = 0.01;
    /// Added to the diagonal of every projected covariance (pixels^2).
    double cov2d_dilation = 0.3;
    /// Support radius in standard deviations; the kernel and its slope reach
    /// zero there.
    double cutoff_sigma = 3.0;
    float alpha_max = 0.999f;
    /// Blending stops once transmittance falls below this value.
    float transmittance_min = 1e-6f;
    int tile_size = 16;
};

/// One Gaussian after projection into a camera. `index` refers back into the
/// scene; payloads are looked up through it.
struct ProjectedGaussian {
    std::uint32_t index = 0;
    Eigen::Vector2f mean2d = Eigen::Vector2f::Zero();
    /// Dilated 2D covariance (xx, xy, yy).
    Eigen::Vector3f cov2d = Eigen::Vector3f::Zero();
    /// Inverse of cov2d (xx, xy, yy).
    Eigen::Vector3f conic = Eigen::Vector3f::Zero();
    double depth = 0.0;
    float opacity = 0.0f;
    float radius = 0.0f;
};

/// Projects, culls (near plane, frustum with the cutoff margin) and sorts by
/// ascending depth with the scene index as tie-break.
std::vector<ProjectedGaussian> project(const GaussianScene& scene, const Camera& camera,
                                       const RasterSettings& settings = {});

/// Planar per-pixel output; every buffer is row-major H x W (x channels).
struct RenderOutput {
    int width = 0;
    int height = 0;
    ChannelSet channels;
    std::vector<float> color;   // H*W*3 when channels.color
    std::vector<float> feature; // H*W*64 when channels.feature
    std::vector<float> alpha;   // H*W accumulated opacity
    std::vector<float> depth;   // H*W expected depth (not normalized by alpha)

    std::size_t pixel(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
               static_cast<std::size_t>(x);
    }
};

/// Tiled front-to-back alpha blending:
///   out(p) = sum_i payload_i * alpha_i * prod_{j<i} (1 - alpha_j)
/// with alpha_i = min(alpha_max, opacity_i * kernel(d_i^2)). Output is
/// bit-identical for identical inputs regardless of thread count.
RenderOutput render(const GaussianScene& scene, const Camera& camera, ChannelSet channels,
                    const RasterSettings& settings = {});

/// Brute-force oracle: every Gaussian against every pixel, long double
/// arithmetic, no tiling, no early termination. Limited to 10^4 Gaussians.
RenderOutput render_reference(const GaussianScene& scene, const Camera& camera,
                              ChannelSet channels, const RasterSettings& settings = {});

inline constexpr std::size_t kReferenceMaxGaussians = 10000;

/// render_reference before narrowing to float; used by finite-difference checks.
struct ReferenceRender {
    int width = 0;
    int height = 0;
    ChannelSet channels;
    std::vector<long double> color;
    std::vector<long double> feature;
    std::vector<long double> alpha;
    std::vector<long double> depth;
};

ReferenceRender render_reference_extended(const GaussianScene& scene, const Camera& camera,
                                          ChannelSet channels, const RasterSettings& settings = {});

/// Blend kernel on the squared Mahalanobis distance: a Gaussian with a linear
/// correction so that value and slope vanish at the cutoff; equals one at the
/// center.
double blend_kernel(double d2, double cutoff_sigma);
double blend_kernel_derivative(double d2, double cutoff_sigma);

/// One blending term at a pixel, in compositing order.
struct BlendTerm {
    std::uint32_t index = 0;
    float alpha = 0.0f;
    float weight = 0.0f;
};

/// The terms the tiled renderer composites at pixel (x, y).
std::vector<BlendTerm> blend_terms(const GaussianScene& scene, const Camera& camera, int x, int y,
                                   const RasterSettings& settings = {});

/// Upstream gradients; empty buffers mean zero.
struct RenderGradients {
    std::vector<float> color;
    std::vector<float> feature;
    std::vector<float> alpha;
    std::vector<float> depth;
};

/// Gradients with respect to every scene parameter, in the parameter spaces
/// stored in GaussianScene (log scales, raw quaternion, opacity logit).
struct SceneGradients {
    std::vector<Eigen::Vector3d> positions;
    std::vector<Eigen::Vector3d> log_scales;
    std::vector<Eigen::Vector4d> rotations;
    std::vector<Eigen::Vector3d> colors;
    std::vector<double> opacity_logits;
    std::vector<double> lang;
    /// Norm of the gradient with respect to the projected 2D mean.
    std::vector<double> mean2d_norm;

    void resize(std::size_t n);
    void add(const SceneGradients& other);
    bool all_zero() const;
};

/// Backward pass of render(): gradients of sum(upstream * output).
/// Throws ValidationError if an upstream buffer has the wrong size.
SceneGradients render_backward(const GaussianScene& scene, const Camera& camera,
                               ChannelSet channels, const RenderGradients& upstream,
                               const RasterSettings& settings = {});

} // namespace tgr
