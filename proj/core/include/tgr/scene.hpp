#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace tgr {

inline constexpr std::size_t kLangDim = 64;

using Vec3f = Eigen::Vector3f;
using Vec4f = Eigen::Vector4f;

/// Structure-of-arrays Gaussian scene.
///
/// Parameters are stored in their unconstrained optimization spaces:
///   - log_scales: apply exp() per axis to get the standard deviation
///   - rotations:  unit quaternion, (w, x, y, z)
///   - opacity_logits: apply sigmoid() to get opacity in (0, 1)
///   - colors: diffuse RGB, no view dependence
///   - lang: N x 64 row-major language embeddings
///
/// World covariance is R * diag(exp(s))^2 * R^T.
struct GaussianScene {
    std::vector<Vec3f> positions;
    std::vector<Vec3f> log_scales;
    std::vector<Vec4f> rotations;
    std::vector<Vec3f> colors;
    std::vector<float> opacity_logits;
    std::vector<float> lang;

    std::size_t size() const noexcept { return positions.size(); }
    bool empty() const noexcept { return positions.empty(); }

    std::span<float, kLangDim> lang_of(std::size_t i) {
        return std::span<float, kLangDim>(lang.data() + i * kLangDim, kLangDim);
    }
    std::span<const float, kLangDim> lang_of(std::size_t i) const {
        return std::span<const float, kLangDim>(lang.data() + i * kLangDim, kLangDim);
    }

    float opacity(std::size_t i) const;

    void reserve(std::size_t n);
    void resize(std::size_t n);

    /// Appends one Gaussian; lang defaults to zero.
    void push_back(const Vec3f& position, const Vec3f& log_scale, const Vec4f& rotation,
                   const Vec3f& color, float opacity_logit,
                   std::span<const float> lang_values = {});

    /// Copies Gaussian `src` of `other` to the end of this scene.
    void append_from(const GaussianScene& other, std::size_t src);

    /// New scene containing the listed Gaussians, in the given order.
    GaussianScene select(std::span<const std::size_t> indices) const;

    /// Throws ValidationError naming the first offending Gaussian.
    void validate() const;

    /// Bitwise comparison of every field.
    bool bit_equal(const GaussianScene& other) const;
    /// Bitwise comparison of one Gaussian against one of `other`.
    bool gaussian_bit_equal(std::size_t i, const GaussianScene& other, std::size_t j) const;
};

float sigmoid(float x) noexcept;
float logit(float p) noexcept;

/// Quaternion (w, x, y, z) to rotation matrix. Input need not be normalized.
Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4d& q);

/// Axis-aligned box around a retrieved object.
struct ObjectBox {
    Eigen::Vector3f center = Eigen::Vector3f::Zero();
    Eigen::Vector3f half_extents = Eigen::Vector3f::Zero();
    std::vector<std::size_t> member_indices;

    bool contains(const Eigen::Vector3f& p, float slack = 0.0f) const;
};

inline constexpr double kTrimLower = 0.02;
inline constexpr double kTrimUpper = 0.98;

/// Box over the members whose positions fall within the per-axis
/// [2nd, 98th] percentile range (nearest rank, rounded outward, so sets of
/// 50 or fewer members are never trimmed). The center is the mean of the kept
/// positions; half extents cover every kept position.
/// Throws ValidationError on an empty or out-of-range index set.
ObjectBox object_box(const GaussianScene& scene, std::span<const std::size_t> member_indices);

struct TrimBounds {
    double lo = 0.0;
    double hi = 0.0;
};

/// Outward nearest-rank percentile bounds of a sorted sample:
/// lo = sorted[floor(lower * (n-1))], hi = sorted[ceil(upper * (n-1))].
TrimBounds percentile_bounds(std::span<const double> sorted, double lower, double upper);

} // namespace tgr
