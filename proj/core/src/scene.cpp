#include "tgr/scene.hpp"

#include "tgr/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace tgr {

namespace {

bool finite3(const Vec3f& v) { return v.allFinite(); }

template <class T>
bool bytes_equal(const T& a, const T& b) {
    return std::memcmp(&a, &b, sizeof(T)) == 0;
}

} // namespace

float sigmoid(float x) noexcept { return 1.0f / (1.0f + std::exp(-x)); }

float logit(float p) noexcept { return std::log(p / (1.0f - p)); }

Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4d& q_raw) {
    const Eigen::Vector4d q = q_raw / q_raw.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

float GaussianScene::opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }

void GaussianScene::reserve(std::size_t n) {
    positions.reserve(n);
    log_scales.reserve(n);
    rotations.reserve(n);
    colors.reserve(n);
    opacity_logits.reserve(n);
    lang.reserve(n * kLangDim);
}

void GaussianScene::resize(std::size_t n) {
    positions.resize(n, Vec3f::Zero());
    log_scales.resize(n, Vec3f::Zero());
    rotations.resize(n, Vec4f(1, 0, 0, 0));
    colors.resize(n, Vec3f::Zero());
    opacity_logits.resize(n, 0.0f);
    lang.resize(n * kLangDim, 0.0f);
}

void GaussianScene::push_back(const Vec3f& position, const Vec3f& log_scale,
                              const Vec4f& rotation, const Vec3f& color, float opacity_logit,
                              std::span<const float> lang_values) {
    if (!lang_values.empty() && lang_values.size() != kLangDim)
        throw ValidationError("language embedding must have 64 components, got " +
                              std::to_string(lang_values.size()));
    positions.push_back(position);
    log_scales.push_back(log_scale);
    rotations.push_back(rotation);
    colors.push_back(color);
    opacity_logits.push_back(opacity_logit);
    if (lang_values.empty())
        lang.insert(lang.end(), kLangDim, 0.0f);
    else
        lang.insert(lang.end(), lang_values.begin(), lang_values.end());
}

void GaussianScene::append_from(const GaussianScene& other, std::size_t src) {
    const auto l = other.lang_of(src);
    push_back(other.positions[src], other.log_scales[src], other.rotations[src],
              other.colors[src], other.opacity_logits[src],
              std::span<const float>(l.data(), l.size()));
}

GaussianScene GaussianScene::select(std::span<const std::size_t> indices) const {
    GaussianScene out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.append_from(*this, i);
    return out;
}

void GaussianScene::validate() const {
    const std::size_t n = positions.size();
    if (log_scales.size() != n || rotations.size() != n || colors.size() != n ||
        opacity_logits.size() != n || lang.size() != n * kLangDim)
        throw ValidationError("scene arrays have inconsistent lengths");
    for (std::size_t i = 0; i < n; ++i) {
        auto fail = [i](const char* what) {
            throw ValidationError("gaussian " + std::to_string(i) + ": " + what);
        };
        if (!finite3(positions[i])) fail("non-finite position");
        if (!finite3(log_scales[i])) fail("non-finite scale");
        if (!rotations[i].allFinite()) fail("non-finite rotation");
        if (std::abs(static_cast<double>(rotations[i].cast<double>().norm()) - 1.0) > 1e-5)
            fail("rotation quaternion is not unit length");
        if (!finite3(colors[i])) fail("non-finite color");
        if (!std::isfinite(opacity_logits[i])) fail("non-finite opacity");
        for (float v : lang_of(i))
            if (!std::isfinite(v)) fail("non-finite language embedding");
    }
}

bool GaussianScene::gaussian_bit_equal(std::size_t i, const GaussianScene& other,
                                       std::size_t j) const {
    return bytes_equal(positions[i], other.positions[j]) &&
           bytes_equal(log_scales[i], other.log_scales[j]) &&
           bytes_equal(rotations[i], other.rotations[j]) &&
           bytes_equal(colors[i], other.colors[j]) &&
           bytes_equal(opacity_logits[i], other.opacity_logits[j]) &&
           std::memcmp(lang_of(i).data(), other.lang_of(j).data(), kLangDim * sizeof(float)) ==
               0;
}

bool GaussianScene::bit_equal(const GaussianScene& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
        if (!gaussian_bit_equal(i, other, i)) return false;
    return true;
}

bool ObjectBox::contains(const Eigen::Vector3f& p, float slack) const {
    return ((p - center).cwiseAbs().array() <= half_extents.array() + slack).all();
}

TrimBounds percentile_bounds(std::span<const double> sorted, double lower, double upper) {
    if (sorted.empty()) throw ValidationError("percentile of an empty sample");
    const double last = static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(lower * last));
    const auto hi = static_cast<std::size_t>(std::ceil(upper * last));
    return {sorted[lo], sorted[std::min(hi, sorted.size() - 1)]};
}

ObjectBox object_box(const GaussianScene& scene, std::span<const std::size_t> member_indices) {
    if (member_indices.empty()) throw ValidationError("object_box: empty member set");
    for (std::size_t i : member_indices)
        if (i >= scene.size())
            throw ValidationError("object_box: index " + std::to_string(i) + " out of range");

    TrimBounds bounds[3];
    for (int axis = 0; axis < 3; ++axis) {
        std::vector<double> values;
        values.reserve(member_indices.size());
        for (std::size_t i : member_indices) values.push_back(scene.positions[i][axis]);
        std::sort(values.begin(), values.end());
        bounds[axis] = percentile_bounds(values, kTrimLower, kTrimUpper);
    }

    ObjectBox box;
    for (std::size_t i : member_indices) {
        bool inside = true;
        for (int axis = 0; axis < 3; ++axis) {
            const double v = scene.positions[i][axis];
            inside = inside && v >= bounds[axis].lo && v <= bounds[axis].hi;
        }
        if (inside) box.member_indices.push_back(i);
    }
    // The per-axis conjunction can reject everything for scattered sets.
    if (box.member_indices.empty()) box.member_indices.assign(member_indices.begin(), member_indices.end());

    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (std::size_t i : box.member_indices) sum += scene.positions[i].cast<double>();
    const Eigen::Vector3d center = sum / static_cast<double>(box.member_indices.size());
    Eigen::Vector3d half = Eigen::Vector3d::Zero();
    for (std::size_t i : box.member_indices)
        half = half.cwiseMax((scene.positions[i].cast<double>() - center).cwiseAbs());
    box.center = center.cast<float>();
    box.half_extents = half.cast<float>();
    // Round outward so every float member stays inside after the double->float cast.
    for (std::size_t i : box.member_indices)
        for (int axis = 0; axis < 3; ++axis) {
            float& h = box.half_extents[axis];
            while (std::abs(scene.positions[i][axis] - box.center[axis]) > h)
                h = std::nextafter(h, std::numeric_limits<float>::infinity());
        }
    return box;
}

} // namespace tgr
