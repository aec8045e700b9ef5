#pragma once

// Central finite differences over render_reference, independent of the
// analytic backward pass.

#include "support.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <vector>

namespace tgr::test {

enum class ParamClass { Position, Scale, Rotation, Opacity, Color, Lang };

inline const char* param_class_name(ParamClass c) {
    switch (c) {
    case ParamClass::Position: return "position";
    case ParamClass::Scale: return "scale";
    case ParamClass::Rotation: return "rotation";
    case ParamClass::Opacity: return "opacity";
    case ParamClass::Color: return "color";
    case ParamClass::Lang: return "lang";
    }
    return "?";
}

inline constexpr std::array<ParamClass, 6> kAllParamClasses = {
    ParamClass::Position, ParamClass::Scale, ParamClass::Rotation,
    ParamClass::Opacity, ParamClass::Color, ParamClass::Lang};

inline float& param_ref(GaussianScene& s, ParamClass c, std::size_t i, std::size_t k) {
    switch (c) {
    case ParamClass::Position: return s.positions[i][static_cast<int>(k)];
    case ParamClass::Scale: return s.log_scales[i][static_cast<int>(k)];
    case ParamClass::Rotation: return s.rotations[i][static_cast<int>(k)];
    case ParamClass::Opacity: return s.opacity_logits[i];
    case ParamClass::Color: return s.colors[i][static_cast<int>(k)];
    case ParamClass::Lang: return s.lang[i * kLangDim + k];
    }
    return s.opacity_logits[i];
}

inline double analytic_value(const SceneGradients& g, ParamClass c, std::size_t i, std::size_t k) {
    switch (c) {
    case ParamClass::Position: return g.positions[i][static_cast<int>(k)];
    case ParamClass::Scale: return g.log_scales[i][static_cast<int>(k)];
    case ParamClass::Rotation: return g.rotations[i][static_cast<int>(k)];
    case ParamClass::Opacity: return g.opacity_logits[i];
    case ParamClass::Color: return g.colors[i][static_cast<int>(k)];
    case ParamClass::Lang: return g.lang[i * kLangDim + k];
    }
    return 0.0;
}

inline std::size_t components(ParamClass c) {
    switch (c) {
    case ParamClass::Position:
    case ParamClass::Scale:
    case ParamClass::Color: return 3;
    case ParamClass::Rotation: return 4;
    case ParamClass::Opacity: return 1;
    case ParamClass::Lang: return kLangDim;
    }
    return 0;
}

struct GradCheck {
    double max_abs_analytic = 0.0;
    double error_norm = 0.0;
    double reference_norm = 0.0;

    /// Norm-wise relative error over the whole parameter class.
    double relative_error() const {
        return reference_norm > 0 ? error_norm / reference_norm : error_norm;
    }
};

/// Compares the analytic gradient of one parameter class against central
/// differences with step h = rel_step * max(1, |theta|). For lang only
/// `lang_samples` random components per Gaussian are checked.
inline GradCheck finite_difference_check(const GaussianScene& scene, const Camera& cam,
                                         ChannelSet ch, const RenderGradients& up,
                                         const SceneGradients& analytic, ParamClass c,
                                         Rng& rng, double rel_step = 1e-3,
                                         std::size_t lang_samples = 6) {
    GradCheck out;
    double err2 = 0, ref2 = 0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        std::vector<std::size_t> ks;
        if (c == ParamClass::Lang) {
            for (std::size_t s = 0; s < lang_samples; ++s) ks.push_back(rng.below(kLangDim));
        } else {
            for (std::size_t k = 0; k < components(c); ++k) ks.push_back(k);
        }
        for (std::size_t k : ks) {
            GaussianScene plus = scene, minus = scene;
            const float theta = param_ref(plus, c, i, k);
            const double h = rel_step * std::max(1.0, static_cast<double>(std::abs(theta)));
            param_ref(plus, c, i, k) = static_cast<float>(theta + h);
            param_ref(minus, c, i, k) = static_cast<float>(theta - h);
            // Use the actually representable step.
            const long double step = static_cast<long double>(param_ref(plus, c, i, k)) -
                                     static_cast<long double>(param_ref(minus, c, i, k));
            const long double fd = (reference_loss(plus, cam, ch, up) - reference_loss(minus, cam, ch, up)) / step;
            const double a = analytic_value(analytic, c, i, k);
            err2 += (a - static_cast<double>(fd)) * (a - static_cast<double>(fd));
            ref2 += static_cast<double>(fd * fd);
            out.max_abs_analytic = std::max(out.max_abs_analytic, std::abs(a));
        }
    }
    out.error_norm = std::sqrt(err2);
    out.reference_norm = std::sqrt(ref2);
    return out;
}

} // namespace tgr::test
