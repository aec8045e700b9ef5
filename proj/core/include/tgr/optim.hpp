#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tgr {

/// Adam moments for one parameter tensor stored as rows of `width` floats.
struct AdamState {
    std::size_t width = 1;
    std::vector<double> m;
    std::vector<double> v;
    std::vector<std::uint32_t> steps; // per row, so gated rows keep their own bias correction

    AdamState() = default;
    AdamState(std::size_t rows, std::size_t w) : width(w), m(rows * w, 0.0), v(rows * w, 0.0), steps(rows, 0) {}

    std::size_t rows() const noexcept { return steps.size(); }

    /// Keeps the listed rows in order; `source[r]` names the old row for new
    /// row r, or -1 for a fresh row with zero moments.
    void remap(std::span<const long long> source) {
        AdamState out(source.size(), width);
        for (std::size_t r = 0; r < source.size(); ++r) {
            if (source[r] < 0) continue;
            const auto s = static_cast<std::size_t>(source[r]);
            for (std::size_t c = 0; c < width; ++c) {
                out.m[r * width + c] = m[s * width + c];
                out.v[r * width + c] = v[s * width + c];
            }
            out.steps[r] = steps[s];
        }
        *this = std::move(out);
    }
};

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
};

/// One Adam update of row `row`; the step is scaled by `gain`.
inline void adam_row(AdamState& state, std::size_t row, float* params, const double* grad, double lr,
                     double gain = 1.0, const AdamHyper& h = {}) {
    const std::uint32_t t = ++state.steps[row];
    const double c1 = 1.0 - std::pow(h.beta1, t);
    const double c2 = 1.0 - std::pow(h.beta2, t);
    for (std::size_t c = 0; c < state.width; ++c) {
        const std::size_t k = row * state.width + c;
        state.m[k] = h.beta1 * state.m[k] + (1.0 - h.beta1) * grad[c];
        state.v[k] = h.beta2 * state.v[k] + (1.0 - h.beta2) * grad[c] * grad[c];
        const double mhat = state.m[k] / c1;
        const double vhat = state.v[k] / c2;
        params[c] = static_cast<float>(params[c] - gain * lr * mhat / (std::sqrt(vhat) + h.epsilon));
    }
}

} // namespace tgr
