#include "tgr/features.hpp"

#include "tgr/error.hpp"
#include "tgr/parallel.hpp"
#include "tgr/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace tgr {

namespace {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_same_shape(const FeatureMap& map, const MaskSet& masks) {
    if (map.height != masks.height || map.width != masks.width)
        throw ValidationError("mask set is " + std::to_string(masks.width) + "x" + std::to_string(masks.height) +
                              " but the feature map is " + std::to_string(map.width) + "x" +
                              std::to_string(map.height));
    for (const auto& m : masks.masks)
        if (m.size() != masks.pixel_count()) throw ValidationError("mask size does not match the mask set");
}

} // namespace

PcaBasis fit_pca(std::span<const float> samples, int dim, int k) {
    if (dim <= 0 || k <= 0) throw ValidationError("PCA needs positive dim and k");
    if (samples.size() % static_cast<std::size_t>(dim) != 0)
        throw ValidationError("PCA sample buffer is not a whole number of rows");
    const std::size_t count = samples.size() / static_cast<std::size_t>(dim);
    if (dim < k) throw ValidationError("feature dim " + std::to_string(dim) + " is below k = " + std::to_string(k));
    if (count < static_cast<std::size_t>(k))
        throw ValidationError("PCA needs at least " + std::to_string(k) + " samples, got " + std::to_string(count));
    for (float x : samples)
        if (!std::isfinite(x)) throw ValidationError("PCA samples contain non-finite values");

    const Eigen::Map<const RowMatrixXf> X(samples.data(), static_cast<Eigen::Index>(count), dim);
    const Eigen::VectorXd mean = X.cast<double>().colwise().sum().transpose() / static_cast<double>(count);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
    constexpr Eigen::Index kChunk = 4096;
    for (Eigen::Index begin = 0; begin < static_cast<Eigen::Index>(count); begin += kChunk) {
        const Eigen::Index rows = std::min<Eigen::Index>(kChunk, static_cast<Eigen::Index>(count) - begin);
        const Eigen::MatrixXd centered = X.middleRows(begin, rows).cast<double>().rowwise() - mean.transpose();
        cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
    }
    cov = cov.selfadjointView<Eigen::Lower>();
    cov /= static_cast<double>(count);

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw InvariantError("PCA eigendecomposition failed");
    const Eigen::VectorXd& values = solver.eigenvalues();   // ascending
    const Eigen::MatrixXd& vectors = solver.eigenvectors();
    const double largest = std::max(0.0, values[dim - 1]);

    PcaBasis basis;
    basis.dim = dim;
    basis.k = k;
    basis.mean.assign(mean.data(), mean.data() + dim);
    basis.components.resize(static_cast<std::size_t>(k) * dim);
    basis.explained_variance.resize(k);
    for (int r = 0; r < k; ++r) {
        const int col = dim - 1 - r;
        Eigen::VectorXd v = vectors.col(col);
        Eigen::Index arg;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0) v = -v;
        for (int c = 0; c < dim; ++c) basis.components[static_cast<std::size_t>(r) * dim + c] = static_cast<float>(v[c]);
        const double var = values[col];
        const bool significant = largest > 0 && var > kPcaRankTolerance * largest;
        basis.explained_variance[r] = significant ? static_cast<float>(var) : 0.0f;
        basis.rank += significant;
    }
    return basis;
}

std::vector<float> sample_pixels(std::span<const FeatureMap> maps, std::size_t cap, std::uint64_t seed) {
    if (maps.empty()) throw ValidationError("no feature maps to sample");
    const int dim = maps.front().dim;
    std::size_t total = 0;
    for (const auto& m : maps) {
        if (m.dim != dim) throw ValidationError("feature maps disagree on channel count");
        total += m.pixel_count();
    }
    const std::size_t take = std::min(cap, total);
    std::vector<float> out;
    out.reserve(take * static_cast<std::size_t>(dim));
    // Selection sampling: one pass, constant memory, output in input order.
    Rng rng(seed);
    std::size_t needed = take, remaining = total;
    for (const auto& m : maps) {
        for (std::size_t p = 0; p < m.pixel_count() && needed > 0; ++p, --remaining) {
            if (rng.below(remaining) < needed) {
                const auto px = m.at(p);
                out.insert(out.end(), px.begin(), px.end());
                --needed;
            }
        }
    }
    return out;
}

FeatureMap project_features(const FeatureMap& map, const PcaBasis& basis) {
    if (map.dim != basis.dim)
        throw ValidationError("feature map has " + std::to_string(map.dim) + " channels but the basis expects " +
                              std::to_string(basis.dim));
    FeatureMap out(map.height, map.width, basis.k);
    out.source_camera_id = map.source_camera_id;
    parallel_for(static_cast<std::size_t>(map.height), [&](std::size_t y) {
        std::vector<double> centered(static_cast<std::size_t>(map.dim));
        for (std::size_t x = 0; x < static_cast<std::size_t>(map.width); ++x) {
            const std::size_t p = y * map.width + x;
            const auto v = map.at(p);
            for (int c = 0; c < map.dim; ++c) centered[c] = static_cast<double>(v[c]) - basis.mean[c];
            auto dst = out.at(p);
            for (int r = 0; r < basis.k; ++r) {
                const auto row = basis.component(r);
                double acc = 0;
                for (int c = 0; c < map.dim; ++c) acc += row[c] * centered[c];
                dst[r] = static_cast<float>(acc);
            }
        }
    });
    return out;
}

FeatureMap refine_with_masks(const FeatureMap& map, const MaskSet& masks) {
    require_same_shape(map, masks);
    const std::size_t pixels = map.pixel_count();
    const std::size_t dim = static_cast<std::size_t>(map.dim);

    std::vector<std::size_t> area(masks.masks.size(), 0);
    for (std::size_t m = 0; m < masks.masks.size(); ++m)
        area[m] = static_cast<std::size_t>(std::count(masks.masks[m].begin(), masks.masks[m].end(), 1));

    constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> owner(pixels, kNone);
    for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t m = 0; m < masks.masks.size(); ++m)
            if (masks.masks[m][p] && (owner[p] == kNone || area[m] < area[owner[p]])) owner[p] = m;

    std::vector<double> sums(masks.masks.size() * dim, 0.0);
    std::vector<std::size_t> counts(masks.masks.size(), 0);
    for (std::size_t p = 0; p < pixels; ++p) {
        if (owner[p] == kNone) continue;
        const auto v = map.at(p);
        double* s = sums.data() + owner[p] * dim;
        for (std::size_t c = 0; c < dim; ++c) s[c] += v[c];
        ++counts[owner[p]];
    }
    std::vector<float> means(sums.size());
    for (std::size_t m = 0; m < counts.size(); ++m)
        for (std::size_t c = 0; c < dim && counts[m] > 0; ++c)
            means[m * dim + c] = static_cast<float>(sums[m * dim + c] / static_cast<double>(counts[m]));

    FeatureMap out = map;
    for (std::size_t p = 0; p < pixels; ++p) {
        if (owner[p] == kNone) continue;
        std::copy_n(means.begin() + static_cast<std::ptrdiff_t>(owner[p] * dim), dim, out.at(p).begin());
    }
    return out;
}

} // namespace tgr
