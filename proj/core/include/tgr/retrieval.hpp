#pragma once

#include "tgr/camera.hpp"
#include "tgr/containers.hpp"
#include "tgr/scene.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tgr {

inline constexpr double kDefaultTau = 0.6;

/// Cosine similarity with the convention that a zero vector scores 0.
/// Accumulates in double; the result is clamped to [-1, 1].
double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// s_i = cos(L_i, query) for every Gaussian.
std::vector<float> relevance_scores(const GaussianScene& scene, const QueryEmbedding& query);

struct RetrievalResult {
    double tau = kDefaultTau;
    std::vector<float> scores;
    /// Exactly { i : scores[i] > tau }, ascending.
    std::vector<std::size_t> member_indices;
    /// Absent when nothing was retrieved.
    std::optional<ObjectBox> box;
};

/// Strict thresholding of relevance_scores. Throws ValidationError when tau
/// lies outside [-1, 1] or the query dimension is not 64.
RetrievalResult retrieve(const GaussianScene& scene, const QueryEmbedding& query, double tau = kDefaultTau);

struct RelevanceMap {
    int width = 0;
    int height = 0;
    std::vector<float> scores; // row-major, cos(rendered feature, query)
    int argmax_x = 0;
    int argmax_y = 0;
    float max_score = 0.0f;
};

/// First maximum in row-major order.
void locate_argmax(RelevanceMap& map);

/// Renders language features and scores every pixel against the query.
RelevanceMap render_relevance_map(const GaussianScene& scene, const Camera& camera, const QueryEmbedding& query);

/// Relevance maps travel as single-channel TGRF files.
void write_relevance_map(const RelevanceMap& map, const std::string& path);
RelevanceMap read_relevance_map(const std::string& path);

/// Ground-truth box in pixels, inclusive on both ends.
struct PixelBox {
    std::string label;
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
    bool contains(double x, double y) const noexcept {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }
};

/// One "label x_min y_min x_max y_max" per line; blank lines and lines
/// starting with '#' are skipped. Labels may not contain whitespace.
std::vector<PixelBox> read_boxes(const std::string& path);

struct LocalizationView {
    std::string name;
    int argmax_x = 0;
    int argmax_y = 0;
    std::vector<PixelBox> boxes;
};

struct LocalizationReport {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy = 0.0;
    std::vector<bool> hits;
};

/// A view is correct when its argmax lies inside any of its boxes.
/// Throws ValidationError on empty input or a view without boxes.
LocalizationReport evaluate_localization(std::span<const LocalizationView> views);

/// Accuracy with exactly three decimals, e.g. "0.870".
std::string format_accuracy(double accuracy);

} // namespace tgr
