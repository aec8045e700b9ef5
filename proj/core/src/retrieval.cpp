#include "tgr/retrieval.hpp"

#include "tgr/error.hpp"
#include "tgr/parallel.hpp"
#include "tgr/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tgr {

namespace {

void check_query(const QueryEmbedding& query) {
    if (query.vector.size() != kLangDim)
        throw ValidationError("query '" + query.label + "' has dimension " + std::to_string(query.vector.size()) +
                              ", expected " + std::to_string(kLangDim));
}

} // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        ab += static_cast<double>(a[c]) * b[c];
        aa += static_cast<double>(a[c]) * a[c];
        bb += static_cast<double>(b[c]) * b[c];
    }
    if (aa == 0 || bb == 0) return 0.0;
    return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

std::vector<float> relevance_scores(const GaussianScene& scene, const QueryEmbedding& query) {
    check_query(query);
    std::vector<float> scores(scene.size());
    parallel_for(scene.size(), [&](std::size_t i) {
        scores[i] = static_cast<float>(cosine_similarity(scene.lang_of(i), query.vector));
    });
    return scores;
}

RetrievalResult retrieve(const GaussianScene& scene, const QueryEmbedding& query, double tau) {
    if (!(tau >= -1.0 && tau <= 1.0)) throw ValidationError("tau must lie in [-1, 1]");
    RetrievalResult r;
    r.tau = tau;
    r.scores = relevance_scores(scene, query);
    for (std::size_t i = 0; i < r.scores.size(); ++i)
        if (r.scores[i] > tau) r.member_indices.push_back(i);
    if (!r.member_indices.empty()) r.box = object_box(scene, r.member_indices);
    return r;
}

void locate_argmax(RelevanceMap& map) {
    if (map.scores.empty()) throw ValidationError("empty relevance map");
    const auto it = std::max_element(map.scores.begin(), map.scores.end()); // first maximum
    const auto p = static_cast<std::size_t>(it - map.scores.begin());
    map.argmax_x = static_cast<int>(p % static_cast<std::size_t>(map.width));
    map.argmax_y = static_cast<int>(p / static_cast<std::size_t>(map.width));
    map.max_score = *it;
}

RelevanceMap render_relevance_map(const GaussianScene& scene, const Camera& camera, const QueryEmbedding& query) {
    check_query(query);
    const RenderOutput out = render(scene, camera, ChannelSet::feature_only());
    RelevanceMap map;
    map.width = out.width;
    map.height = out.height;
    map.scores.resize(static_cast<std::size_t>(out.width) * out.height);
    parallel_for(map.scores.size(), [&](std::size_t p) {
        const std::span<const float> f(out.feature.data() + p * kLangDim, kLangDim);
        map.scores[p] = static_cast<float>(cosine_similarity(f, query.vector));
    });
    locate_argmax(map);
    return map;
}

void write_relevance_map(const RelevanceMap& map, const std::string& path) {
    FeatureMap fm(map.height, map.width, 1);
    fm.data = map.scores;
    write_feature_map(fm, path);
}

RelevanceMap read_relevance_map(const std::string& path) {
    const FeatureMap fm = read_feature_map(path);
    if (fm.dim != 1) throw ValidationError(path + ": relevance maps have one channel, found " + std::to_string(fm.dim));
    RelevanceMap map;
    map.width = fm.width;
    map.height = fm.height;
    map.scores = fm.data;
    locate_argmax(map);
    return map;
}

std::vector<PixelBox> read_boxes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::vector<PixelBox> boxes;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        PixelBox b;
        std::string extra;
        if (!(ss >> b.label >> b.x_min >> b.y_min >> b.x_max >> b.y_max) || (ss >> extra))
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 'label x_min y_min x_max y_max'");
        if (b.x_min > b.x_max || b.y_min > b.y_max)
            throw ParseError(path + ":" + std::to_string(lineno) + ": box minimum exceeds maximum");
        boxes.push_back(std::move(b));
    }
    return boxes;
}

LocalizationReport evaluate_localization(std::span<const LocalizationView> views) {
    if (views.empty()) throw ValidationError("localization needs at least one view");
    LocalizationReport r;
    r.total = views.size();
    for (const auto& v : views) {
        if (v.boxes.empty()) throw ValidationError("view '" + v.name + "' has no ground-truth box");
        const bool hit = std::any_of(v.boxes.begin(), v.boxes.end(),
                                     [&](const PixelBox& b) { return b.contains(v.argmax_x, v.argmax_y); });
        r.hits.push_back(hit);
        r.correct += hit;
    }
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

std::string format_accuracy(double accuracy) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", accuracy);
    return buf;
}

} // namespace tgr
