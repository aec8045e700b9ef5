#pragma once

#include "tgr/image.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tgr {

/// Per-pixel feature vectors, row-major H x W x dim.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int dim = 0;
    std::vector<float> data;
    std::string source_camera_id;

    FeatureMap() = default;
    FeatureMap(int h, int w, int d) : height(h), width(w), dim(d),
        data(static_cast<std::size_t>(h) * w * d, 0.0f) {}

    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height) * width; }
    std::span<float> at(std::size_t pixel) {
        return {data.data() + pixel * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    std::span<const float> at(std::size_t pixel) const {
        return {data.data() + pixel * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }

    /// Throws ValidationError on non-finite values or a size mismatch.
    void validate() const;
};

/// Binary masks paired with one feature map; masks may overlap.
struct MaskSet {
    int height = 0;
    int width = 0;
    /// masks[k][pixel] is 0 or 1.
    std::vector<std::vector<std::uint8_t>> masks;

    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height) * width; }
};

/// Rank-k PCA basis over dim-dimensional features.
struct PcaBasis {
    int dim = 0;
    int k = 0;
    std::vector<float> mean;       // dim
    std::vector<float> components; // k x dim, rows orthonormal
    std::vector<float> explained_variance; // k, non-increasing
    /// Number of components with non-negligible variance; trailing
    /// components beyond it span the null space and carry zero variance.
    int rank = 0;

    std::span<const float> component(int row) const {
        return {components.data() + static_cast<std::size_t>(row) * dim, static_cast<std::size_t>(dim)};
    }
};

/// Text-query embedding, unit-normalized when nonzero.
struct QueryEmbedding {
    std::vector<float> vector;
    std::string label;

    /// Rescales to unit norm (zero vectors stay zero) and checks finiteness.
    static QueryEmbedding make(std::vector<float> v, std::string label);
};

// Containers. All integers are little-endian u32, floats IEEE float32.
//   TGRF: "TGRF" H W C, then H*W*C floats row-major (channels innermost)
//   TGRM: "TGRM" H W K, then K bitmaps of ceil(H*W/8) bytes each; pixel p of
//         a bitmap is bit (p % 8) of byte p / 8 (least significant bit first)
//   TGRP: "TGRP" dim k, then mean[dim], components[k*dim], variances[k]
//   TGRQ: "TGRQ" dim, then vector[dim], then the UTF-8 label up to end of file
void write_feature_map(const FeatureMap& map, const std::string& path);
FeatureMap read_feature_map(const std::string& path);

void write_mask_set(const MaskSet& masks, const std::string& path);
MaskSet read_mask_set(const std::string& path);

void write_pca_basis(const PcaBasis& basis, const std::string& path);
PcaBasis read_pca_basis(const std::string& path);

void write_query(const QueryEmbedding& query, const std::string& path);
QueryEmbedding read_query(const std::string& path);

/// Images travel in the TGRF container as H x W x C feature maps.
FeatureMap to_feature_map(const Image& image);
Image to_image(const FeatureMap& map);

} // namespace tgr
