#include "tgr/containers.hpp"

#include "tgr/bytes.hpp"
#include "tgr/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace tgr {

namespace {

constexpr std::uint32_t kMaxSide = 1u << 16;
constexpr std::uint32_t kMaxDim = 1u << 16;

std::uint32_t read_side(ByteReader& r, const char* what) {
    const std::uint32_t v = r.u32();
    if (v > kMaxSide) throw ParseError(r.source() + ": implausible " + what + " " + std::to_string(v));
    return v;
}

void check_finite(std::span<const float> values, const std::string& source) {
    for (std::size_t k = 0; k < values.size(); ++k)
        if (!std::isfinite(values[k]))
            throw ParseError(source + ": non-finite value at element " + std::to_string(k));
}

} // namespace

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("failed writing " + path);
}

void FeatureMap::validate() const {
    if (height < 0 || width < 0 || dim < 0 ||
        data.size() != static_cast<std::size_t>(height) * width * dim)
        throw ValidationError("feature map size does not match its header");
    for (std::size_t k = 0; k < data.size(); ++k)
        if (!std::isfinite(data[k]))
            throw ValidationError("feature map has a non-finite value at element " + std::to_string(k));
}

QueryEmbedding QueryEmbedding::make(std::vector<float> v, std::string label) {
    double n2 = 0;
    for (float x : v) {
        if (!std::isfinite(x)) throw ValidationError("query embedding has non-finite values");
        n2 += static_cast<double>(x) * x;
    }
    if (n2 > 0) {
        const double inv = 1.0 / std::sqrt(n2);
        for (float& x : v) x = static_cast<float>(x * inv);
    }
    return {std::move(v), std::move(label)};
}

void write_feature_map(const FeatureMap& map, const std::string& path) {
    map.validate();
    ByteWriter w;
    w.magic("TGRF");
    w.u32(static_cast<std::uint32_t>(map.height));
    w.u32(static_cast<std::uint32_t>(map.width));
    w.u32(static_cast<std::uint32_t>(map.dim));
    w.f32s(map.data);
    write_file_bytes(path, w.data());
}

FeatureMap read_feature_map(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes, path);
    r.expect_magic("TGRF");
    FeatureMap map;
    map.height = static_cast<int>(read_side(r, "height"));
    map.width = static_cast<int>(read_side(r, "width"));
    const std::uint32_t dim = r.u32();
    if (dim > kMaxDim) throw ParseError(path + ": implausible channel count");
    map.dim = static_cast<int>(dim);
    map.data = r.f32s(map.pixel_count() * map.dim);
    if (r.remaining() != 0) throw ParseError(path + ": trailing bytes after feature data");
    check_finite(map.data, path);
    return map;
}

void write_mask_set(const MaskSet& set, const std::string& path) {
    const std::size_t pixels = set.pixel_count();
    ByteWriter w;
    w.magic("TGRM");
    w.u32(static_cast<std::uint32_t>(set.height));
    w.u32(static_cast<std::uint32_t>(set.width));
    w.u32(static_cast<std::uint32_t>(set.masks.size()));
    std::vector<std::uint8_t> packed((pixels + 7) / 8);
    for (const auto& mask : set.masks) {
        if (mask.size() != pixels) throw ValidationError("mask size does not match the mask set");
        std::fill(packed.begin(), packed.end(), 0);
        for (std::size_t p = 0; p < pixels; ++p)
            if (mask[p]) packed[p / 8] |= static_cast<std::uint8_t>(1u << (p % 8));
        for (std::uint8_t b : packed) w.u8(b);
    }
    write_file_bytes(path, w.data());
}

MaskSet read_mask_set(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes, path);
    r.expect_magic("TGRM");
    MaskSet set;
    set.height = static_cast<int>(read_side(r, "height"));
    set.width = static_cast<int>(read_side(r, "width"));
    const std::uint32_t count = r.u32();
    const std::size_t pixels = set.pixel_count();
    const std::size_t stride = (pixels + 7) / 8;
    if (static_cast<std::size_t>(count) * stride != r.remaining())
        throw ParseError(path + ": mask count " + std::to_string(count) + " does not match file size");
    set.masks.resize(count);
    for (auto& mask : set.masks) {
        const std::string packed = r.bytes(stride);
        mask.resize(pixels);
        for (std::size_t p = 0; p < pixels; ++p)
            mask[p] = (static_cast<std::uint8_t>(packed[p / 8]) >> (p % 8)) & 1u;
    }
    return set;
}

void write_pca_basis(const PcaBasis& b, const std::string& path) {
    if (b.mean.size() != static_cast<std::size_t>(b.dim) ||
        b.components.size() != static_cast<std::size_t>(b.k) * b.dim ||
        b.explained_variance.size() != static_cast<std::size_t>(b.k))
        throw ValidationError("PCA basis arrays do not match dim/k");
    ByteWriter w;
    w.magic("TGRP");
    w.u32(static_cast<std::uint32_t>(b.dim));
    w.u32(static_cast<std::uint32_t>(b.k));
    w.f32s(b.mean);
    w.f32s(b.components);
    w.f32s(b.explained_variance);
    write_file_bytes(path, w.data());
}

PcaBasis read_pca_basis(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes, path);
    r.expect_magic("TGRP");
    PcaBasis b;
    const std::uint32_t dim = r.u32(), k = r.u32();
    if (dim > kMaxDim || k > dim) throw ParseError(path + ": implausible basis shape");
    b.dim = static_cast<int>(dim);
    b.k = static_cast<int>(k);
    b.mean = r.f32s(dim);
    b.components = r.f32s(static_cast<std::size_t>(k) * dim);
    b.explained_variance = r.f32s(k);
    if (r.remaining() != 0) throw ParseError(path + ": trailing bytes after basis");
    check_finite(b.mean, path);
    check_finite(b.components, path);
    check_finite(b.explained_variance, path);
    b.rank = 0;
    for (float v : b.explained_variance) b.rank += v > 0.0f;
    return b;
}

void write_query(const QueryEmbedding& q, const std::string& path) {
    ByteWriter w;
    w.magic("TGRQ");
    w.u32(static_cast<std::uint32_t>(q.vector.size()));
    w.f32s(q.vector);
    w.bytes(q.label);
    write_file_bytes(path, w.data());
}

QueryEmbedding read_query(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes, path);
    r.expect_magic("TGRQ");
    const std::uint32_t dim = r.u32();
    if (dim > kMaxDim) throw ParseError(path + ": implausible query dimension");
    std::vector<float> v = r.f32s(dim);
    check_finite(v, path);
    std::string label = r.rest();
    double n2 = 0;
    for (float x : v) n2 += static_cast<double>(x) * x;
    // Stored vectors are already unit length; only renormalize if they drifted.
    if (n2 > 0 && std::abs(std::sqrt(n2) - 1.0) > 1e-5) return QueryEmbedding::make(std::move(v), std::move(label));
    return {std::move(v), std::move(label)};
}

FeatureMap to_feature_map(const Image& image) {
    FeatureMap m;
    m.height = image.height;
    m.width = image.width;
    m.dim = image.channels;
    m.data = image.data;
    return m;
}

Image to_image(const FeatureMap& map) {
    Image img;
    img.width = map.width;
    img.height = map.height;
    img.channels = map.dim;
    img.data = map.data;
    return img;
}

} // namespace tgr
