#include "support.hpp"
#include "tgr/error.hpp"
#include "tgr/ply.hpp"
#include "tgr/scene.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace tgr;
using namespace tgr::test;

namespace {

GaussianScene round_trip(const GaussianScene& s) {
    std::stringstream buf;
    write_scene(s, buf);
    return read_scene(buf);
}

/// Writes a splat file by hand with a chosen property list.
std::string handmade_ply(const std::vector<std::string>& names, const std::vector<std::vector<float>>& rows,
                         long long declared_count) {
    std::ostringstream out;
    out << "ply\nformat binary_little_endian 1.0\ncomment handmade\nelement vertex " << declared_count << '\n';
    for (const auto& n : names) out << "property float " << n << '\n';
    out << "end_header\n";
    for (const auto& r : rows) out.write(reinterpret_cast<const char*>(r.data()), static_cast<std::streamsize>(r.size() * 4));
    return out.str();
}

const std::vector<std::string> kBasicNames = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
                                              "opacity", "scale_0", "scale_1", "scale_2",
                                              "rot_0", "rot_1", "rot_2", "rot_3"};

std::vector<float> basic_row(float x) {
    return {x, 1, 2, 0, 0, 0, 0, 0, 0, 0.5f, -1, -1, -1, 2, 0, 0, 0};
}

} // namespace

TEST(SceneIo, RandomSceneRoundTripsBitExactly) {
    Rng rng(1);
    const GaussianScene s = random_scene(rng, 100);
    EXPECT_TRUE(round_trip(s).bit_equal(s));

    const auto dir = temp_dir("scene_io");
    save_scene(s, (dir / "a.ply").string());
    EXPECT_TRUE(load_scene((dir / "a.ply").string()).bit_equal(s));
}

TEST(SceneIo, EmptySceneRoundTrips) {
    const GaussianScene s;
    const GaussianScene back = round_trip(s);
    EXPECT_EQ(back.size(), 0u);
}

TEST(SceneIo, NaNPositionIsRefused) {
    Rng rng(2);
    GaussianScene s = random_scene(rng, 3);
    s.positions[1].x() = std::nanf("");
    std::stringstream buf;
    EXPECT_THROW(write_scene(s, buf), ValidationError);
    EXPECT_TRUE(buf.str().empty());
}

TEST(SceneIo, LegacyFileWithoutLanguageLoadsZeros) {
    std::istringstream in(handmade_ply(kBasicNames, {basic_row(0), basic_row(3)}, 2));
    const GaussianScene s = read_scene(in);
    ASSERT_EQ(s.size(), 2u);
    for (float v : s.lang) EXPECT_EQ(v, 0.0f);
    // Unnormalized quaternions are normalized on load; SH DC 0 maps to gray.
    EXPECT_FLOAT_EQ(s.rotations[0][0], 1.0f);
    EXPECT_FLOAT_EQ(s.colors[1][2], 0.5f);
    EXPECT_FLOAT_EQ(s.positions[1][0], 3.0f);
}

TEST(SceneIo, LanguageAttributesAreLoaded) {
    auto names = kBasicNames;
    for (std::size_t k = 0; k < kLangDim; ++k) names.push_back("f_lang_" + std::to_string(k));
    std::vector<std::vector<float>> rows;
    for (int r = 0; r < 2; ++r) {
        auto row = basic_row(static_cast<float>(r));
        for (std::size_t k = 0; k < kLangDim; ++k) row.push_back(static_cast<float>(r * 100 + k));
        rows.push_back(row);
    }
    std::istringstream in(handmade_ply(names, rows, 2));
    const GaussianScene s = read_scene(in);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.lang_of(1)[63], 163.0f);
}

TEST(SceneIo, VertexCountMismatchIsAnError) {
    std::istringstream in(handmade_ply(kBasicNames, {basic_row(0), basic_row(1)}, 3));
    try {
        read_scene(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("vertex count"), std::string::npos);
    }
}

TEST(SceneIo, NonFiniteValueNamesTheVertex) {
    auto bad = basic_row(0);
    bad[2] = std::numeric_limits<float>::infinity();
    std::istringstream in(handmade_ply(kBasicNames, {basic_row(0), bad}, 2));
    try {
        read_scene(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("vertex 1"), std::string::npos) << e.what();
    }
}

TEST(SceneIo, MalformedHeadersAreRejected) {
    for (const std::string text :
         {std::string("not a ply\n"), std::string("ply\nformat ascii 1.0\nelement vertex 0\nend_header\n"),
          std::string("ply\nformat binary_little_endian 1.0\nelement vertex 0\nproperty float x\n"),
          std::string("ply\nformat binary_little_endian 1.0\nelement vertex 0\nproperty list uchar int f\nend_header\n")}) {
        std::istringstream in(text);
        EXPECT_THROW(read_scene(in), ParseError) << text;
    }
    auto names = kBasicNames;
    names.push_back("f_lang_0");
    auto row = basic_row(0);
    row.push_back(1);
    std::istringstream partial(handmade_ply(names, {row}, 1));
    EXPECT_THROW(read_scene(partial), ParseError);
}

TEST(ObjectBox, TwoPoints) {
    GaussianScene s;
    s.push_back({0, 0, 0}, Vec3f::Zero(), Vec4f(1, 0, 0, 0), Vec3f::Zero(), 0);
    s.push_back({2, 0, 0}, Vec3f::Zero(), Vec4f(1, 0, 0, 0), Vec3f::Zero(), 0);
    const std::vector<std::size_t> idx = {0, 1};
    const ObjectBox box = object_box(s, idx);
    EXPECT_EQ(box.center, Eigen::Vector3f(1, 0, 0));
    EXPECT_EQ(box.half_extents, Eigen::Vector3f(1, 0, 0));
}

TEST(ObjectBox, SingleMember) {
    GaussianScene s;
    s.push_back({0.3f, -2, 5}, Vec3f::Zero(), Vec4f(1, 0, 0, 0), Vec3f::Zero(), 0);
    const std::vector<std::size_t> idx = {0};
    const ObjectBox box = object_box(s, idx);
    EXPECT_EQ(box.center, s.positions[0]);
    EXPECT_EQ(box.half_extents, Eigen::Vector3f::Zero());
}

TEST(ObjectBox, EmptyOrOutOfRangeIsAnError) {
    GaussianScene s;
    s.resize(2);
    EXPECT_THROW(object_box(s, std::vector<std::size_t>{}), ValidationError);
    EXPECT_THROW(object_box(s, std::vector<std::size_t>{5}), ValidationError);
}

TEST(ObjectBox, OutlierIsTrimmed) {
    // 100 points on the unit sphere plus one at distance 100.
    GaussianScene s;
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
        v.normalize();
        s.push_back(v.cast<float>(), Vec3f::Zero(), Vec4f(1, 0, 0, 0), Vec3f::Zero(), 0);
    }
    s.push_back({100, 0, 0}, Vec3f::Zero(), Vec4f(1, 0, 0, 0), Vec3f::Zero(), 0);
    std::vector<std::size_t> idx(s.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const ObjectBox box = object_box(s, idx);

    // Brute-force oracle: sort each axis, keep ranks floor(0.02*(n-1))..ceil(0.98*(n-1)).
    const std::size_t n = s.size();
    std::vector<std::size_t> kept;
    double lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
        std::vector<double> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back(s.positions[i][a]);
        std::sort(v.begin(), v.end());
        lo[a] = v[static_cast<std::size_t>(std::floor(0.02 * (n - 1)))];
        hi[a] = v[static_cast<std::size_t>(std::ceil(0.98 * (n - 1)))];
    }
    for (std::size_t i = 0; i < n; ++i) {
        bool in = true;
        for (int a = 0; a < 3; ++a) in = in && s.positions[i][a] >= lo[a] && s.positions[i][a] <= hi[a];
        if (in) kept.push_back(i);
    }
    EXPECT_EQ(box.member_indices, kept);
    EXPECT_EQ(std::count(kept.begin(), kept.end(), 100u), 0);
    for (int a = 0; a < 3; ++a) {
        EXPECT_LT(std::abs(box.center[a]), 0.2f);
        EXPECT_GT(box.half_extents[a], 0.8f);
        EXPECT_LE(box.half_extents[a], 1.2f);
    }
    for (std::size_t i : box.member_indices) EXPECT_TRUE(box.contains(s.positions[i]));
}

TEST(ObjectBox, TranslationEquivariance) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        GaussianScene s = random_scene(rng, 30 + rng.below(100));
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (rng.uniform() < 0.6) idx.push_back(i);
        if (idx.empty()) idx.push_back(0);
        // Power-of-two shift keeps float addition exact for these magnitudes.
        const Vec3f t(4.0f, -8.0f, 2.0f);
        GaussianScene shifted = s;
        for (auto& p : shifted.positions) p += t;
        const ObjectBox a = object_box(s, idx), b = object_box(shifted, idx);
        EXPECT_EQ(a.member_indices, b.member_indices);
        EXPECT_TRUE((b.center - (a.center + t)).cwiseAbs().maxCoeff() < 1e-5f);
        EXPECT_TRUE((b.half_extents - a.half_extents).cwiseAbs().maxCoeff() < 1e-5f);
    }
}

TEST(SceneValidation, CatchesInconsistentArrays) {
    GaussianScene s;
    s.resize(3);
    s.lang.pop_back();
    EXPECT_THROW(s.validate(), ValidationError);
    GaussianScene q;
    q.resize(1);
    q.rotations[0] = Vec4f(2, 0, 0, 0);
    EXPECT_THROW(q.validate(), ValidationError);
}
