#include "tgr/ply.hpp"

#include "tgr/error.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

static_assert(std::endian::native == std::endian::little, "splat files are little-endian");

namespace tgr {

namespace {

constexpr float kShC0 = 0.28209479177387814f;

enum class ScalarType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<ScalarType> parse_type(const std::string& name) {
    static const std::map<std::string, ScalarType> types = {
        {"char", ScalarType::Int8},     {"int8", ScalarType::Int8},
        {"uchar", ScalarType::UInt8},   {"uint8", ScalarType::UInt8},
        {"short", ScalarType::Int16},   {"int16", ScalarType::Int16},
        {"ushort", ScalarType::UInt16}, {"uint16", ScalarType::UInt16},
        {"int", ScalarType::Int32},     {"int32", ScalarType::Int32},
        {"uint", ScalarType::UInt32},   {"uint32", ScalarType::UInt32},
        {"float", ScalarType::Float32}, {"float32", ScalarType::Float32},
        {"double", ScalarType::Float64}, {"float64", ScalarType::Float64},
    };
    const auto it = types.find(name);
    if (it == types.end()) return std::nullopt;
    return it->second;
}

std::size_t type_size(ScalarType t) {
    switch (t) {
    case ScalarType::Int8:
    case ScalarType::UInt8: return 1;
    case ScalarType::Int16:
    case ScalarType::UInt16: return 2;
    case ScalarType::Int32:
    case ScalarType::UInt32:
    case ScalarType::Float32: return 4;
    case ScalarType::Float64: return 8;
    }
    return 0;
}

template <class T>
T load_as(const unsigned char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

/// Float properties are passed through bit-exactly; other types are converted.
float decode(ScalarType t, const unsigned char* p) {
    switch (t) {
    case ScalarType::Int8: return static_cast<float>(load_as<std::int8_t>(p));
    case ScalarType::UInt8: return static_cast<float>(load_as<std::uint8_t>(p));
    case ScalarType::Int16: return static_cast<float>(load_as<std::int16_t>(p));
    case ScalarType::UInt16: return static_cast<float>(load_as<std::uint16_t>(p));
    case ScalarType::Int32: return static_cast<float>(load_as<std::int32_t>(p));
    case ScalarType::UInt32: return static_cast<float>(load_as<std::uint32_t>(p));
    case ScalarType::Float32: return load_as<float>(p);
    case ScalarType::Float64: return static_cast<float>(load_as<double>(p));
    }
    return 0.0f;
}

struct Property {
    std::string name;
    ScalarType type;
    std::size_t offset;
};

struct Header {
    std::size_t vertex_count = 0;
    std::vector<Property> properties;
    std::size_t stride = 0;
};

Header parse_header(std::istream& in, const std::string& source) {
    auto fail = [&](const std::string& what) -> void {
        throw ParseError(source + ": malformed header: " + what);
    };
    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply") fail("missing 'ply' magic");

    Header header;
    bool saw_format = false;
    bool in_vertex = false;
    bool saw_vertex = false;
    for (;;) {
        if (!std::getline(in, line)) fail("missing end_header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
        if (keyword == "end_header") break;
        if (keyword == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt != "binary_little_endian")
                fail("unsupported format '" + fmt + "' (binary_little_endian required)");
            saw_format = true;
        } else if (keyword == "element") {
            std::string name;
            long long count = -1;
            ls >> name >> count;
            if (count < 0) fail("bad element count for '" + name + "'");
            if (name == "vertex") {
                if (saw_vertex) fail("duplicate vertex element");
                saw_vertex = in_vertex = true;
                header.vertex_count = static_cast<std::size_t>(count);
            } else {
                if (count != 0) fail("unsupported element '" + name + "'");
                in_vertex = false;
            }
        } else if (keyword == "property") {
            std::string type_name, name;
            ls >> type_name;
            if (type_name == "list") fail("list properties are not supported");
            ls >> name;
            if (!in_vertex) continue;
            const auto type = parse_type(type_name);
            if (!type) fail("unknown property type '" + type_name + "'");
            for (const Property& p : header.properties)
                if (p.name == name) fail("duplicate property '" + name + "'");
            header.properties.push_back({name, *type, header.stride});
            header.stride += type_size(*type);
        } else {
            fail("unexpected line '" + line + "'");
        }
    }
    if (!saw_format) fail("missing format line");
    if (!saw_vertex) fail("missing vertex element");
    return header;
}

} // namespace

GaussianScene read_scene(std::istream& in, const std::string& source) {
    const Header header = parse_header(in, source);

    std::map<std::string, const Property*> by_name;
    for (const Property& p : header.properties) by_name[p.name] = &p;
    auto find = [&](const std::string& name) -> const Property* {
        const auto it = by_name.find(name);
        return it == by_name.end() ? nullptr : it->second;
    };
    auto require = [&](const std::string& name) {
        const Property* p = find(name);
        if (!p) throw ParseError(source + ": missing required property '" + name + "'");
        return p;
    };

    const std::array<const Property*, 3> pos = {require("x"), require("y"), require("z")};
    const std::array<const Property*, 3> scale = {require("scale_0"), require("scale_1"),
                                                  require("scale_2")};
    const std::array<const Property*, 4> rot = {require("rot_0"), require("rot_1"),
                                                require("rot_2"), require("rot_3")};
    const Property* opacity = require("opacity");

    std::array<const Property*, 3> color = {find("red"), find("green"), find("blue")};
    bool color_from_sh = false;
    if (!color[0] || !color[1] || !color[2]) {
        color = {find("f_dc_0"), find("f_dc_1"), find("f_dc_2")};
        if (!color[0] || !color[1] || !color[2])
            throw ParseError(source + ": missing color properties (red/green/blue or f_dc_0..2)");
        color_from_sh = true;
    }

    std::array<const Property*, kLangDim> lang{};
    std::size_t lang_found = 0;
    for (std::size_t k = 0; k < kLangDim; ++k) {
        lang[k] = find("f_lang_" + std::to_string(k));
        lang_found += lang[k] != nullptr;
    }
    if (lang_found != 0 && lang_found != kLangDim)
        throw ParseError(source + ": incomplete language embedding (" + std::to_string(lang_found) +
                         " of 64 f_lang_* properties)");

    // Read the body and check its size against the declared vertex count.
    std::vector<unsigned char> body((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    const std::size_t expected = header.vertex_count * header.stride;
    if (body.size() != expected) {
        const std::size_t complete = header.stride ? body.size() / header.stride : 0;
        throw ParseError(source + ": vertex count mismatch: header declares " +
                         std::to_string(header.vertex_count) + " vertices, data holds " +
                         std::to_string(complete) +
                         (body.size() % std::max<std::size_t>(1, header.stride) ? " plus a partial record" : ""));
    }

    GaussianScene scene;
    scene.resize(header.vertex_count);
    for (std::size_t i = 0; i < header.vertex_count; ++i) {
        const unsigned char* record = body.data() + i * header.stride;
        auto get = [&](const Property* p) {
            const float v = decode(p->type, record + p->offset);
            if (!std::isfinite(v))
                throw ParseError(source + ": vertex " + std::to_string(i) +
                                 ": non-finite value in property '" + p->name + "'");
            return v;
        };
        for (int a = 0; a < 3; ++a) {
            scene.positions[i][a] = get(pos[a]);
            scene.log_scales[i][a] = get(scale[a]);
            const float c = get(color[a]);
            scene.colors[i][a] = color_from_sh ? std::clamp(0.5f + kShC0 * c, 0.0f, 1.0f) : c;
        }
        Vec4f q;
        for (int a = 0; a < 4; ++a) q[a] = get(rot[a]);
        const double norm = q.cast<double>().norm();
        if (norm < 1e-12)
            throw ParseError(source + ": vertex " + std::to_string(i) + ": zero rotation quaternion");
        if (std::abs(norm - 1.0) > 1e-5) q = (q.cast<double>() / norm).cast<float>();
        scene.rotations[i] = q;
        scene.opacity_logits[i] = get(opacity);
        if (lang_found) {
            auto l = scene.lang_of(i);
            for (std::size_t k = 0; k < kLangDim; ++k) l[k] = get(lang[k]);
        }
    }
    scene.validate();
    return scene;
}

GaussianScene load_scene(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open scene file " + path);
    return read_scene(in, path);
}

void write_scene(const GaussianScene& scene, std::ostream& out) {
    scene.validate();
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\nelement vertex " << scene.size() << '\n';
    for (const char* name : {"x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
                             "rot_2", "rot_3", "opacity", "red", "green", "blue"})
        header << "property float " << name << '\n';
    for (std::size_t k = 0; k < kLangDim; ++k) header << "property float f_lang_" << k << '\n';
    header << "end_header\n";
    out << header.str();

    std::vector<float> record;
    record.reserve(14 + kLangDim);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        record.clear();
        for (int a = 0; a < 3; ++a) record.push_back(scene.positions[i][a]);
        for (int a = 0; a < 3; ++a) record.push_back(scene.log_scales[i][a]);
        for (int a = 0; a < 4; ++a) record.push_back(scene.rotations[i][a]);
        record.push_back(scene.opacity_logits[i]);
        for (int a = 0; a < 3; ++a) record.push_back(scene.colors[i][a]);
        const auto l = scene.lang_of(i);
        record.insert(record.end(), l.begin(), l.end());
        out.write(reinterpret_cast<const char*>(record.data()),
                  static_cast<std::streamsize>(record.size() * sizeof(float)));
    }
    if (!out) throw ValidationError("failed writing scene data");
}

void save_scene(const GaussianScene& scene, const std::string& path) {
    scene.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write scene file " + path);
    write_scene(scene, out);
}

} // namespace tgr
