#include "tgr/wire.hpp"

#include "tgr/bytes.hpp"

namespace tgr::wire {

namespace {

constexpr std::uint32_t kMaxSide = 1u << 15;

[[noreturn]] void bad(const std::string& what) { throw ProtocolError(ProtocolErrorCode::BadRequest, what); }

/// Runs a decoder, mapping truncation and other parse failures to BadRequest
/// and insisting that the whole payload is consumed.
template <class Fn>
auto decode_all(std::span<const std::uint8_t> payload, const char* what, Fn&& fn) {
    ByteReader r(payload, what);
    try {
        auto value = fn(r);
        if (r.remaining() != 0) bad(std::string(what) + ": trailing bytes");
        return value;
    } catch (const ParseError& e) {
        bad(e.what());
    }
}

// Images: u32 H, u32 W, then three planes of H*W floats (R, G, B).
void put_image(ByteWriter& w, const Image& img) {
    if (img.channels != 3) throw ValidationError("wire images are 3-channel");
    w.u32(static_cast<std::uint32_t>(img.height));
    w.u32(static_cast<std::uint32_t>(img.width));
    const std::size_t n = img.pixel_count();
    for (int c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < n; ++p) w.f32(img.data[p * 3 + c]);
}

Image get_image(ByteReader& r) {
    const std::uint32_t h = r.u32(), w = r.u32();
    if (h > kMaxSide || w > kMaxSide) bad("image side exceeds the protocol limit");
    Image img(static_cast<int>(w), static_cast<int>(h), 3);
    const std::size_t n = img.pixel_count();
    if (r.remaining() < n * 3 * sizeof(float)) bad("truncated image block");
    for (int c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < n; ++p) img.data[p * 3 + c] = r.f32();
    return img;
}

void put_images(ByteWriter& w, const std::vector<Image>& images, const char* what) {
    if (images.size() != kRingSize) throw ValidationError(std::string(what) + ": exactly 4 images are required");
    for (const auto& img : images) put_image(w, img);
}

std::vector<Image> get_images(ByteReader& r) {
    std::vector<Image> out;
    for (std::size_t v = 0; v < kRingSize; ++v) out.push_back(get_image(r));
    return out;
}

} // namespace

std::uint8_t capability_bit(ProviderRole role) {
    return role == ProviderRole::MultiView ? kCapMultiView : kCapSingleView;
}

std::vector<std::uint8_t> encode_header(const Header& h) {
    ByteWriter w;
    w.magic("TGRW");
    w.u16(h.version);
    w.u8(static_cast<std::uint8_t>(h.kind));
    w.u32(h.length);
    return w.take();
}

Header decode_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != kHeaderSize) bad("frame header must be 11 bytes");
    if (bytes[0] != 'T' || bytes[1] != 'G' || bytes[2] != 'R' || bytes[3] != 'W') bad("bad frame magic");
    ByteReader r(bytes.subspan(4), "frame header");
    Header h;
    h.version = r.u16();
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(Kind::Error)) bad("unknown frame kind " + std::to_string(kind));
    h.kind = static_cast<Kind>(kind);
    h.length = r.u32();
    if (h.length > kMaxPayload)
        throw ProtocolError(ProtocolErrorCode::Oversized, "frame payload of " + std::to_string(h.length) + " bytes");
    return h;
}

std::vector<std::uint8_t> frame(Kind kind, std::span<const std::uint8_t> payload, std::uint16_t version) {
    if (payload.size() > kMaxPayload) throw ProtocolError(ProtocolErrorCode::Oversized, "payload too large to send");
    auto out = encode_header({version, kind, static_cast<std::uint32_t>(payload.size())});
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

std::vector<std::uint8_t> encode(const ClientHello& hello) {
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(hello.role));
    w.u32(hello.max_pixels);
    return w.take();
}

std::vector<std::uint8_t> encode(const ServerHello& hello) {
    ByteWriter w;
    w.u8(hello.capabilities);
    w.u32(hello.max_pixels);
    return w.take();
}

std::vector<std::uint8_t> encode(const ErrorPayload& error) {
    ByteWriter w;
    w.u16(static_cast<std::uint16_t>(error.code));
    w.bytes(error.message);
    return w.take();
}

std::vector<std::uint8_t> encode(const GuidanceRequest& req) {
    ByteWriter w;
    w.string(req.prompt);
    w.f32(req.noise_level);
    w.u64(req.noise_seed);
    for (const auto& pose : req.poses) w.f32s(pose);
    put_images(w, req.rendered_views, "rendered views");
    put_images(w, req.original_views, "original views");
    w.u32(static_cast<std::uint32_t>(req.config.size()));
    for (const auto& [k, v] : req.config) {
        w.string(k);
        w.string(v);
    }
    return w.take();
}

std::vector<std::uint8_t> encode(const GuidanceResponse& resp) {
    ByteWriter w;
    put_images(w, resp.residuals, "residuals");
    return w.take();
}

ClientHello decode_client_hello(std::span<const std::uint8_t> payload) {
    return decode_all(payload, "client handshake", [](ByteReader& r) {
        ClientHello h;
        const std::uint8_t role = r.u8();
        if (role != 1 && role != 2) bad("unknown provider role " + std::to_string(role));
        h.role = static_cast<ProviderRole>(role);
        h.max_pixels = r.u32();
        return h;
    });
}

ServerHello decode_server_hello(std::span<const std::uint8_t> payload) {
    return decode_all(payload, "server handshake", [](ByteReader& r) {
        ServerHello h;
        h.capabilities = r.u8();
        h.max_pixels = r.u32();
        return h;
    });
}

ErrorPayload decode_error(std::span<const std::uint8_t> payload) {
    return decode_all(payload, "error frame", [](ByteReader& r) {
        ErrorPayload e;
        e.code = static_cast<ProtocolErrorCode>(r.u16());
        e.message = r.rest();
        return e;
    });
}

GuidanceRequest decode_request(std::span<const std::uint8_t> payload) {
    return decode_all(payload, "request", [](ByteReader& r) {
        GuidanceRequest req;
        req.prompt = r.string();
        req.noise_level = r.f32();
        req.noise_seed = r.u64();
        for (auto& pose : req.poses) r.f32s(std::span<float>(pose));
        req.rendered_views = get_images(r);
        req.original_views = get_images(r);
        const std::uint32_t count = r.u32();
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string k = r.string();
            std::string v = r.string();
            if (!req.config.emplace(std::move(k), std::move(v)).second) bad("duplicate provider_config key");
        }
        return req;
    });
}

GuidanceResponse decode_response(std::span<const std::uint8_t> payload) {
    return decode_all(payload, "response", [](ByteReader& r) {
        GuidanceResponse resp;
        resp.residuals = get_images(r);
        return resp;
    });
}

} // namespace tgr::wire
