#pragma once

#include "tgr/error.hpp"
#include "tgr/guidance.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tgr::wire {

// Frame: "TGRW", u16 version, u8 kind, u32 payload length, payload.
// All integers little-endian; floats IEEE float32.
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 11;
/// Frames larger than this are refused before allocation.
inline constexpr std::uint32_t kMaxPayload = 1u << 30;

enum class Kind : std::uint8_t { Handshake = 0, Request = 1, Response = 2, Error = 3 };

/// Capability bits announced by a server.
inline constexpr std::uint8_t kCapSingleView = 1u << 0;
inline constexpr std::uint8_t kCapMultiView = 1u << 1;
std::uint8_t capability_bit(ProviderRole role);

struct Header {
    std::uint16_t version = kVersion;
    Kind kind = Kind::Handshake;
    std::uint32_t length = 0;
};

std::vector<std::uint8_t> encode_header(const Header& header);
/// Throws ProtocolError(BadRequest) on bad magic, unknown kind or oversize.
/// The version is returned as read; callers decide whether it is acceptable.
Header decode_header(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> frame(Kind kind, std::span<const std::uint8_t> payload, std::uint16_t version = kVersion);

/// Client hello: u8 role, u32 largest image (pixels) it will send.
struct ClientHello {
    ProviderRole role = ProviderRole::SingleView;
    std::uint32_t max_pixels = 0;
};
/// Server reply: u8 capability mask, u32 largest image it accepts.
struct ServerHello {
    std::uint8_t capabilities = 0;
    std::uint32_t max_pixels = 0;
};
struct ErrorPayload {
    ProtocolErrorCode code = ProtocolErrorCode::Internal;
    std::string message;
};

std::vector<std::uint8_t> encode(const ClientHello& hello);
std::vector<std::uint8_t> encode(const ServerHello& hello);
std::vector<std::uint8_t> encode(const ErrorPayload& error);
std::vector<std::uint8_t> encode(const GuidanceRequest& request);
std::vector<std::uint8_t> encode(const GuidanceResponse& response);

// Decoders throw ProtocolError(BadRequest) on malformed payloads.
ClientHello decode_client_hello(std::span<const std::uint8_t> payload);
ServerHello decode_server_hello(std::span<const std::uint8_t> payload);
ErrorPayload decode_error(std::span<const std::uint8_t> payload);
GuidanceRequest decode_request(std::span<const std::uint8_t> payload);
GuidanceResponse decode_response(std::span<const std::uint8_t> payload);

} // namespace tgr::wire
