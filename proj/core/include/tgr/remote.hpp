#pragma once

#include "tgr/guidance.hpp"
#include "tgr/wire.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace tgr {

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    /// Parses "host:port". Throws ValidationError when malformed.
    static Endpoint parse(const std::string& text);
    std::string str() const { return host + ":" + std::to_string(port); }
};

struct RemoteOptions {
    ProviderRole role = ProviderRole::SingleView;
    /// Largest image this client is prepared to send, in pixels.
    std::uint32_t max_pixels = 1u << 22;
    int timeout_ms = 30000;
    /// Protocol version announced in every frame.
    std::uint16_t version = wire::kVersion;
};

/// Guidance over a TCP stream. One request in flight per connection; calls
/// from several threads are serialized.
class RemoteProvider final : public GuidanceProvider {
public:
    /// Connects and performs the handshake. Throws ProtocolError with code
    /// Transport, Timeout, VersionMismatch or CapabilityMismatch.
    static std::unique_ptr<RemoteProvider> connect(const Endpoint& endpoint, const RemoteOptions& options = {});
    ~RemoteProvider() override;

    /// Throws ProtocolError(Oversized) before sending when an image exceeds
    /// the negotiated limit, or the server's error code on failure.
    GuidanceResponse guide(const GuidanceRequest& request) override;
    std::string name() const override { return "remote:" + endpoint_.str(); }

    std::uint32_t negotiated_max_pixels() const noexcept { return max_pixels_; }
    std::uint8_t server_capabilities() const noexcept { return capabilities_; }

private:
    RemoteProvider(int fd, Endpoint endpoint, RemoteOptions options);

    int fd_;
    Endpoint endpoint_;
    RemoteOptions options_;
    std::uint32_t max_pixels_ = 0;
    std::uint8_t capabilities_ = 0;
    std::mutex mutex_;
};

/// Reference server for the guidance protocol on 127.0.0.1. Serves one
/// connection at a time on a background thread.
class LoopbackServer {
public:
    using Handler = std::function<GuidanceResponse(const GuidanceRequest&)>;

    struct Options {
        std::uint16_t version = wire::kVersion;
        std::uint8_t capabilities = wire::kCapSingleView | wire::kCapMultiView;
        std::uint32_t max_pixels = 1u << 22;
        /// Port 0 picks a free one.
        std::uint16_t port = 0;
        /// Defaults to zero residuals.
        Handler handler;
    };

    explicit LoopbackServer(Options options);
    ~LoopbackServer();
    LoopbackServer(const LoopbackServer&) = delete;
    LoopbackServer& operator=(const LoopbackServer&) = delete;

    std::uint16_t port() const noexcept { return port_; }
    Endpoint endpoint() const { return {"127.0.0.1", port_}; }
    std::size_t requests_served() const noexcept { return served_.load(); }
    void stop();

private:
    void run();
    void serve(int fd);

    Options options_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<std::size_t> served_{0};
    std::thread thread_;
};

} // namespace tgr
