#include "tgr/remote.hpp"

#include "tgr/error.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace tgr {

namespace {

[[noreturn]] void io_fail(const std::string& what) {
    const int err = errno;
    if (err == EAGAIN || err == EWOULDBLOCK)
        throw ProtocolError(ProtocolErrorCode::Timeout, what + ": timed out");
    throw ProtocolError(ProtocolErrorCode::Transport, what + ": " + std::strerror(err));
}

void send_all(int fd, std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            io_fail("send");
        }
        sent += static_cast<std::size_t>(n);
    }
}

/// False on a clean end of stream before the first byte.
bool recv_exact(int fd, std::uint8_t* out, std::size_t size) {
    std::size_t got = 0;
    while (got < size) {
        const ssize_t n = ::recv(fd, out + got, size - got, 0);
        if (n == 0) {
            if (got == 0) return false;
            throw ProtocolError(ProtocolErrorCode::Transport, "connection closed mid-frame");
        }
        if (n < 0) {
            if (errno == EINTR) continue;
            io_fail("recv");
        }
        got += static_cast<std::size_t>(n);
    }
    return true;
}

struct Frame {
    wire::Header header;
    std::vector<std::uint8_t> payload;
};

/// Reads one frame; returns false on a clean end of stream.
bool read_frame(int fd, Frame& frame) {
    std::uint8_t head[wire::kHeaderSize];
    if (!recv_exact(fd, head, sizeof head)) return false;
    frame.header = wire::decode_header(head);
    frame.payload.resize(frame.header.length);
    if (frame.header.length > 0 && !recv_exact(fd, frame.payload.data(), frame.payload.size()))
        throw ProtocolError(ProtocolErrorCode::Transport, "connection closed mid-frame");
    return true;
}

void set_timeouts(int fd, int timeout_ms) {
    timeval tv{};
    tv.tv_sec = timeout_ms / 1000;
    tv.tv_usec = (timeout_ms % 1000) * 1000;
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

/// Client-side interpretation of a reply frame header.
void check_reply(const Frame& f, std::uint16_t version, wire::Kind expected) {
    if (f.header.version != version)
        throw ProtocolError(ProtocolErrorCode::VersionMismatch,
                            "server speaks protocol version " + std::to_string(f.header.version) +
                                ", client speaks " + std::to_string(version));
    if (f.header.kind == wire::Kind::Error) {
        const auto e = wire::decode_error(f.payload);
        throw ProtocolError(e.code, "server error: " + e.message);
    }
    if (f.header.kind != expected) throw ProtocolError(ProtocolErrorCode::BadRequest, "unexpected frame kind");
}

std::size_t largest_image(const GuidanceRequest& req) {
    std::size_t m = 0;
    for (const auto& v : req.rendered_views) m = std::max(m, v.pixel_count());
    for (const auto& v : req.original_views) m = std::max(m, v.pixel_count());
    return m;
}

} // namespace

Endpoint Endpoint::parse(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
        throw ValidationError("endpoint '" + text + "' is not host:port");
    Endpoint e;
    e.host = text.substr(0, colon);
    const std::string port = text.substr(colon + 1);
    unsigned long value = 0;
    try {
        std::size_t used = 0;
        value = std::stoul(port, &used);
        if (used != port.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ValidationError("endpoint '" + text + "' has an invalid port");
    }
    if (value == 0 || value > 65535) throw ValidationError("endpoint '" + text + "' has an invalid port");
    e.port = static_cast<std::uint16_t>(value);
    return e;
}

RemoteProvider::RemoteProvider(int fd, Endpoint endpoint, RemoteOptions options)
    : fd_(fd), endpoint_(std::move(endpoint)), options_(options) {}

RemoteProvider::~RemoteProvider() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<RemoteProvider> RemoteProvider::connect(const Endpoint& endpoint, const RemoteOptions& options) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    const std::string port = std::to_string(endpoint.port);
    if (const int rc = ::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &found); rc != 0)
        throw ProtocolError(ProtocolErrorCode::Transport,
                            "cannot resolve " + endpoint.str() + ": " + ::gai_strerror(rc));
    int fd = -1;
    for (addrinfo* a = found; a; a = a->ai_next) {
        fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd < 0) continue;
        set_timeouts(fd, options.timeout_ms);
        if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(found);
    if (fd < 0) throw ProtocolError(ProtocolErrorCode::Transport, "cannot connect to " + endpoint.str());

    std::unique_ptr<RemoteProvider> p(new RemoteProvider(fd, endpoint, options));
    send_all(fd, wire::frame(wire::Kind::Handshake, wire::encode(wire::ClientHello{options.role, options.max_pixels}),
                             options.version));
    Frame reply;
    if (!read_frame(fd, reply))
        throw ProtocolError(ProtocolErrorCode::Transport, "server closed the connection during the handshake");
    check_reply(reply, options.version, wire::Kind::Handshake);
    const auto hello = wire::decode_server_hello(reply.payload);
    if (!(hello.capabilities & wire::capability_bit(options.role)))
        throw ProtocolError(ProtocolErrorCode::CapabilityMismatch,
                            std::string("server does not provide ") +
                                (options.role == ProviderRole::MultiView ? "multi-view" : "single-view") +
                                " residuals");
    p->capabilities_ = hello.capabilities;
    p->max_pixels_ = std::min(options.max_pixels, hello.max_pixels);
    return p;
}

GuidanceResponse RemoteProvider::guide(const GuidanceRequest& request) {
    request.validate();
    if (largest_image(request) > max_pixels_)
        throw ProtocolError(ProtocolErrorCode::Oversized, "image of " + std::to_string(largest_image(request)) +
                                                              " pixels exceeds the negotiated limit of " +
                                                              std::to_string(max_pixels_));
    std::lock_guard lock(mutex_);
    send_all(fd_, wire::frame(wire::Kind::Request, wire::encode(request), options_.version));
    Frame reply;
    if (!read_frame(fd_, reply)) throw ProtocolError(ProtocolErrorCode::Transport, "server closed the connection");
    check_reply(reply, options_.version, wire::Kind::Response);
    GuidanceResponse resp = wire::decode_response(reply.payload);
    resp.validate(request);
    return resp;
}

LoopbackServer::LoopbackServer(Options options) : options_(std::move(options)) {
    if (!options_.handler) {
        options_.handler = [](const GuidanceRequest& req) { return NullProvider().guide(req); };
    }
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) io_fail("socket");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(options_.port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 8) != 0) {
        const int err = errno;
        ::close(listen_fd_);
        errno = err;
        io_fail("bind 127.0.0.1:" + std::to_string(options_.port));
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { run(); });
}

LoopbackServer::~LoopbackServer() { stop(); }

void LoopbackServer::stop() {
    if (stopping_.exchange(true)) return;
    if (thread_.joinable()) thread_.join();
    if (listen_fd_ >= 0) ::close(listen_fd_);
    listen_fd_ = -1;
}

void LoopbackServer::run() {
    while (!stopping_.load()) {
        pollfd pfd{listen_fd_, POLLIN, 0};
        if (::poll(&pfd, 1, 50) <= 0) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        set_timeouts(fd, 5000);
        try {
            serve(fd);
        } catch (const std::exception&) {
            // A broken client only ends its own connection.
        }
        ::close(fd);
    }
}

void LoopbackServer::serve(int fd) {
    auto send_error = [&](ProtocolErrorCode code, const std::string& message) {
        send_all(fd, wire::frame(wire::Kind::Error, wire::encode(wire::ErrorPayload{code, message}), options_.version));
    };
    bool greeted = false;
    while (!stopping_.load()) {
        pollfd pfd{fd, POLLIN, 0};
        if (::poll(&pfd, 1, 50) <= 0) continue; // idle; re-check the stop flag
        Frame f;
        if (!read_frame(fd, f)) return;
        if (f.header.version != options_.version) {
            send_error(ProtocolErrorCode::VersionMismatch,
                       "server speaks protocol version " + std::to_string(options_.version));
            return;
        }
        if (!greeted) {
            if (f.header.kind != wire::Kind::Handshake) {
                send_error(ProtocolErrorCode::BadRequest, "expected a handshake");
                return;
            }
            const auto hello = wire::decode_client_hello(f.payload);
            if (!(options_.capabilities & wire::capability_bit(hello.role))) {
                send_error(ProtocolErrorCode::CapabilityMismatch, "role not supported");
                return;
            }
            send_all(fd, wire::frame(wire::Kind::Handshake,
                                     wire::encode(wire::ServerHello{options_.capabilities, options_.max_pixels}),
                                     options_.version));
            greeted = true;
            continue;
        }
        if (f.header.kind != wire::Kind::Request) {
            send_error(ProtocolErrorCode::BadRequest, "expected a request");
            return;
        }
        try {
            const GuidanceRequest req = wire::decode_request(f.payload);
            if (largest_image(req) > options_.max_pixels)
                throw ProtocolError(ProtocolErrorCode::Oversized, "image exceeds the server limit");
            const GuidanceResponse resp = options_.handler(req);
            send_all(fd, wire::frame(wire::Kind::Response, wire::encode(resp), options_.version));
            ++served_;
        } catch (const ProtocolError& e) {
            send_error(e.code(), e.what());
        } catch (const std::exception& e) {
            send_error(ProtocolErrorCode::Internal, e.what());
        }
    }
}

} // namespace tgr
