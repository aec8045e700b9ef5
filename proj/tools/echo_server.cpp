// Loopback guidance server answering every request with zero residuals.
#include "tgr/remote.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <thread>

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }
} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-residual guidance server for protocol testing"};
    int port = 0;
    unsigned max_pixels = 1u << 22;
    app.add_option("--port", port, "Listen port, 0 picks a free one");
    app.add_option("--max-pixels", max_pixels, "Largest image accepted");
    CLI11_PARSE(app, argc, argv);

    tgr::LoopbackServer::Options opts;
    opts.port = static_cast<std::uint16_t>(port);
    opts.max_pixels = max_pixels;
    tgr::LoopbackServer server(opts);
    std::cout << server.endpoint().str() << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}
