#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <thread>
#include <vector>

#include "relay/harness/net.hpp"

namespace relay::harness {

// Byte-for-byte echo endpoint used as the upstream for latency probes.
class EchoServer {
public:
    EchoServer();
    ~EchoServer();

    EchoServer(const EchoServer&) = delete;
    EchoServer& operator=(const EchoServer&) = delete;

    std::uint16_t port() const { return port_; }
    void stop();

private:
    void accept_loop();
    void serve_client(net::Socket sock);

    net::Socket listener_;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{true};
    std::thread accept_thread_;
    std::vector<std::thread> workers_;

    std::mutex live_mu_;
    std::vector<int> live_fds_;
};

}  // namespace relay::harness
