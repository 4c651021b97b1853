#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "relay/harness/net.hpp"
#include "relay/harness/profile.hpp"
#include "relay/harness/token_bucket.hpp"

namespace relay::harness {

// Userspace TCP relay that forwards every accepted connection to a fixed
// upstream, delaying each direction by effective_rtt/2 and metering all
// traffic through one token bucket (the shared link).
//
// Each direction of a connection runs a reader and a writer thread joined by
// a bounded delay queue, so injected latency does not throttle bandwidth:
// the reader keeps pulling while earlier bytes wait out their delay.
class Shaper {
public:
    Shaper(NetworkProfile profile, std::string upstream_host, std::uint16_t upstream_port);
    ~Shaper();

    Shaper(const Shaper&) = delete;
    Shaper& operator=(const Shaper&) = delete;

    std::uint16_t port() const { return port_; }
    const NetworkProfile& profile() const { return profile_; }

    // Idempotent. Tears down the listener and every live connection.
    void stop();

private:
    struct Item {
        std::vector<char> data;
        std::chrono::steady_clock::time_point due;
        bool eof = false;
    };

    // One direction of one connection.
    struct Pipe {
        int src = -1;
        int dst = -1;
        std::chrono::nanoseconds delay{0};
        TokenBucket* bucket = nullptr;
        std::size_t quantum = 0;
        std::size_t queue_limit = 0;

        std::mutex mu;
        std::condition_variable space_cv;
        std::condition_variable data_cv;
        std::deque<Item> queue;
        std::size_t queued_bytes = 0;

        std::thread reader;
        std::thread writer;
    };

    struct Conn {
        net::Socket client;
        net::Socket upstream;
        Pipe out;  // client -> upstream
        Pipe back;  // upstream -> client
        std::atomic<int> finished{0};
    };

    void accept_loop();
    void start_pipe(Conn& conn, Pipe& pipe);
    void pipe_reader(Conn& conn, Pipe& pipe);
    void pipe_writer(Conn& conn, Pipe& pipe);
    void reap_locked(bool wait_all);

    NetworkProfile profile_;
    std::string upstream_host_;
    std::uint16_t upstream_port_;
    std::unique_ptr<TokenBucket> bucket_;
    std::chrono::nanoseconds one_way_delay_{0};
    std::size_t quantum_ = 0;

    net::Socket listener_;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{true};
    std::thread accept_thread_;

    std::mutex conns_mu_;
    std::vector<std::unique_ptr<Conn>> conns_;
};

}  // namespace relay::harness
