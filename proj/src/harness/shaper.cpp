#include "relay/harness/shaper.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <algorithm>

namespace relay::harness {

namespace {

constexpr std::size_t kUncappedQuantum = 256 * 1024;
constexpr std::size_t kQueueLimit = 16 * 1024 * 1024;

}  // namespace

Shaper::Shaper(NetworkProfile profile, std::string upstream_host, std::uint16_t upstream_port)
    : profile_(std::move(profile)),
      upstream_host_(std::move(upstream_host)),
      upstream_port_(upstream_port) {
    profile_.validate();
    if (profile_.bandwidth_cap_MBps) {
        // Decimal megabytes, matching how link rates are quoted.
        double rate = *profile_.bandwidth_cap_MBps * 1e6;
        double depth = 2 * rate * 0.1;
        bucket_ = std::make_unique<TokenBucket>(rate, depth);
        quantum_ = std::clamp<std::size_t>(static_cast<std::size_t>(depth / 4), 8 * 1024,
                                           256 * 1024);
    } else {
        quantum_ = kUncappedQuantum;
    }
    one_way_delay_ = std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::duration<double, std::milli>(profile_.effective_rtt_ms() / 2));

    std::uint16_t port = 0;
    listener_ = net::tcp_listen(port);
    port_ = port;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

Shaper::~Shaper() { stop(); }

void Shaper::stop() {
    bool was_running = running_.exchange(false);
    if (!was_running) return;
    if (accept_thread_.joinable()) accept_thread_.join();
    listener_.close();
    std::lock_guard lk(conns_mu_);
    for (auto& conn : conns_) {
        net::shutdown_both(conn->client.fd());
        net::shutdown_both(conn->upstream.fd());
    }
    reap_locked(true);
}

void Shaper::accept_loop() {
    while (running_) {
        pollfd pfd{listener_.fd(), POLLIN, 0};
        int rc = ::poll(&pfd, 1, 100);
        if (rc <= 0) continue;
        auto client = net::tcp_accept(listener_.fd());
        if (!client.valid()) continue;
        net::Socket upstream;
        try {
            upstream = net::tcp_connect(upstream_host_, upstream_port_);
        } catch (const std::exception&) {
            continue;  // upstream gone; drop the client
        }
        net::set_nodelay(client.fd());
        net::set_nodelay(upstream.fd());

        auto conn = std::make_unique<Conn>();
        conn->client = std::move(client);
        conn->upstream = std::move(upstream);
        conn->out.src = conn->client.fd();
        conn->out.dst = conn->upstream.fd();
        conn->back.src = conn->upstream.fd();
        conn->back.dst = conn->client.fd();
        start_pipe(*conn, conn->out);
        start_pipe(*conn, conn->back);

        std::lock_guard lk(conns_mu_);
        reap_locked(false);
        conns_.push_back(std::move(conn));
    }
}

void Shaper::start_pipe(Conn& conn, Pipe& pipe) {
    pipe.delay = one_way_delay_;
    pipe.bucket = bucket_.get();
    pipe.quantum = quantum_;
    pipe.queue_limit = kQueueLimit;
    pipe.reader = std::thread([this, &conn, &pipe] { pipe_reader(conn, pipe); });
    pipe.writer = std::thread([this, &conn, &pipe] { pipe_writer(conn, pipe); });
}

void Shaper::pipe_reader(Conn& conn, Pipe& pipe) {
    std::vector<char> buf(pipe.quantum);
    for (;;) {
        ssize_t n = ::recv(pipe.src, buf.data(), buf.size(), 0);
        if (n <= 0) break;
        Item item;
        item.data.assign(buf.data(), buf.data() + n);
        item.due = std::chrono::steady_clock::now() + pipe.delay;
        std::unique_lock lk(pipe.mu);
        pipe.space_cv.wait(lk, [&] { return pipe.queued_bytes < pipe.queue_limit; });
        pipe.queued_bytes += item.data.size();
        pipe.queue.push_back(std::move(item));
        pipe.data_cv.notify_one();
    }
    Item eof;
    eof.eof = true;
    eof.due = std::chrono::steady_clock::now() + pipe.delay;
    {
        std::lock_guard lk(pipe.mu);
        pipe.queue.push_back(std::move(eof));
        pipe.data_cv.notify_one();
    }
    conn.finished.fetch_add(1);
}

void Shaper::pipe_writer(Conn& conn, Pipe& pipe) {
    bool discard = false;
    for (;;) {
        Item item;
        {
            std::unique_lock lk(pipe.mu);
            pipe.data_cv.wait(lk, [&] { return !pipe.queue.empty(); });
            item = std::move(pipe.queue.front());
            pipe.queue.pop_front();
            pipe.queued_bytes -= item.data.size();
            pipe.space_cv.notify_one();
        }
        if (!discard) std::this_thread::sleep_until(item.due);
        if (item.eof) {
            if (!discard) net::shutdown_write(pipe.dst);
            break;
        }
        if (discard) continue;
        if (pipe.bucket) pipe.bucket->consume(item.data.size());
        if (!net::send_all(pipe.dst, item.data.data(), item.data.size())) {
            // Peer went away; stop forwarding and unblock our reader.
            discard = true;
            ::shutdown(pipe.src, SHUT_RD);
        }
    }
    conn.finished.fetch_add(1);
}

void Shaper::reap_locked(bool wait_all) {
    // Decide, join, and erase in one pass: a second look at `finished` could
    // see a conn that crossed 4 after the join loop and destroy it unjoined.
    std::erase_if(conns_, [&](const std::unique_ptr<Conn>& c) {
        if (!wait_all && c->finished.load() != 4) return false;
        for (std::thread* t : {&c->out.reader, &c->out.writer, &c->back.reader,
                               &c->back.writer}) {
            if (t->joinable()) t->join();
        }
        return true;
    });
}

}  // namespace relay::harness
