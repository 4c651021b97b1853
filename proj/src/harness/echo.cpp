#include "relay/harness/echo.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <algorithm>

namespace relay::harness {

EchoServer::EchoServer() {
    std::uint16_t port = 0;
    listener_ = net::tcp_listen(port);
    port_ = port;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

EchoServer::~EchoServer() { stop(); }

void EchoServer::stop() {
    if (!running_.exchange(false)) return;
    if (accept_thread_.joinable()) accept_thread_.join();
    listener_.close();
    {
        std::lock_guard lk(live_mu_);
        for (int fd : live_fds_) net::shutdown_both(fd);
    }
    for (auto& t : workers_) {
        if (t.joinable()) t.join();
    }
    workers_.clear();
}

void EchoServer::accept_loop() {
    while (running_) {
        pollfd pfd{listener_.fd(), POLLIN, 0};
        int rc = ::poll(&pfd, 1, 100);
        if (rc <= 0) continue;
        auto sock = net::tcp_accept(listener_.fd());
        if (!sock.valid()) continue;
        net::set_nodelay(sock.fd());
        workers_.emplace_back([this, s = std::move(sock)]() mutable { serve_client(std::move(s)); });
    }
}

void EchoServer::serve_client(net::Socket sock) {
    {
        std::lock_guard lk(live_mu_);
        live_fds_.push_back(sock.fd());
    }
    std::vector<char> buf(64 * 1024);
    for (;;) {
        ssize_t n = ::recv(sock.fd(), buf.data(), buf.size(), 0);
        if (n <= 0) break;
        if (!net::send_all(sock.fd(), buf.data(), static_cast<std::size_t>(n))) break;
    }
    std::lock_guard lk(live_mu_);
    std::erase(live_fds_, sock.fd());
}

}  // namespace relay::harness
