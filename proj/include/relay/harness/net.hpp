#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace relay::harness::net {

// Thin RAII wrapper over a POSIX socket fd.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }

    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    Socket& operator=(Socket&& other) noexcept;

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void close();

private:
    int fd_ = -1;
};

// Listens on 127.0.0.1. Pass port 0 for an ephemeral port; the chosen port is
// written back. Throws NetworkError if the port is unavailable.
Socket tcp_listen(std::uint16_t& port, int backlog = 64);

// Blocking accept. Returns an invalid Socket on error (e.g. listener closed).
Socket tcp_accept(int listener_fd);

Socket tcp_connect(const std::string& host, std::uint16_t port);

// Loops until everything is written. Returns false on error (EPIPE etc).
bool send_all(int fd, const void* data, std::size_t len);

// Reads exactly len bytes. Returns false on EOF or error.
bool recv_exact(int fd, void* buf, std::size_t len);

void set_nodelay(int fd);
void set_recv_timeout(int fd, int timeout_ms);
void shutdown_write(int fd);
void shutdown_both(int fd);

}  // namespace relay::harness::net
