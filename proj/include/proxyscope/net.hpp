#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "proxyscope/bytes.hpp"

namespace proxyscope::net {

class Deadline {
  public:
    static Deadline in_ms(int ms) {
        return Deadline{std::chrono::steady_clock::now() + std::chrono::milliseconds(ms)};
    }
    // Milliseconds left, clamped to >= 0.
    int remaining_ms() const {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                        at_ - std::chrono::steady_clock::now())
                        .count();
        return left > 0 ? static_cast<int>(left) : 0;
    }
    bool expired() const { return remaining_ms() == 0; }

  private:
    explicit Deadline(std::chrono::steady_clock::time_point at) : at_(at) {}
    std::chrono::steady_clock::time_point at_;
};

enum class IoStatus { ok, eof, timeout, error };

struct IoResult {
    IoStatus status;
    std::size_t n = 0;
};

enum class ConnectError { none, resolution, refused, timeout, other };

class Socket {
  public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    IoResult read_some(std::uint8_t* buf, std::size_t cap, const Deadline& dl);
    bool write_all(const std::uint8_t* data, std::size_t len, const Deadline& dl);
    bool write_all(const Bytes& data, const Deadline& dl) {
        return write_all(data.data(), data.size(), dl);
    }
    void shutdown_write();
    void close();
    std::string peer_address() const;

  private:
    int fd_ = -1;
};

struct ConnectResult {
    std::optional<Socket> socket;
    ConnectError error = ConnectError::none;
    std::string detail;
};

ConnectResult connect_to(const std::string& host, std::uint16_t port, int timeout_ms);

class Listener {
  public:
    Listener() = default;
    Listener(Listener&& other) noexcept : fd_(other.fd_), port_(other.port_) {
        other.fd_ = -1;
    }
    Listener& operator=(Listener&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = other.fd_;
            port_ = other.port_;
            other.fd_ = -1;
        }
        return *this;
    }
    Listener(const Listener&) = delete;
    ~Listener() { close(); }

    // Binds 127.0.0.1; port 0 picks a free port.
    static std::optional<Listener> open(std::uint16_t port);
    std::uint16_t port() const { return port_; }
    bool valid() const { return fd_ >= 0; }
    std::optional<Socket> accept(int timeout_ms);
    void close();

  private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

bool looks_like_ip_literal(const std::string& host);

}  // namespace proxyscope::net
