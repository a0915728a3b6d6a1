#include "proxyscope/net.hpp"

#include <arpa/inet.h>
#include <errno.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <string.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>

namespace proxyscope::net {

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

void Socket::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void Socket::shutdown_write() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

IoResult Socket::read_some(std::uint8_t* buf, std::size_t cap, const Deadline& dl) {
    if (fd_ < 0) return {IoStatus::error, 0};
    for (;;) {
        int remaining = dl.remaining_ms();
        if (remaining == 0) return {IoStatus::timeout, 0};
        struct pollfd pfd { fd_, POLLIN, 0 };
        int rc = ::poll(&pfd, 1, remaining);
        if (rc == 0) return {IoStatus::timeout, 0};
        if (rc < 0) {
            if (errno == EINTR) continue;
            return {IoStatus::error, 0};
        }
        ssize_t n = ::recv(fd_, buf, cap, 0);
        if (n > 0) return {IoStatus::ok, static_cast<std::size_t>(n)};
        if (n == 0) return {IoStatus::eof, 0};
        if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) continue;
        return {IoStatus::error, 0};
    }
}

bool Socket::write_all(const std::uint8_t* data, std::size_t len, const Deadline& dl) {
    if (fd_ < 0) return false;
    std::size_t off = 0;
    while (off < len) {
        int remaining = dl.remaining_ms();
        if (remaining == 0) return false;
        struct pollfd pfd { fd_, POLLOUT, 0 };
        int rc = ::poll(&pfd, 1, remaining);
        if (rc == 0) return false;
        if (rc < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        ssize_t n = ::send(fd_, data + off, len - off, MSG_NOSIGNAL);
        if (n > 0) {
            off += static_cast<std::size_t>(n);
            continue;
        }
        if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) continue;
        return false;
    }
    return true;
}

std::string Socket::peer_address() const {
    if (fd_ < 0) return {};
    sockaddr_storage ss{};
    socklen_t slen = sizeof(ss);
    if (::getpeername(fd_, reinterpret_cast<sockaddr*>(&ss), &slen) != 0) return {};
    char buf[INET6_ADDRSTRLEN] = {0};
    if (ss.ss_family == AF_INET) {
        auto* sin = reinterpret_cast<sockaddr_in*>(&ss);
        ::inet_ntop(AF_INET, &sin->sin_addr, buf, sizeof(buf));
    } else if (ss.ss_family == AF_INET6) {
        auto* sin6 = reinterpret_cast<sockaddr_in6*>(&ss);
        ::inet_ntop(AF_INET6, &sin6->sin6_addr, buf, sizeof(buf));
    }
    return buf;
}

namespace {

bool set_nonblocking(int fd, bool on) {
    int flags = ::fcntl(fd, F_GETFL, 0);
    if (flags < 0) return false;
    if (on)
        flags |= O_NONBLOCK;
    else
        flags &= ~O_NONBLOCK;
    return ::fcntl(fd, F_SETFL, flags) == 0;
}

}  // namespace

ConnectResult connect_to(const std::string& host, std::uint16_t port, int timeout_ms) {
    ConnectResult result;
    struct addrinfo hints {};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    char port_str[8];
    std::snprintf(port_str, sizeof(port_str), "%u", port);
    struct addrinfo* res = nullptr;
    int gai = ::getaddrinfo(host.c_str(), port_str, &hints, &res);
    if (gai != 0 || res == nullptr) {
        result.error = ConnectError::resolution;
        result.detail = gai_strerror(gai);
        return result;
    }
    Deadline dl = Deadline::in_ms(timeout_ms);
    int last_errno = 0;
    bool timed_out = false;
    for (struct addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) {
            last_errno = errno;
            continue;
        }
        set_nonblocking(fd, true);
        int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc != 0 && errno == EINPROGRESS) {
            struct pollfd pfd { fd, POLLOUT, 0 };
            int remaining = dl.remaining_ms();
            int prc = remaining > 0 ? ::poll(&pfd, 1, remaining) : 0;
            if (prc == 0) {
                ::close(fd);
                timed_out = true;
                continue;
            }
            int err = 0;
            socklen_t elen = sizeof(err);
            ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &elen);
            if (err != 0) {
                ::close(fd);
                last_errno = err;
                continue;
            }
            rc = 0;
        }
        if (rc == 0) {
            set_nonblocking(fd, false);
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            ::freeaddrinfo(res);
            result.socket.emplace(fd);
            return result;
        }
        last_errno = errno;
        ::close(fd);
    }
    ::freeaddrinfo(res);
    if (timed_out && last_errno == 0) {
        result.error = ConnectError::timeout;
        result.detail = "connect timed out";
    } else if (last_errno == ECONNREFUSED) {
        result.error = ConnectError::refused;
        result.detail = "connection refused";
    } else {
        result.error = last_errno == 0 ? ConnectError::other : ConnectError::refused;
        result.detail = last_errno != 0 ? ::strerror(last_errno) : "no usable address";
    }
    return result;
}

std::optional<Listener> Listener::open(std::uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return std::nullopt;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(fd, 64) != 0) {
        ::close(fd);
        return std::nullopt;
    }
    socklen_t alen = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &alen);
    Listener l;
    l.fd_ = fd;
    l.port_ = ntohs(addr.sin_port);
    return l;
}

void Listener::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

std::optional<Socket> Listener::accept(int timeout_ms) {
    if (fd_ < 0) return std::nullopt;
    struct pollfd pfd { fd_, POLLIN, 0 };
    int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc <= 0) return std::nullopt;
    int cfd = ::accept(fd_, nullptr, nullptr);
    if (cfd < 0) return std::nullopt;
    int one = 1;
    ::setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return Socket{cfd};
}

bool looks_like_ip_literal(const std::string& host) {
    in_addr v4{};
    in6_addr v6{};
    return ::inet_pton(AF_INET, host.c_str(), &v4) == 1 ||
           ::inet_pton(AF_INET6, host.c_str(), &v6) == 1;
}

}  // namespace proxyscope::net
