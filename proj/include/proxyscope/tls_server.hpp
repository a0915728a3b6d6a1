#pragma once

#include <atomic>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "proxyscope/net.hpp"
#include "proxyscope/tls.hpp"

namespace proxyscope::tls {

// Serves the probe-visible part of a TLS handshake: reads a ClientHello,
// answers ServerHello + Certificate + ServerHelloDone, then records whatever
// the client sends before closing. Never negotiates keys; it exists to put
// chains on the wire.
class FlightServer {
  public:
    enum class Misbehavior { none, silent_close, immediate_alert, garbage, stall };

    struct ConnectionLog {
        std::optional<ParsedClientHello> hello;
        bool sent_flight = false;
        Bytes post_flight;  // raw client bytes after our flight
        std::optional<std::pair<std::uint8_t, std::uint8_t>> post_alert;
        bool policy_served = false;
    };

    // Returns the chain to serve; empty means drop the connection.
    using ChainProvider =
        std::function<std::vector<Bytes>(const ParsedClientHello&, const net::Socket& peer)>;
    // Optional takeover of the connection after the flight (bytes already
    // read from the client are handed over).
    using PostFlightHook = std::function<void(net::Socket&, const Bytes& buffered)>;

    struct Options {
        ChainProvider provider;
        Version max_version = Version::v1_2;
        int io_timeout_ms = 5000;
        int post_flight_linger_ms = 1000;
        Misbehavior misbehavior = Misbehavior::none;
        std::optional<std::string> policy_xml;  // serve '<'-demuxed policy requests
        PostFlightHook post_flight;
    };

    explicit FlightServer(Options options);
    ~FlightServer();

    bool start(std::uint16_t port = 0);
    void stop();
    std::uint16_t port() const { return port_; }
    std::size_t connections() const { return connections_.load(); }
    std::vector<ConnectionLog> logs() const;

    static std::vector<Bytes> flight_records(Version version, std::uint16_t cipher,
                                             const std::vector<Bytes>& chain);

  private:
    void loop();
    void handle(net::Socket conn);

    Options options_;
    net::Listener listener_;
    std::uint16_t port_ = 0;
    std::thread thread_;
    std::atomic<bool> running_{false};
    std::atomic<std::size_t> connections_{0};
    mutable std::mutex log_mutex_;
    std::vector<ConnectionLog> logs_;
};

}  // namespace proxyscope::tls
