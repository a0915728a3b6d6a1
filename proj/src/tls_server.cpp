#include "proxyscope/tls_server.hpp"

#include <algorithm>
#include <random>

#include "proxyscope/policy.hpp"

namespace proxyscope::tls {

namespace {

constexpr std::size_t kRecordSlice = 4096;

Bytes server_hello_body(Version version, std::uint16_t cipher) {
    Bytes body;
    put_u16(body, static_cast<std::uint16_t>(version));
    std::random_device rd;
    for (int i = 0; i < 8; ++i) {
        std::uint32_t v = rd();
        put_u8(body, static_cast<std::uint8_t>(v >> 24));
        put_u8(body, static_cast<std::uint8_t>(v >> 16));
        put_u8(body, static_cast<std::uint8_t>(v >> 8));
        put_u8(body, static_cast<std::uint8_t>(v));
    }
    put_u8(body, 0);  // empty session id
    put_u16(body, cipher);
    put_u8(body, 0);  // null compression
    return body;
}

void append_handshake(Bytes& out, std::uint8_t type, const Bytes& body) {
    put_u8(out, type);
    put_u24(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
}

}  // namespace

std::vector<Bytes> FlightServer::flight_records(Version version, std::uint16_t cipher,
                                                const std::vector<Bytes>& chain) {
    Bytes handshake;
    append_handshake(handshake, kHandshakeServerHello, server_hello_body(version, cipher));
    append_handshake(handshake, kHandshakeCertificate, encode_certificate_list(chain));
    append_handshake(handshake, kHandshakeServerHelloDone, {});

    // Slicing exercises both client paths: several messages in one record
    // and one message spanning records.
    std::vector<Bytes> records;
    for (std::size_t pos = 0; pos < handshake.size(); pos += kRecordSlice) {
        std::size_t n = std::min(kRecordSlice, handshake.size() - pos);
        Bytes record;
        put_u8(record, kRecordHandshake);
        put_u16(record, static_cast<std::uint16_t>(version));
        put_u16(record, static_cast<std::uint16_t>(n));
        record.insert(record.end(), handshake.begin() + static_cast<long>(pos),
                      handshake.begin() + static_cast<long>(pos + n));
        records.push_back(std::move(record));
    }
    return records;
}

FlightServer::FlightServer(Options options) : options_(std::move(options)) {}

FlightServer::~FlightServer() { stop(); }

bool FlightServer::start(std::uint16_t port) {
    auto listener = net::Listener::open(port);
    if (!listener) return false;
    listener_ = std::move(*listener);
    port_ = listener_.port();
    running_ = true;
    thread_ = std::thread([this] { loop(); });
    return true;
}

void FlightServer::stop() {
    running_ = false;
    if (thread_.joinable()) thread_.join();
    listener_.close();
}

std::vector<FlightServer::ConnectionLog> FlightServer::logs() const {
    std::lock_guard lock(log_mutex_);
    return logs_;
}

void FlightServer::loop() {
    while (running_) {
        auto conn = listener_.accept(100);
        if (!conn) continue;
        ++connections_;
        handle(std::move(*conn));
    }
}

void FlightServer::handle(net::Socket conn) {
    ConnectionLog log;
    net::Deadline dl = net::Deadline::in_ms(options_.io_timeout_ms);

    if (options_.misbehavior == Misbehavior::silent_close) {
        std::lock_guard lock(log_mutex_);
        logs_.push_back(std::move(log));
        return;
    }
    if (options_.misbehavior == Misbehavior::immediate_alert) {
        Bytes alert{kRecordAlert, 0x03, 0x03, 0x00, 0x02, 2, 40};  // fatal handshake_failure
        conn.write_all(alert, dl);
        std::lock_guard lock(log_mutex_);
        logs_.push_back(std::move(log));
        return;
    }
    if (options_.misbehavior == Misbehavior::garbage) {
        Bytes junk(64, 0x5a);
        conn.write_all(junk, dl);
        std::lock_guard lock(log_mutex_);
        logs_.push_back(std::move(log));
        return;
    }

    Bytes wire;
    std::uint8_t buf[8192];
    std::optional<ParsedClientHello> hello;
    bool policy_handled = false;
    while (!hello) {
        if (options_.misbehavior == Misbehavior::stall && !wire.empty()) {
            // Swallow input without ever answering.
            auto r = conn.read_some(buf, sizeof(buf), dl);
            if (r.status != net::IoStatus::ok) break;
            continue;
        }
        auto r = conn.read_some(buf, sizeof(buf), dl);
        if (r.status != net::IoStatus::ok) break;
        wire.insert(wire.end(), buf, buf + r.n);

        if (options_.policy_xml && !wire.empty() && wire[0] == '<') {
            // Same port demux: '<' can only start a policy request.
            if (std::find(wire.begin(), wire.end(), 0) == wire.end()) {
                if (wire.size() > 128) break;
                continue;
            }
            auto reply = policy::handle_policy_request(wire, *options_.policy_xml);
            if (reply) {
                conn.write_all(*reply, dl);
                log.policy_served = true;
            }
            policy_handled = true;
            break;
        }
        if (options_.misbehavior == Misbehavior::stall) continue;

        HandshakeStream stream = parse_handshake_stream(wire);
        if (stream.end == StreamEnd::protocol_error || stream.end == StreamEnd::alert) break;
        for (const auto& m : stream.messages) {
            if (m.type == kHandshakeClientHello) {
                try {
                    Bytes one;
                    append_handshake(one, m.type, m.body);
                    Bytes record;
                    put_u8(record, kRecordHandshake);
                    put_u16(record, static_cast<std::uint16_t>(Version::v1_0));
                    put_u16(record, static_cast<std::uint16_t>(one.size()));
                    record.insert(record.end(), one.begin(), one.end());
                    hello = parse_client_hello(record);
                } catch (const ParseError&) {
                }
                break;
            }
        }
        if (!hello && stream.end == StreamEnd::clean && !stream.messages.empty()) break;
    }

    if (hello && !policy_handled && options_.misbehavior == Misbehavior::none) {
        log.hello = hello;
        std::vector<Bytes> chain;
        if (options_.provider) chain = options_.provider(*hello, conn);
        Version version = std::min(hello->legacy_version, options_.max_version);
        if (chain.empty()) {
            // No chain to serve (e.g. upstream unreachable): answer with a
            // handshake alert rather than dropping the client silently.
            Bytes alert;
            put_u8(alert, kRecordAlert);
            put_u16(alert, static_cast<std::uint16_t>(version));
            put_u16(alert, 2);
            put_u8(alert, 2);   // fatal
            put_u8(alert, 40);  // handshake_failure
            conn.write_all(alert, dl);
        } else {
            std::uint16_t cipher =
                hello->cipher_suites.empty() ? 0x002f : hello->cipher_suites.front();
            bool sent = true;
            for (const Bytes& record : flight_records(version, cipher, chain))
                if (!conn.write_all(record, dl)) {
                    sent = false;
                    break;
                }
            log.sent_flight = sent;
            if (sent) {
                if (options_.post_flight) {
                    options_.post_flight(conn, {});
                } else {
                    net::Deadline linger = net::Deadline::in_ms(options_.post_flight_linger_ms);
                    for (;;) {
                        auto r = conn.read_some(buf, sizeof(buf), linger);
                        if (r.status != net::IoStatus::ok) break;
                        log.post_flight.insert(log.post_flight.end(), buf, buf + r.n);
                        if (log.post_flight.size() > 65536) break;
                    }
                    if (log.post_flight.size() >= 7 && log.post_flight[0] == kRecordAlert)
                        log.post_alert = {log.post_flight[5], log.post_flight[6]};
                }
            }
        }
    }

    std::lock_guard lock(log_mutex_);
    logs_.push_back(std::move(log));
}

}  // namespace proxyscope::tls
