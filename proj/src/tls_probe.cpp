#include "proxyscope/net.hpp"
#include "proxyscope/tls.hpp"

namespace proxyscope::tls {

namespace {

ProbeOutcome fail(FailureKind kind, std::string detail,
                  std::optional<std::pair<std::uint8_t, std::uint8_t>> alert = std::nullopt) {
    ProbeOutcome out;
    out.failure = ProbeFailure{kind, std::move(detail), alert};
    return out;
}

void send_abort(net::Socket& sock, Version negotiated) {
    // user_canceled followed by close_notify: ends the exchange without ever
    // reaching key exchange, which is the whole point of the partial
    // handshake. Only alert records may follow the captured flight.
    Bytes alerts;
    put_u8(alerts, kRecordAlert);
    put_u16(alerts, static_cast<std::uint16_t>(negotiated));
    put_u16(alerts, 2);
    put_u8(alerts, 1);   // warning
    put_u8(alerts, 90);  // user_canceled
    put_u8(alerts, kRecordAlert);
    put_u16(alerts, static_cast<std::uint16_t>(negotiated));
    put_u16(alerts, 2);
    put_u8(alerts, 1);  // warning
    put_u8(alerts, 0);  // close_notify
    sock.write_all(alerts, net::Deadline::in_ms(250));
    sock.shutdown_write();
}

}  // namespace

ProbeOutcome probe(const ProbeTarget& target, const ProbeOptions& options) {
    if (target.host.empty()) throw ParameterError("probe target host is empty");
    if (target.port == 0) throw ParameterError("probe target port is 0");

    auto t0 = std::chrono::steady_clock::now();
    net::ConnectResult conn =
        net::connect_to(target.host, target.port, options.connect_timeout_ms);
    if (!conn.socket) {
        switch (conn.error) {
            case net::ConnectError::timeout:
                return fail(FailureKind::connect_timeout, conn.detail);
            case net::ConnectError::resolution:
                return fail(FailureKind::refused, "resolution failed: " + conn.detail);
            default:
                return fail(FailureKind::refused, conn.detail);
        }
    }
    net::Socket sock = std::move(*conn.socket);

    std::string sni_host;
    if (options.hello.include_sni)
        sni_host = target.server_name ? *target.server_name : target.host;
    Bytes hello = build_client_hello(options.hello, sni_host);

    net::Deadline read_dl = net::Deadline::in_ms(options.read_timeout_ms);
    if (!sock.write_all(hello, read_dl))
        return fail(FailureKind::protocol_error, "failed to send client hello");

    Bytes wire;
    std::uint8_t buf[8192];
    for (;;) {
        HandshakeStream stream = parse_handshake_stream(wire);
        if (stream.end == StreamEnd::protocol_error)
            return fail(FailureKind::protocol_error, stream.error);
        if (stream.end == StreamEnd::alert)
            return fail(FailureKind::handshake_alert,
                        "server alert " + std::to_string(stream.alert->second), stream.alert);

        std::optional<Version> negotiated;
        const HandshakeMessage* certificate = nullptr;
        for (const auto& m : stream.messages) {
            if (m.type == kHandshakeServerHello && !negotiated) {
                if (m.body.size() < 2)
                    return fail(FailureKind::protocol_error, "short server hello");
                auto v = version_from_u16(get_u16(m.body.data()));
                if (!v) return fail(FailureKind::protocol_error, "server picked a version outside TLS 1.0-1.2");
                if (*v < options.hello.min_version() || *v > options.hello.max_version())
                    return fail(FailureKind::protocol_error,
                                "server picked unoffered " + version_name(*v));
                negotiated = *v;
            } else if (m.type == kHandshakeCertificate) {
                if (!negotiated)
                    return fail(FailureKind::protocol_error, "certificate before server hello");
                certificate = &m;
                break;
            }
        }
        if (certificate) {
            RawChain chain;
            try {
                chain = extract_chain(*certificate);
            } catch (const EmptyChainError&) {
                return fail(FailureKind::protocol_error, "server sent an empty certificate list");
            } catch (const ParseError& e) {
                return fail(FailureKind::protocol_error,
                            std::string("bad certificate message: ") + e.what());
            }
            ProbeSuccess success;
            success.chain = std::move(chain);
            success.negotiated = *negotiated;
            success.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0);
            success.peer_address = sock.peer_address();
            send_abort(sock, success.negotiated);
            ProbeOutcome out;
            out.success = std::move(success);
            return out;
        }

        net::IoResult r = sock.read_some(buf, sizeof(buf), read_dl);
        if (r.status == net::IoStatus::ok) {
            wire.insert(wire.end(), buf, buf + r.n);
            continue;
        }
        if (r.status == net::IoStatus::timeout)
            return fail(FailureKind::read_timeout, "no certificate before read deadline");
        if (r.status == net::IoStatus::eof)
            return fail(FailureKind::protocol_error, "connection closed during handshake");
        return fail(FailureKind::protocol_error, "socket error while reading");
    }
}

}  // namespace proxyscope::tls
