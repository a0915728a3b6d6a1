#include <algorithm>
#include <random>

#include "proxyscope/net.hpp"
#include "proxyscope/tls.hpp"

namespace proxyscope::tls {

namespace {

// 2^14 plus slack for stacks that overshoot the record limit.
constexpr std::size_t kMaxRecordPayload = 16384 + 2048;
// A handshake message (a Certificate chain, in practice) may span many
// records; 24-bit framing caps it at 16 MiB and we refuse anything bigger.
constexpr std::size_t kMaxHandshakeMessage = (1u << 24) - 1;

constexpr std::uint16_t kExtServerName = 0x0000;
constexpr std::uint16_t kExtSupportedGroups = 0x000a;
constexpr std::uint16_t kExtEcPointFormats = 0x000b;
constexpr std::uint16_t kExtSignatureAlgorithms = 0x000d;

void put_block_u16(Bytes& out, const Bytes& inner) {
    put_u16(out, static_cast<std::uint16_t>(inner.size()));
    out.insert(out.end(), inner.begin(), inner.end());
}

}  // namespace

std::string version_name(Version v) {
    switch (v) {
        case Version::v1_0: return "TLS1.0";
        case Version::v1_1: return "TLS1.1";
        case Version::v1_2: return "TLS1.2";
    }
    return "TLS?";
}

std::optional<Version> version_from_u16(std::uint16_t raw) {
    switch (raw) {
        case 0x0301: return Version::v1_0;
        case 0x0302: return Version::v1_1;
        case 0x0303: return Version::v1_2;
        default: return std::nullopt;
    }
}

std::vector<std::uint16_t> default_cipher_suites() {
    return {
        0xc02f,  // ECDHE_RSA_WITH_AES_128_GCM_SHA256
        0xc02b,  // ECDHE_ECDSA_WITH_AES_128_GCM_SHA256
        0xc013,  // ECDHE_RSA_WITH_AES_128_CBC_SHA
        0xc009,  // ECDHE_ECDSA_WITH_AES_128_CBC_SHA
        0x009c,  // RSA_WITH_AES_128_GCM_SHA256
        0x002f,  // RSA_WITH_AES_128_CBC_SHA (mandatory to implement)
        0x0035,  // RSA_WITH_AES_256_CBC_SHA
    };
}

ClientHelloParams ClientHelloParams::fresh() {
    ClientHelloParams p;
    // Random device, not mt19937: hello randoms must not repeat across runs.
    std::random_device rd;
    for (std::size_t i = 0; i < p.random.size(); i += 4) {
        std::uint32_t v = rd();
        p.random[i] = static_cast<std::uint8_t>(v >> 24);
        p.random[i + 1] = static_cast<std::uint8_t>(v >> 16);
        p.random[i + 2] = static_cast<std::uint8_t>(v >> 8);
        p.random[i + 3] = static_cast<std::uint8_t>(v);
    }
    return p;
}

Version ClientHelloParams::max_version() const {
    return *std::max_element(versions.begin(), versions.end());
}

Version ClientHelloParams::min_version() const {
    return *std::min_element(versions.begin(), versions.end());
}

Bytes build_client_hello(const ClientHelloParams& params, const std::string& sni_host) {
    if (params.versions.empty()) throw ParameterError("no TLS versions offered");
    if (params.cipher_suites.empty()) throw ParameterError("no cipher suites offered");
    if (params.cipher_suites.size() > 0x7fff) throw ParameterError("cipher suite list too long");

    Bytes body;
    put_u16(body, static_cast<std::uint16_t>(params.max_version()));
    body.insert(body.end(), params.random.begin(), params.random.end());
    put_u8(body, 0);  // empty session id
    put_u16(body, static_cast<std::uint16_t>(params.cipher_suites.size() * 2));
    for (std::uint16_t suite : params.cipher_suites) put_u16(body, suite);
    put_u8(body, 1);  // one compression method:
    put_u8(body, 0);  // null

    Bytes extensions;
    bool want_sni = params.include_sni && !sni_host.empty() &&
                    !net::looks_like_ip_literal(sni_host);
    if (want_sni) {
        Bytes name;
        put_u8(name, 0);  // host_name
        put_u16(name, static_cast<std::uint16_t>(sni_host.size()));
        name.insert(name.end(), sni_host.begin(), sni_host.end());
        Bytes list;
        put_block_u16(list, name);
        put_u16(extensions, kExtServerName);
        put_block_u16(extensions, list);
    }
    bool offers_ecdhe = std::any_of(params.cipher_suites.begin(), params.cipher_suites.end(),
                                    [](std::uint16_t s) { return (s & 0xff00) == 0xc000; });
    if (offers_ecdhe) {
        Bytes groups;
        for (std::uint16_t g : {std::uint16_t{0x001d}, std::uint16_t{0x0017},
                                std::uint16_t{0x0018}})  // x25519, P-256, P-384
            put_u16(groups, g);
        Bytes list;
        put_block_u16(list, groups);
        put_u16(extensions, kExtSupportedGroups);
        put_block_u16(extensions, list);

        Bytes formats{1, 0};  // one format: uncompressed
        put_u16(extensions, kExtEcPointFormats);
        put_block_u16(extensions, formats);
    }
    if (params.max_version() == Version::v1_2) {
        // Without this, 1.2 servers fall back to SHA-1 sigs that modern
        // security levels reject.
        Bytes algs;
        for (std::uint16_t a : {std::uint16_t{0x0401}, std::uint16_t{0x0501},
                                std::uint16_t{0x0601}, std::uint16_t{0x0403},
                                std::uint16_t{0x0503}, std::uint16_t{0x0201},
                                std::uint16_t{0x0203}})
            put_u16(algs, a);
        Bytes list;
        put_block_u16(list, algs);
        put_u16(extensions, kExtSignatureAlgorithms);
        put_block_u16(extensions, list);
    }
    if (!extensions.empty()) put_block_u16(body, extensions);

    Bytes handshake;
    put_u8(handshake, kHandshakeClientHello);
    put_u24(handshake, static_cast<std::uint32_t>(body.size()));
    handshake.insert(handshake.end(), body.begin(), body.end());

    Bytes record;
    put_u8(record, kRecordHandshake);
    // Record-layer version pinned to 1.0 for interop; the real offer is the
    // client_version field inside the hello.
    put_u16(record, static_cast<std::uint16_t>(Version::v1_0));
    put_u16(record, static_cast<std::uint16_t>(handshake.size()));
    record.insert(record.end(), handshake.begin(), handshake.end());
    return record;
}

HandshakeStream parse_handshake_stream(const Bytes& wire) {
    HandshakeStream out;
    Bytes hs;
    std::size_t pos = 0;
    bool partial_record = false;
    while (pos < wire.size()) {
        if (wire.size() - pos < 5) {
            partial_record = true;
            break;
        }
        std::uint8_t type = wire[pos];
        std::uint8_t ver_major = wire[pos + 1];
        std::uint8_t ver_minor = wire[pos + 2];
        std::uint16_t len = get_u16(&wire[pos + 3]);
        if (ver_major != 3 || ver_minor > 4) {
            out.end = StreamEnd::protocol_error;
            out.error = "record version is not TLS";
            return out;
        }
        if (len == 0 || len > kMaxRecordPayload) {
            out.end = StreamEnd::protocol_error;
            out.error = "record length out of range";
            return out;
        }
        if (wire.size() - pos - 5 < len) {
            partial_record = true;
            break;
        }
        const std::uint8_t* payload = &wire[pos + 5];
        if (type == kRecordAlert) {
            if (len < 2) {
                out.end = StreamEnd::protocol_error;
                out.error = "short alert record";
                return out;
            }
            out.alert = {payload[0], payload[1]};
            out.end = StreamEnd::alert;
            return out;
        }
        if (type != kRecordHandshake) {
            out.end = StreamEnd::protocol_error;
            out.error = "unexpected record type " + std::to_string(type);
            return out;
        }
        hs.insert(hs.end(), payload, payload + len);
        pos += 5 + len;

        std::size_t hpos = 0;
        while (hs.size() - hpos >= 4) {
            std::uint32_t mlen = get_u24(&hs[hpos + 1]);
            if (mlen > kMaxHandshakeMessage) {
                out.end = StreamEnd::protocol_error;
                out.error = "handshake message too large";
                return out;
            }
            if (hs.size() - hpos - 4 < mlen) break;
            HandshakeMessage msg;
            msg.type = hs[hpos];
            msg.body.assign(hs.begin() + static_cast<long>(hpos + 4),
                            hs.begin() + static_cast<long>(hpos + 4 + mlen));
            out.messages.push_back(std::move(msg));
            hpos += 4 + mlen;
        }
        hs.erase(hs.begin(), hs.begin() + static_cast<long>(hpos));
    }
    out.end = (partial_record || !hs.empty()) ? StreamEnd::incomplete : StreamEnd::clean;
    return out;
}

Bytes encode_certificate_list(const std::vector<Bytes>& der_blobs) {
    std::size_t total = 0;
    for (const Bytes& b : der_blobs) {
        if (b.empty()) throw ParameterError("empty certificate blob");
        total += 3 + b.size();
    }
    if (total > kMaxHandshakeMessage - 3) throw ParameterError("certificate list too large");
    Bytes body;
    put_u24(body, static_cast<std::uint32_t>(total));
    for (const Bytes& b : der_blobs) {
        put_u24(body, static_cast<std::uint32_t>(b.size()));
        body.insert(body.end(), b.begin(), b.end());
    }
    return body;
}

RawChain parse_certificate_list(const Bytes& body) {
    if (body.size() < 3) throw ParseError("certificate list shorter than its header", 0);
    std::uint32_t total = get_u24(body.data());
    if (total != body.size() - 3)
        throw ParseError("certificate list length disagrees with message length", 0);
    RawChain chain;
    std::size_t pos = 3;
    while (pos < body.size()) {
        if (body.size() - pos < 3)
            throw ParseError("truncated certificate entry header", pos);
        std::uint32_t len = get_u24(&body[pos]);
        if (len == 0) throw ParseError("zero-length certificate entry", pos);
        if (body.size() - pos - 3 < len)
            throw ParseError("certificate entry overruns the list", pos);
        chain.der_blobs.emplace_back(body.begin() + static_cast<long>(pos + 3),
                                     body.begin() + static_cast<long>(pos + 3 + len));
        pos += 3 + len;
    }
    if (chain.der_blobs.empty()) throw EmptyChainError("certificate list holds no certificates");
    return chain;
}

RawChain extract_chain(const HandshakeMessage& certificate_message) {
    if (certificate_message.type != kHandshakeCertificate)
        throw ParameterError("not a certificate message");
    return parse_certificate_list(certificate_message.body);
}

ParsedClientHello parse_client_hello(const Bytes& wire) {
    HandshakeStream stream = parse_handshake_stream(wire);
    if (stream.end == StreamEnd::protocol_error) throw ParseError(stream.error, 0);
    const HandshakeMessage* hello = nullptr;
    for (const auto& m : stream.messages)
        if (m.type == kHandshakeClientHello) {
            hello = &m;
            break;
        }
    if (!hello) throw ParseError("no client hello in stream", 0);
    const Bytes& b = hello->body;
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (b.size() - pos < n) throw ParseError("client hello truncated", pos);
    };
    need(2 + 32 + 1);
    auto ver = version_from_u16(get_u16(&b[pos]));
    if (!ver) throw ParseError("client hello version not TLS 1.0-1.2", pos);
    ParsedClientHello out;
    out.legacy_version = *ver;
    pos += 2;
    std::copy(b.begin() + static_cast<long>(pos), b.begin() + static_cast<long>(pos + 32),
              out.random.begin());
    pos += 32;
    std::uint8_t sid_len = b[pos++];
    need(sid_len);
    pos += sid_len;
    need(2);
    std::uint16_t suites_len = get_u16(&b[pos]);
    pos += 2;
    if (suites_len % 2 != 0) throw ParseError("odd cipher suite list length", pos);
    need(suites_len);
    for (std::size_t i = 0; i < suites_len; i += 2)
        out.cipher_suites.push_back(get_u16(&b[pos + i]));
    pos += suites_len;
    need(1);
    std::uint8_t comp_len = b[pos++];
    need(comp_len);
    pos += comp_len;
    if (pos == b.size()) return out;  // no extensions
    need(2);
    std::uint16_t ext_len = get_u16(&b[pos]);
    pos += 2;
    need(ext_len);
    std::size_t ext_end = pos + ext_len;
    while (pos + 4 <= ext_end) {
        std::uint16_t ext_type = get_u16(&b[pos]);
        std::uint16_t elen = get_u16(&b[pos + 2]);
        pos += 4;
        if (pos + elen > ext_end) throw ParseError("extension overruns hello", pos);
        if (ext_type == kExtServerName && elen >= 5) {
            std::uint16_t name_len = get_u16(&b[pos + 3]);
            if (b[pos + 2] == 0 && 5 + name_len <= elen)
                out.sni = std::string(b.begin() + static_cast<long>(pos + 5),
                                      b.begin() + static_cast<long>(pos + 5 + name_len));
        }
        pos += elen;
    }
    return out;
}

std::string failure_kind_name(FailureKind k) {
    switch (k) {
        case FailureKind::refused: return "refused";
        case FailureKind::connect_timeout: return "connect_timeout";
        case FailureKind::read_timeout: return "read_timeout";
        case FailureKind::handshake_alert: return "handshake_alert";
        case FailureKind::protocol_error: return "protocol_error";
    }
    return "?";
}

}  // namespace proxyscope::tls
