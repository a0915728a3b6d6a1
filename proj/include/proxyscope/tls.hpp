#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "proxyscope/bytes.hpp"
#include "proxyscope/errors.hpp"

namespace proxyscope::tls {

enum class Version : std::uint16_t {
    v1_0 = 0x0301,
    v1_1 = 0x0302,
    v1_2 = 0x0303,
};

constexpr std::uint8_t kRecordHandshake = 0x16;
constexpr std::uint8_t kRecordAlert = 0x15;
constexpr std::uint8_t kHandshakeClientHello = 0x01;
constexpr std::uint8_t kHandshakeServerHello = 0x02;
constexpr std::uint8_t kHandshakeCertificate = 0x0b;
constexpr std::uint8_t kHandshakeServerHelloDone = 0x0e;

std::string version_name(Version v);
std::optional<Version> version_from_u16(std::uint16_t raw);

// RSA and ECDHE suites current stacks accept for an RSA-keyed server.
std::vector<std::uint16_t> default_cipher_suites();

struct ClientHelloParams {
    std::vector<Version> versions{Version::v1_2, Version::v1_1, Version::v1_0};
    std::vector<std::uint16_t> cipher_suites = default_cipher_suites();
    std::array<std::uint8_t, 32> random{};
    bool include_sni = true;

    // Fresh random, default versions and suites.
    static ClientHelloParams fresh();
    Version max_version() const;
    Version min_version() const;
};

// sni_host empty or an IP literal suppresses the SNI extension.
Bytes build_client_hello(const ClientHelloParams& params, const std::string& sni_host);

struct ParsedClientHello {
    Version legacy_version;
    std::array<std::uint8_t, 32> random{};
    std::vector<std::uint16_t> cipher_suites;
    std::optional<std::string> sni;
};

// Parses a ClientHello from raw record-layer bytes. Throws ParseError.
ParsedClientHello parse_client_hello(const Bytes& wire);

struct HandshakeMessage {
    std::uint8_t type;
    Bytes body;
};

enum class StreamEnd {
    clean,        // ends exactly on record and message boundaries
    incomplete,   // a record or handshake message is still partial
    alert,        // an alert record terminated the stream
    protocol_error,
};

struct HandshakeStream {
    std::vector<HandshakeMessage> messages;
    StreamEnd end = StreamEnd::clean;
    std::optional<std::pair<std::uint8_t, std::uint8_t>> alert;  // level, description
    std::string error;
};

// Reassembles handshake messages across record boundaries; handles multiple
// messages per record. Stops at the first alert or malformed framing.
HandshakeStream parse_handshake_stream(const Bytes& wire);

struct RawChain {
    // DER blobs exactly as received, leaf first.
    std::vector<Bytes> der_blobs;
};

// Certificate handshake message body <-> 3-byte length-prefixed list.
Bytes encode_certificate_list(const std::vector<Bytes>& der_blobs);
RawChain parse_certificate_list(const Bytes& body);

// Pulls the chain out of a Certificate handshake message. Throws ParseError
// on framing inconsistencies, EmptyChainError on a zero-length list.
RawChain extract_chain(const HandshakeMessage& certificate_message);

enum class FailureKind {
    refused,
    connect_timeout,
    read_timeout,
    handshake_alert,
    protocol_error,
};

std::string failure_kind_name(FailureKind k);

struct ProbeFailure {
    FailureKind kind;
    std::string detail;
    std::optional<std::pair<std::uint8_t, std::uint8_t>> alert;
};

struct ProbeSuccess {
    RawChain chain;
    Version negotiated;
    std::chrono::milliseconds elapsed{0};
    std::string peer_address;
};

struct ProbeOutcome {
    std::optional<ProbeSuccess> success;
    std::optional<ProbeFailure> failure;
    bool ok() const { return success.has_value(); }
};

struct ProbeTarget {
    std::string host;
    std::uint16_t port = 443;
    std::optional<std::string> server_name;  // overrides host for SNI
};

struct ProbeOptions {
    ClientHelloParams hello = ClientHelloParams::fresh();
    int connect_timeout_ms = 5000;
    int read_timeout_ms = 5000;
};

// Partial handshake: sends ClientHello, captures ServerHello + Certificate,
// then aborts with warning user_canceled + close_notify before any key
// exchange.
ProbeOutcome probe(const ProbeTarget& target, const ProbeOptions& options = ProbeOptions{});

}  // namespace proxyscope::tls
