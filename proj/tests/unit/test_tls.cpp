#include <doctest.h>

#include <random>

#include "proxyscope/tls.hpp"

using namespace proxyscope;
using namespace proxyscope::tls;

namespace {

Bytes handshake_record(Version v, const Bytes& fragment) {
    Bytes out;
    put_u8(out, kRecordHandshake);
    put_u16(out, static_cast<std::uint16_t>(v));
    put_u16(out, static_cast<std::uint16_t>(fragment.size()));
    out.insert(out.end(), fragment.begin(), fragment.end());
    return out;
}

Bytes message(std::uint8_t type, const Bytes& body) {
    Bytes out;
    put_u8(out, type);
    put_u24(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

}  // namespace

TEST_SUITE("tls") {

TEST_CASE("client hello minimal golden layout") {
    // One version, one suite, fixed random: the layout is fully determined.
    ClientHelloParams params;
    params.versions = {Version::v1_0};
    params.cipher_suites = {0x002f};
    params.random.fill(0);
    Bytes wire = build_client_hello(params, "a.test");

    REQUIRE(wire.size() == 67);
    CHECK(wire[0] == 0x16);                 // handshake record
    CHECK(wire[1] == 0x03);                 // record version pinned to 1.0
    CHECK(wire[2] == 0x01);
    CHECK(get_u16(&wire[3]) == 62);         // record payload length
    CHECK(wire[5] == 0x01);                 // client hello
    CHECK(get_u24(&wire[6]) == 58);         // hello body length
    CHECK(get_u16(&wire[9]) == 0x0301);     // offered version
    for (int i = 11; i < 43; ++i) CHECK(wire[i] == 0);
    CHECK(wire[43] == 0);                   // empty session id
    CHECK(get_u16(&wire[44]) == 2);         // one suite = 2 bytes
    CHECK(get_u16(&wire[46]) == 0x002f);
    CHECK(wire[48] == 1);                   // one compression method
    CHECK(wire[49] == 0);                   // null
    CHECK(get_u16(&wire[50]) == 15);        // extension block: SNI only
    CHECK(get_u16(&wire[52]) == 0x0000);    // server_name extension type
    CHECK(get_u16(&wire[54]) == 11);
    CHECK(get_u16(&wire[56]) == 9);         // server_name_list length
    CHECK(wire[58] == 0);                   // host_name entry
    CHECK(get_u16(&wire[59]) == 6);
    CHECK(std::string(wire.begin() + 61, wire.end()) == "a.test");
}

TEST_CASE("sni suppressed for ip literals and empty hosts") {
    ClientHelloParams params;
    params.versions = {Version::v1_0};
    params.cipher_suites = {0x002f};
    params.random.fill(0);
    Bytes for_ip = build_client_hello(params, "192.0.2.1");
    Bytes for_none = build_client_hello(params, "");
    CHECK(for_ip == for_none);
    CHECK(for_ip.size() == 50);  // no extension block at all
    CHECK_FALSE(parse_client_hello(for_ip).sni.has_value());

    Bytes for_v6 = build_client_hello(params, "2001:db8::1");
    CHECK_FALSE(parse_client_hello(for_v6).sni.has_value());

    params.include_sni = false;
    CHECK(build_client_hello(params, "a.test") == for_none);
}

TEST_CASE("default hello carries signature algorithms for 1.2") {
    Bytes wire = build_client_hello(ClientHelloParams::fresh(), "host.test");
    // 0x000d must appear as an extension type; scan the raw bytes.
    bool found = false;
    for (std::size_t i = 0; i + 1 < wire.size(); ++i)
        if (wire[i] == 0x00 && wire[i + 1] == 0x0d) found = true;
    CHECK(found);
}

TEST_CASE("client hello build and parse round trip") {
    std::mt19937 rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        ClientHelloParams params;
        params.versions = {Version::v1_2, Version::v1_0};
        params.cipher_suites.clear();
        std::size_t n = 1 + rng() % 12;
        for (std::size_t i = 0; i < n; ++i)
            params.cipher_suites.push_back(static_cast<std::uint16_t>(rng()));
        for (auto& b : params.random) b = static_cast<std::uint8_t>(rng());
        std::string host = trial % 2 == 0 ? "host" + std::to_string(trial) + ".test" : "";

        ParsedClientHello parsed = parse_client_hello(build_client_hello(params, host));
        CHECK(parsed.legacy_version == Version::v1_2);
        CHECK(parsed.random == params.random);
        CHECK(parsed.cipher_suites == params.cipher_suites);
        if (host.empty())
            CHECK_FALSE(parsed.sni.has_value());
        else
            CHECK(parsed.sni == host);
    }
}

TEST_CASE("hello builder rejects empty offers") {
    ClientHelloParams params;
    params.versions.clear();
    CHECK_THROWS_AS(build_client_hello(params, "h"), ParameterError);
    params = ClientHelloParams{};
    params.cipher_suites.clear();
    CHECK_THROWS_AS(build_client_hello(params, "h"), ParameterError);
}

TEST_CASE("parse_client_hello rejects garbage") {
    CHECK_THROWS_AS(parse_client_hello(Bytes{0x5a, 0x5a, 0x5a, 0x5a, 0x5a, 0x5a}), ParseError);
    // A valid stream with no client hello in it.
    Bytes wire = handshake_record(Version::v1_2, message(kHandshakeServerHello, Bytes(40, 0)));
    CHECK_THROWS_AS(parse_client_hello(wire), ParseError);
}

TEST_CASE("stream: several messages in one record") {
    Bytes fragment = message(kHandshakeServerHello, Bytes{0x03, 0x03, 0xaa});
    Bytes done = message(kHandshakeServerHelloDone, {});
    fragment.insert(fragment.end(), done.begin(), done.end());
    HandshakeStream s = parse_handshake_stream(handshake_record(Version::v1_2, fragment));
    CHECK(s.end == StreamEnd::clean);
    REQUIRE(s.messages.size() == 2);
    CHECK(s.messages[0].type == kHandshakeServerHello);
    CHECK(s.messages[0].body == Bytes{0x03, 0x03, 0xaa});
    CHECK(s.messages[1].type == kHandshakeServerHelloDone);
    CHECK(s.messages[1].body.empty());
}

TEST_CASE("stream: one message spanning records") {
    Bytes body(300, 0x42);
    Bytes msg = message(kHandshakeCertificate, body);
    for (std::size_t split : {std::size_t{1}, std::size_t{5}, std::size_t{150}, msg.size() - 1}) {
        Bytes first(msg.begin(), msg.begin() + static_cast<long>(split));
        Bytes second(msg.begin() + static_cast<long>(split), msg.end());
        Bytes wire = handshake_record(Version::v1_0, first);
        Bytes rec2 = handshake_record(Version::v1_0, second);
        wire.insert(wire.end(), rec2.begin(), rec2.end());
        HandshakeStream s = parse_handshake_stream(wire);
        CHECK(s.end == StreamEnd::clean);
        REQUIRE(s.messages.size() == 1);
        CHECK(s.messages[0].body == body);
    }
}

TEST_CASE("stream: alert terminates") {
    Bytes wire = handshake_record(Version::v1_2, message(kHandshakeServerHello, Bytes(2, 3)));
    Bytes alert{kRecordAlert, 0x03, 0x03, 0x00, 0x02, 2, 40};
    wire.insert(wire.end(), alert.begin(), alert.end());
    HandshakeStream s = parse_handshake_stream(wire);
    CHECK(s.end == StreamEnd::alert);
    REQUIRE(s.alert.has_value());
    CHECK(s.alert->first == 2);
    CHECK(s.alert->second == 40);
    CHECK(s.messages.size() == 1);  // messages before the alert survive
}

TEST_CASE("stream: truncation is incomplete, not an error") {
    Bytes msg = message(kHandshakeServerHello, Bytes(40, 1));
    Bytes wire = handshake_record(Version::v1_2, msg);
    for (std::size_t keep : {std::size_t{3}, std::size_t{6}, wire.size() - 1}) {
        Bytes cut(wire.begin(), wire.begin() + static_cast<long>(keep));
        CHECK(parse_handshake_stream(cut).end == StreamEnd::incomplete);
    }
    // A record carrying half a message, with nothing following.
    Bytes half(msg.begin(), msg.begin() + 10);
    CHECK(parse_handshake_stream(handshake_record(Version::v1_2, half)).end ==
          StreamEnd::incomplete);
}

TEST_CASE("stream: garbage and wrong record types are protocol errors") {
    CHECK(parse_handshake_stream(Bytes(64, 0x5a)).end == StreamEnd::protocol_error);
    Bytes app{0x17, 0x03, 0x03, 0x00, 0x01, 0x00};
    CHECK(parse_handshake_stream(app).end == StreamEnd::protocol_error);
    Bytes bad_version{0x16, 0x02, 0x00, 0x00, 0x01, 0x00};
    CHECK(parse_handshake_stream(bad_version).end == StreamEnd::protocol_error);
    Bytes zero_len{0x16, 0x03, 0x03, 0x00, 0x00};
    CHECK(parse_handshake_stream(zero_len).end == StreamEnd::protocol_error);
}

TEST_CASE("stream: empty input is clean") {
    HandshakeStream s = parse_handshake_stream({});
    CHECK(s.end == StreamEnd::clean);
    CHECK(s.messages.empty());
}

TEST_CASE("certificate list codec identity") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Bytes> blobs(1 + rng() % 5);
        for (auto& b : blobs) {
            b.resize(1 + rng() % 600);
            for (auto& byte : b) byte = static_cast<std::uint8_t>(rng());
        }
        RawChain chain = parse_certificate_list(encode_certificate_list(blobs));
        CHECK(chain.der_blobs == blobs);
    }
}

TEST_CASE("certificate list rejects inconsistent framing") {
    Bytes body = encode_certificate_list({Bytes(10, 1), Bytes(20, 2)});
    // Outer length disagreeing with the body.
    Bytes outer_bad = body;
    outer_bad[2] ^= 1;
    CHECK_THROWS_AS(parse_certificate_list(outer_bad), ParseError);
    // Entry overrunning the list.
    Bytes entry_bad = body;
    entry_bad[5] = 0xff;
    CHECK_THROWS_AS(parse_certificate_list(entry_bad), ParseError);
    CHECK_THROWS_AS(parse_certificate_list(Bytes{0x00}), ParseError);
}

TEST_CASE("extract_chain gates on message type and emptiness") {
    HandshakeMessage not_certs{kHandshakeServerHello, encode_certificate_list({Bytes(4, 9)})};
    CHECK_THROWS_AS(extract_chain(not_certs), ParameterError);

    HandshakeMessage empty{kHandshakeCertificate, Bytes{0x00, 0x00, 0x00}};
    CHECK_THROWS_AS(extract_chain(empty), EmptyChainError);

    HandshakeMessage good{kHandshakeCertificate, encode_certificate_list({Bytes(4, 9)})};
    CHECK(extract_chain(good).der_blobs.size() == 1);
}

TEST_CASE("version helpers") {
    CHECK(version_name(Version::v1_2) == "TLS1.2");
    CHECK(version_from_u16(0x0303) == Version::v1_2);
    CHECK_FALSE(version_from_u16(0x0304).has_value());  // 1.3 out of scope
    CHECK_FALSE(version_from_u16(0x0300).has_value());  // SSLv3 out of scope
    ClientHelloParams params;
    CHECK(params.max_version() == Version::v1_2);
    CHECK(params.min_version() == Version::v1_0);
}

}  // TEST_SUITE
