#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "proxyscope/bytes.hpp"
#include "proxyscope/errors.hpp"

namespace proxyscope::x509 {

struct CertificateSummary {
    std::optional<std::string> subject_cn;
    std::optional<std::string> subject_org;
    std::optional<std::string> issuer_cn;
    std::optional<std::string> issuer_org;
    std::optional<std::string> issuer_ou;
    std::vector<std::string> san_dns;
    std::vector<std::string> san_ip;
    std::string serial_hex;
    std::chrono::sys_seconds not_before{};
    std::chrono::sys_seconds not_after{};
    std::string key_algorithm;  // "rsa", "ec", "dsa", "other"
    int key_bits = 0;
    std::string signature_algorithm;  // e.g. "md5-with-rsa", "sha256-with-rsa"
    bool is_self_signed = false;      // subject DER == issuer DER
    Sha256 fingerprint{};             // SHA-256 of the exact DER handed in
};

// Throws ParseError with the byte offset of the first inconsistency.
CertificateSummary parse_der(const Bytes& der);

Sha256 fingerprint_sha256(const Bytes& der);

std::string encode_pem_block(const Bytes& der);
std::string encode_concatenated_pem(const std::vector<Bytes>& der_blobs);

// Throws ParseError (block index set) on a corrupt block, EmptyChainError
// when the text holds zero CERTIFICATE blocks.
std::vector<Bytes> decode_concatenated_pem(std::string_view pem_text);

struct ChainComparison {
    bool match = false;  // true iff the leaf fingerprints are equal
    std::vector<std::string> differing_fields;
};

// Leaf-only comparison; longer chains only matter through their leaves.
ChainComparison compare_chains(const std::vector<Bytes>& observed,
                               const std::vector<Bytes>& authoritative);

// True iff candidate's signature verifies under issuer's public key AND
// candidate's issuer name equals issuer's subject name (DER comparison).
// Throws UnsupportedAlgorithmError instead of returning false when the
// signature or key algorithm is not supported.
bool verify_signed_by(const Bytes& candidate_der, const Bytes& issuer_der);

std::string iso8601_utc(std::chrono::sys_seconds t);
std::optional<std::chrono::sys_seconds> parse_iso8601_utc(std::string_view s);

}  // namespace proxyscope::x509
