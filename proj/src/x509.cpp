#include "proxyscope/x509.hpp"

#include <openssl/asn1.h>
#include <openssl/bn.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/objects.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>

#include <arpa/inet.h>
#include <time.h>

#include <cstdio>
#include <cstring>
#include <memory>

namespace proxyscope::x509 {

std::size_t der_scan_error_offset(const Bytes& der);

namespace {

struct X509Free {
    void operator()(X509* x) const { X509_free(x); }
};
using X509Ptr = std::unique_ptr<X509, X509Free>;

X509Ptr d2i(const Bytes& der, const char* what) {
    const unsigned char* p = der.data();
    X509* raw = d2i_X509(nullptr, &p, static_cast<long>(der.size()));
    if (raw == nullptr) {
        ERR_clear_error();
        throw ParseError(std::string(what) + ": certificate DER parse failed",
                         der_scan_error_offset(der));
    }
    X509Ptr x(raw);
    auto consumed = static_cast<std::size_t>(p - der.data());
    if (consumed != der.size())
        throw ParseError(std::string(what) + ": trailing bytes after certificate", consumed);
    return x;
}

std::optional<std::string> name_attr(X509_NAME* name, int nid) {
    int idx = X509_NAME_get_index_by_NID(name, nid, -1);
    if (idx < 0) return std::nullopt;
    X509_NAME_ENTRY* entry = X509_NAME_get_entry(name, idx);
    ASN1_STRING* data = X509_NAME_ENTRY_get_data(entry);
    unsigned char* utf8 = nullptr;
    int len = ASN1_STRING_to_UTF8(&utf8, data);
    if (len < 0) return std::nullopt;
    std::string out(reinterpret_cast<char*>(utf8), static_cast<std::size_t>(len));
    OPENSSL_free(utf8);
    return out;
}

Bytes name_der(X509_NAME* name) {
    unsigned char* buf = nullptr;
    int len = i2d_X509_NAME(name, &buf);
    if (len <= 0) return {};
    Bytes out(buf, buf + len);
    OPENSSL_free(buf);
    return out;
}

std::string signature_algorithm_name(int nid) {
    switch (nid) {
        case NID_md2WithRSAEncryption: return "md2-with-rsa";
        case NID_md5WithRSAEncryption: return "md5-with-rsa";
        case NID_sha1WithRSAEncryption: return "sha1-with-rsa";
        case NID_sha224WithRSAEncryption: return "sha224-with-rsa";
        case NID_sha256WithRSAEncryption: return "sha256-with-rsa";
        case NID_sha384WithRSAEncryption: return "sha384-with-rsa";
        case NID_sha512WithRSAEncryption: return "sha512-with-rsa";
        case NID_ecdsa_with_SHA1: return "ecdsa-with-sha1";
        case NID_ecdsa_with_SHA256: return "ecdsa-with-sha256";
        case NID_ecdsa_with_SHA384: return "ecdsa-with-sha384";
        case NID_ecdsa_with_SHA512: return "ecdsa-with-sha512";
        case NID_dsaWithSHA1: return "dsa-with-sha1";
        default: {
            const char* ln = OBJ_nid2ln(nid);
            return ln != nullptr ? ln : ("nid-" + std::to_string(nid));
        }
    }
}

std::chrono::sys_seconds asn1_time_to_sys(const ASN1_TIME* t) {
    struct tm tm_val {};
    if (t == nullptr || ASN1_TIME_to_tm(t, &tm_val) != 1) return {};
    time_t epoch = timegm(&tm_val);
    return std::chrono::sys_seconds{std::chrono::seconds{epoch}};
}

}  // namespace

// Definite-length TLV walk; returns the byte offset of the first framing
// inconsistency. libcrypto reports no offsets, so error locations come from
// this scan instead.
std::size_t der_scan_error_offset(const Bytes& der) {
    struct Walker {
        const Bytes& d;
        std::size_t bad = 0;
        bool walk(std::size_t pos, std::size_t end, bool& ok) {
            while (pos < end) {
                std::size_t tag_pos = pos;
                if (pos >= end) break;
                std::uint8_t tag = d[pos++];
                if ((tag & 0x1f) == 0x1f) {  // multi-byte tags: skip continuation
                    while (pos < end && (d[pos] & 0x80) != 0) ++pos;
                    if (pos >= end) { bad = tag_pos; ok = false; return false; }
                    ++pos;
                }
                if (pos >= end) { bad = tag_pos; ok = false; return false; }
                std::size_t len_pos = pos;
                std::uint8_t first = d[pos++];
                std::size_t len = 0;
                if (first < 0x80) {
                    len = first;
                } else {
                    std::size_t n = first & 0x7f;
                    if (n == 0 || n > 8 || end - pos < n) { bad = len_pos; ok = false; return false; }
                    for (std::size_t i = 0; i < n; ++i) len = len << 8 | d[pos++];
                }
                if (end - pos < len) { bad = len_pos; ok = false; return false; }
                if ((tag & 0x20) != 0) {  // constructed: recurse
                    if (!walk(pos, pos + len, ok)) return false;
                }
                pos += len;
            }
            return true;
        }
    };
    Walker w{der};
    bool ok = true;
    w.walk(0, der.size(), ok);
    return ok ? 0 : w.bad;
}

Sha256 fingerprint_sha256(const Bytes& der) { return sha256(der); }

CertificateSummary parse_der(const Bytes& der) {
    if (der.empty()) throw ParseError("empty certificate", 0);
    X509Ptr x = d2i(der, "parse");
    CertificateSummary s;

    X509_NAME* subject = X509_get_subject_name(x.get());
    X509_NAME* issuer = X509_get_issuer_name(x.get());
    s.subject_cn = name_attr(subject, NID_commonName);
    s.subject_org = name_attr(subject, NID_organizationName);
    s.issuer_cn = name_attr(issuer, NID_commonName);
    s.issuer_org = name_attr(issuer, NID_organizationName);
    s.issuer_ou = name_attr(issuer, NID_organizationalUnitName);
    s.is_self_signed = name_der(subject) == name_der(issuer);

    auto* sans = static_cast<GENERAL_NAMES*>(
        X509_get_ext_d2i(x.get(), NID_subject_alt_name, nullptr, nullptr));
    if (sans != nullptr) {
        for (int i = 0; i < sk_GENERAL_NAME_num(sans); ++i) {
            GENERAL_NAME* gn = sk_GENERAL_NAME_value(sans, i);
            if (gn->type == GEN_DNS) {
                unsigned char* utf8 = nullptr;
                int len = ASN1_STRING_to_UTF8(&utf8, gn->d.dNSName);
                if (len >= 0) {
                    s.san_dns.emplace_back(reinterpret_cast<char*>(utf8),
                                           static_cast<std::size_t>(len));
                    OPENSSL_free(utf8);
                }
            } else if (gn->type == GEN_IPADD) {
                const unsigned char* ip = ASN1_STRING_get0_data(gn->d.iPAddress);
                int len = ASN1_STRING_length(gn->d.iPAddress);
                char buf[INET6_ADDRSTRLEN] = {0};
                if (len == 4 && inet_ntop(AF_INET, ip, buf, sizeof(buf)) != nullptr)
                    s.san_ip.emplace_back(buf);
                else if (len == 16 && inet_ntop(AF_INET6, ip, buf, sizeof(buf)) != nullptr)
                    s.san_ip.emplace_back(buf);
            }
        }
        GENERAL_NAMES_free(sans);
    }

    const ASN1_INTEGER* serial = X509_get0_serialNumber(x.get());
    BIGNUM* bn = ASN1_INTEGER_to_BN(serial, nullptr);
    if (bn != nullptr) {
        char* hex_str = BN_bn2hex(bn);
        if (hex_str != nullptr) {
            s.serial_hex = to_lower_ascii(hex_str);
            OPENSSL_free(hex_str);
        }
        BN_free(bn);
    }

    s.not_before = asn1_time_to_sys(X509_get0_notBefore(x.get()));
    s.not_after = asn1_time_to_sys(X509_get0_notAfter(x.get()));

    EVP_PKEY* pk = X509_get0_pubkey(x.get());
    if (pk != nullptr) {
        switch (EVP_PKEY_get_base_id(pk)) {
            case EVP_PKEY_RSA:
            case EVP_PKEY_RSA_PSS: s.key_algorithm = "rsa"; break;
            case EVP_PKEY_EC: s.key_algorithm = "ec"; break;
            case EVP_PKEY_DSA: s.key_algorithm = "dsa"; break;
            case EVP_PKEY_ED25519:
            case EVP_PKEY_ED448: s.key_algorithm = "eddsa"; break;
            default: s.key_algorithm = "other"; break;
        }
        s.key_bits = EVP_PKEY_get_bits(pk);
    } else {
        ERR_clear_error();
        s.key_algorithm = "other";  // unsupported algorithms are labeled, not errors
        s.key_bits = 0;
    }

    s.signature_algorithm = signature_algorithm_name(X509_get_signature_nid(x.get()));
    s.fingerprint = sha256(der);
    return s;
}

std::string encode_pem_block(const Bytes& der) {
    std::string b64 = base64_encode(der.data(), der.size());
    std::string out = "-----BEGIN CERTIFICATE-----\n";
    for (std::size_t i = 0; i < b64.size(); i += 64) {
        out.append(b64, i, std::min<std::size_t>(64, b64.size() - i));
        out.push_back('\n');
    }
    out += "-----END CERTIFICATE-----\n";
    return out;
}

std::string encode_concatenated_pem(const std::vector<Bytes>& der_blobs) {
    std::string out;
    for (const Bytes& der : der_blobs) out += encode_pem_block(der);
    return out;
}

std::vector<Bytes> decode_concatenated_pem(std::string_view pem_text) {
    static constexpr std::string_view kBegin = "-----BEGIN CERTIFICATE-----";
    static constexpr std::string_view kEnd = "-----END CERTIFICATE-----";
    std::vector<Bytes> out;
    std::size_t pos = 0;
    std::size_t block = 0;
    while (true) {
        std::size_t begin = pem_text.find(kBegin, pos);
        if (begin == std::string_view::npos) break;
        std::size_t body_start = begin + kBegin.size();
        std::size_t end = pem_text.find(kEnd, body_start);
        if (end == std::string_view::npos)
            throw ParseError("certificate block " + std::to_string(block) +
                                 " has no end marker",
                             begin, block);
        std::string_view body = pem_text.substr(body_start, end - body_start);
        std::optional<Bytes> der = base64_decode(body);
        if (!der || der->empty())
            throw ParseError("certificate block " + std::to_string(block) +
                                 " is not valid base64",
                             begin, block);
        try {
            (void)d2i(*der, "decode");
        } catch (const ParseError& e) {
            throw ParseError("certificate block " + std::to_string(block) +
                                 " is not a certificate (" + e.what() + ")",
                             begin, block);
        }
        out.push_back(std::move(*der));
        pos = end + kEnd.size();
        ++block;
    }
    if (out.empty()) throw EmptyChainError("no certificate blocks in input");
    return out;
}

namespace {

template <typename T>
void diff_field(std::vector<std::string>& fields, const char* label, const T& a, const T& b) {
    if (a != b) fields.emplace_back(label);
}

}  // namespace

ChainComparison compare_chains(const std::vector<Bytes>& observed,
                               const std::vector<Bytes>& authoritative) {
    if (observed.empty() || authoritative.empty())
        throw ParameterError("chain comparison needs non-empty chains");
    ChainComparison out;
    const Bytes& leaf_o = observed.front();
    const Bytes& leaf_a = authoritative.front();
    out.match = sha256(leaf_o) == sha256(leaf_a);
    if (out.match) return out;

    CertificateSummary so, sa;
    try {
        so = parse_der(leaf_o);
        sa = parse_der(leaf_a);
    } catch (const ParseError&) {
        out.differing_fields = {"unparseable"};
        return out;
    }
    auto& f = out.differing_fields;
    diff_field(f, "subject_cn", so.subject_cn, sa.subject_cn);
    diff_field(f, "subject_org", so.subject_org, sa.subject_org);
    diff_field(f, "issuer_cn", so.issuer_cn, sa.issuer_cn);
    diff_field(f, "issuer_org", so.issuer_org, sa.issuer_org);
    diff_field(f, "issuer_ou", so.issuer_ou, sa.issuer_ou);
    diff_field(f, "san_dns", so.san_dns, sa.san_dns);
    diff_field(f, "serial", so.serial_hex, sa.serial_hex);
    diff_field(f, "key_algorithm", so.key_algorithm, sa.key_algorithm);
    diff_field(f, "key_bits", so.key_bits, sa.key_bits);
    diff_field(f, "signature_algorithm", so.signature_algorithm, sa.signature_algorithm);
    diff_field(f, "not_before", so.not_before.time_since_epoch().count(),
               sa.not_before.time_since_epoch().count());
    diff_field(f, "not_after", so.not_after.time_since_epoch().count(),
               sa.not_after.time_since_epoch().count());
    if (f.empty()) f.emplace_back("encoding");
    return out;
}

bool verify_signed_by(const Bytes& candidate_der, const Bytes& issuer_der) {
    X509Ptr cand = d2i(candidate_der, "candidate");
    X509Ptr issuer = d2i(issuer_der, "issuer");

    int sig_nid = X509_get_signature_nid(cand.get());
    int md_nid = NID_undef, pk_nid = NID_undef;
    if (OBJ_find_sigid_algs(sig_nid, &md_nid, &pk_nid) != 1)
        throw UnsupportedAlgorithmError("unknown signature algorithm " +
                                        signature_algorithm_name(sig_nid));
    if (md_nid != NID_undef && EVP_get_digestbynid(md_nid) == nullptr)
        throw UnsupportedAlgorithmError("digest unavailable for " +
                                        signature_algorithm_name(sig_nid));

    EVP_PKEY* pk = X509_get0_pubkey(issuer.get());
    if (pk == nullptr) {
        ERR_clear_error();
        throw UnsupportedAlgorithmError("issuer public key algorithm unsupported");
    }

    if (name_der(X509_get_issuer_name(cand.get())) !=
        name_der(X509_get_subject_name(issuer.get())))
        return false;

    int rc = X509_verify(cand.get(), pk);
    if (rc < 0) {
        unsigned long err = ERR_get_error();
        char buf[256];
        ERR_error_string_n(err, buf, sizeof(buf));
        ERR_clear_error();
        throw UnsupportedAlgorithmError(std::string("signature check failed to run: ") + buf);
    }
    ERR_clear_error();
    return rc == 1;
}

std::string iso8601_utc(std::chrono::sys_seconds t) {
    time_t epoch = t.time_since_epoch().count();
    struct tm tm_val {};
    gmtime_r(&epoch, &tm_val);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm_val.tm_year + 1900,
                  tm_val.tm_mon + 1, tm_val.tm_mday, tm_val.tm_hour, tm_val.tm_min,
                  tm_val.tm_sec);
    return buf;
}

std::optional<std::chrono::sys_seconds> parse_iso8601_utc(std::string_view s) {
    struct tm tm_val {};
    int y, mo, d, h, mi, sec;
    if (std::sscanf(std::string(s).c_str(), "%d-%d-%dT%d:%d:%dZ", &y, &mo, &d, &h, &mi, &sec) != 6)
        return std::nullopt;
    tm_val.tm_year = y - 1900;
    tm_val.tm_mon = mo - 1;
    tm_val.tm_mday = d;
    tm_val.tm_hour = h;
    tm_val.tm_min = mi;
    tm_val.tm_sec = sec;
    return std::chrono::sys_seconds{std::chrono::seconds{timegm(&tm_val)}};
}

}  // namespace proxyscope::x509
