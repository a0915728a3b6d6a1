#include "proxyscope/forge.hpp"

#include <openssl/bio.h>
#include <openssl/bn.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/rand.h>
#include <openssl/rsa.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>

#include <poll.h>

#include <cstring>

#include "proxyscope/tls.hpp"
#include "proxyscope/x509.hpp"

namespace proxyscope::forge {

namespace {

struct EvpKeyFree {
    void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
using KeyPtr = std::unique_ptr<EVP_PKEY, EvpKeyFree>;

struct X509Free {
    void operator()(X509* x) const { X509_free(x); }
};
using CertPtr = std::unique_ptr<X509, X509Free>;

struct BioFree {
    void operator()(BIO* b) const { BIO_free(b); }
};
using BioPtr = std::unique_ptr<BIO, BioFree>;

[[noreturn]] void throw_openssl(const std::string& what) {
    char buf[256];
    ERR_error_string_n(ERR_get_error(), buf, sizeof(buf));
    ERR_clear_error();
    throw Error(what + ": " + buf);
}

KeyPtr generate_rsa(int bits) {
    EVP_PKEY* raw = EVP_RSA_gen(static_cast<unsigned int>(bits));
    if (raw == nullptr) throw_openssl("RSA keygen failed");
    return KeyPtr(raw);
}

CertPtr parse_cert(const Bytes& der, const char* what) {
    const unsigned char* p = der.data();
    X509* raw = d2i_X509(nullptr, &p, static_cast<long>(der.size()));
    if (raw == nullptr) {
        ERR_clear_error();
        throw ParseError(std::string(what) + ": certificate DER parse failed", 0);
    }
    return CertPtr(raw);
}

Bytes cert_to_der(X509* x) {
    unsigned char* buf = nullptr;
    int len = i2d_X509(x, &buf);
    if (len <= 0) throw_openssl("certificate encode failed");
    Bytes out(buf, buf + len);
    OPENSSL_free(buf);
    return out;
}

std::string key_to_pem(EVP_PKEY* key) {
    BioPtr bio(BIO_new(BIO_s_mem()));
    if (!bio || PEM_write_bio_PrivateKey(bio.get(), key, nullptr, nullptr, 0, nullptr, nullptr) != 1)
        throw_openssl("key PEM encode failed");
    char* data = nullptr;
    long len = BIO_get_mem_data(bio.get(), &data);
    return std::string(data, static_cast<std::size_t>(len));
}

std::string cert_to_pem_text(X509* x) {
    BioPtr bio(BIO_new(BIO_s_mem()));
    if (!bio || PEM_write_bio_X509(bio.get(), x) != 1) throw_openssl("cert PEM encode failed");
    char* data = nullptr;
    long len = BIO_get_mem_data(bio.get(), &data);
    return std::string(data, static_cast<std::size_t>(len));
}

KeyPtr key_from_pem(const std::string& pem) {
    BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
    EVP_PKEY* raw = bio ? PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr) : nullptr;
    if (raw == nullptr) throw_openssl("key PEM parse failed");
    return KeyPtr(raw);
}

CertPtr cert_from_pem(const std::string& pem) {
    BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
    X509* raw = bio ? PEM_read_bio_X509(bio.get(), nullptr, nullptr, nullptr) : nullptr;
    if (raw == nullptr) throw_openssl("cert PEM parse failed");
    return CertPtr(raw);
}

const EVP_MD* digest_for(Profile::Hash hash) {
    switch (hash) {
        case Profile::Hash::md5: return EVP_md5();
        case Profile::Hash::sha1: return EVP_sha1();
        case Profile::Hash::sha256: return EVP_sha256();
    }
    return EVP_sha256();
}

void set_random_serial(X509* x) {
    unsigned char raw[8];
    if (RAND_bytes(raw, sizeof(raw)) != 1) throw_openssl("serial randomization failed");
    raw[0] &= 0x7f;  // keep it positive
    if (raw[0] == 0) raw[0] = 1;
    BIGNUM* bn = BN_bin2bn(raw, sizeof(raw), nullptr);
    ASN1_INTEGER* serial = X509_get_serialNumber(x);
    BN_to_ASN1_INTEGER(bn, serial);
    BN_free(bn);
}

void set_name_entry(X509_NAME* name, const char* field, const std::string& value) {
    X509_NAME_add_entry_by_txt(name, field, MBSTRING_UTF8,
                               reinterpret_cast<const unsigned char*>(value.data()),
                               static_cast<int>(value.size()), -1, 0);
}

void set_san_dns(X509* x, const std::string& dns_name) {
    GENERAL_NAMES* names = sk_GENERAL_NAME_new_null();
    GENERAL_NAME* gn = GENERAL_NAME_new();
    ASN1_IA5STRING* ia5 = ASN1_IA5STRING_new();
    ASN1_STRING_set(ia5, dns_name.data(), static_cast<int>(dns_name.size()));
    GENERAL_NAME_set0_value(gn, GEN_DNS, ia5);
    sk_GENERAL_NAME_push(names, gn);
    X509_add1_ext_i2d(x, NID_subject_alt_name, names, 0, X509V3_ADD_REPLACE);
    sk_GENERAL_NAME_pop_free(names, GENERAL_NAME_free);
}

std::string wildcard_subnet_subject(const std::string& origin_ip) {
    // "*.a.b.c" from a.b.c.d: the bogus wildcarded-subnet name some
    // interceptors mint.
    std::size_t last_dot = origin_ip.rfind('.');
    if (last_dot == std::string::npos || origin_ip.find(':') != std::string::npos)
        throw ParameterError("wildcard_subnet needs an IPv4 origin address");
    return "*." + origin_ip.substr(0, last_dot);
}

}  // namespace

void Profile::validate() const {
    switch (key_bits) {
        case 512:
        case 1024:
        case 2048:
        case 2432:
        case 4096: break;
        default:
            throw ParameterError("unsupported key size " + std::to_string(key_bits));
    }
    if (subject_mode == SubjectMode::fixed && fixed_subject.empty())
        throw ParameterError("fixed subject mode needs a subject name");
}

std::string_view issuer_mode_name(Profile::IssuerMode m) {
    switch (m) {
        case Profile::IssuerMode::self_signed: return "self_signed";
        case Profile::IssuerMode::injected_root: return "injected_root";
        case Profile::IssuerMode::copy_issuer_name: return "copy_issuer_name";
        case Profile::IssuerMode::null_issuer: return "null_issuer";
    }
    return "?";
}

std::optional<Profile::IssuerMode> issuer_mode_from_name(std::string_view s) {
    if (s == "self_signed") return Profile::IssuerMode::self_signed;
    if (s == "injected_root") return Profile::IssuerMode::injected_root;
    if (s == "copy_issuer_name") return Profile::IssuerMode::copy_issuer_name;
    if (s == "null_issuer") return Profile::IssuerMode::null_issuer;
    return std::nullopt;
}

std::string_view hash_name(Profile::Hash h) {
    switch (h) {
        case Profile::Hash::md5: return "md5";
        case Profile::Hash::sha1: return "sha1";
        case Profile::Hash::sha256: return "sha256";
    }
    return "?";
}

std::optional<Profile::Hash> hash_from_name(std::string_view s) {
    if (s == "md5") return Profile::Hash::md5;
    if (s == "sha1") return Profile::Hash::sha1;
    if (s == "sha256") return Profile::Hash::sha256;
    return std::nullopt;
}

std::string_view subject_mode_name(Profile::SubjectMode m) {
    switch (m) {
        case Profile::SubjectMode::copy: return "copy";
        case Profile::SubjectMode::fixed: return "fixed";
        case Profile::SubjectMode::wildcard_subnet: return "wildcard_subnet";
    }
    return "?";
}

std::optional<Profile::SubjectMode> subject_mode_from_name(std::string_view s) {
    if (s == "copy") return Profile::SubjectMode::copy;
    if (s == "fixed") return Profile::SubjectMode::fixed;
    if (s == "wildcard_subnet") return Profile::SubjectMode::wildcard_subnet;
    return std::nullopt;
}

std::string Profile::describe() const {
    std::string out = std::string(issuer_mode_name(issuer_mode)) + "/" +
                      std::to_string(key_bits) + "/" + std::string(hash_name(hash)) + "/" +
                      std::string(subject_mode_name(subject_mode));
    if (subject_mode == SubjectMode::fixed) out += "(" + fixed_subject + ")";
    if (issuer_org_override) out += " issuer_org=" + *issuer_org_override;
    return out;
}

SigningAuthority make_authority(const std::string& common_name, const std::string& organization) {
    KeyPtr key = generate_rsa(2048);
    CertPtr cert(X509_new());
    X509_set_version(cert.get(), 2);
    set_random_serial(cert.get());
    X509_gmtime_adj(X509_getm_notBefore(cert.get()), -60L * 60 * 24);
    X509_gmtime_adj(X509_getm_notAfter(cert.get()), 60L * 60 * 24 * 3650);
    X509_NAME* name = X509_get_subject_name(cert.get());
    if (!organization.empty()) set_name_entry(name, "O", organization);
    if (!common_name.empty()) set_name_entry(name, "CN", common_name);
    X509_set_issuer_name(cert.get(), name);
    X509_set_pubkey(cert.get(), key.get());

    BASIC_CONSTRAINTS bc{};
    bc.ca = 1;
    X509_add1_ext_i2d(cert.get(), NID_basic_constraints, &bc, 1, X509V3_ADD_REPLACE);

    if (X509_sign(cert.get(), key.get(), EVP_sha256()) == 0) throw_openssl("authority sign failed");
    return {cert_to_pem_text(cert.get()), key_to_pem(key.get())};
}

ForgedIdentity forge_certificate(const Profile& profile, const std::vector<Bytes>& origin_chain,
                                 const std::string& origin_ip,
                                 const std::optional<SigningAuthority>& root) {
    profile.validate();
    if (origin_chain.empty()) throw ParameterError("origin chain is empty");
    CertPtr origin = parse_cert(origin_chain.front(), "origin leaf");

    KeyPtr leaf_key = generate_rsa(profile.key_bits);
    CertPtr leaf(X509_new());
    X509_set_version(leaf.get(), 2);
    set_random_serial(leaf.get());
    // Validity copied from the origin so the substitute looks current.
    X509_set1_notBefore(leaf.get(), X509_get0_notBefore(origin.get()));
    X509_set1_notAfter(leaf.get(), X509_get0_notAfter(origin.get()));
    X509_set_pubkey(leaf.get(), leaf_key.get());

    switch (profile.subject_mode) {
        case Profile::SubjectMode::copy: {
            X509_set_subject_name(leaf.get(), X509_get_subject_name(origin.get()));
            auto* sans = static_cast<GENERAL_NAMES*>(
                X509_get_ext_d2i(origin.get(), NID_subject_alt_name, nullptr, nullptr));
            if (sans != nullptr) {
                X509_add1_ext_i2d(leaf.get(), NID_subject_alt_name, sans, 0, X509V3_ADD_REPLACE);
                GENERAL_NAMES_free(sans);
            }
            break;
        }
        case Profile::SubjectMode::fixed: {
            X509_NAME* name = X509_NAME_new();
            set_name_entry(name, "CN", profile.fixed_subject);
            X509_set_subject_name(leaf.get(), name);
            X509_NAME_free(name);
            set_san_dns(leaf.get(), profile.fixed_subject);
            break;
        }
        case Profile::SubjectMode::wildcard_subnet: {
            std::string subject = wildcard_subnet_subject(origin_ip);
            X509_NAME* name = X509_NAME_new();
            set_name_entry(name, "CN", subject);
            X509_set_subject_name(leaf.get(), name);
            X509_NAME_free(name);
            set_san_dns(leaf.get(), subject);
            break;
        }
    }

    ForgedIdentity out;
    const EVP_MD* md = digest_for(profile.hash);

    switch (profile.issuer_mode) {
        case Profile::IssuerMode::self_signed: {
            if (profile.issuer_org_override) {
                X509_NAME* issuer = X509_NAME_new();
                set_name_entry(issuer, "O", *profile.issuer_org_override);
                X509_set_issuer_name(leaf.get(), issuer);
                X509_NAME_free(issuer);
            } else {
                X509_set_issuer_name(leaf.get(), X509_get_subject_name(leaf.get()));
            }
            if (X509_sign(leaf.get(), leaf_key.get(), md) == 0) throw_openssl("leaf sign failed");
            out.chain.push_back(cert_to_der(leaf.get()));
            break;
        }
        case Profile::IssuerMode::injected_root: {
            SigningAuthority authority =
                root ? *root
                     : make_authority("Local Interception Root",
                                      profile.issuer_org_override.value_or(
                                          "Local Interception Authority"));
            CertPtr root_cert = cert_from_pem(authority.cert_pem);
            KeyPtr root_key = key_from_pem(authority.key_pem);
            X509_set_issuer_name(leaf.get(), X509_get_subject_name(root_cert.get()));
            if (X509_sign(leaf.get(), root_key.get(), md) == 0) throw_openssl("leaf sign failed");
            out.chain.push_back(cert_to_der(leaf.get()));
            out.chain.push_back(cert_to_der(root_cert.get()));
            break;
        }
        case Profile::IssuerMode::copy_issuer_name: {
            // The genuine authority's name without its key: the signature is
            // the leaf's own.
            X509_set_issuer_name(leaf.get(), X509_get_issuer_name(origin.get()));
            if (profile.issuer_org_override) {
                X509_NAME* issuer = X509_NAME_new();
                set_name_entry(issuer, "O", *profile.issuer_org_override);
                X509_set_issuer_name(leaf.get(), issuer);
                X509_NAME_free(issuer);
            }
            if (X509_sign(leaf.get(), leaf_key.get(), md) == 0) throw_openssl("leaf sign failed");
            out.chain.push_back(cert_to_der(leaf.get()));
            break;
        }
        case Profile::IssuerMode::null_issuer: {
            X509_NAME* issuer = X509_NAME_new();  // zero RDNs
            X509_set_issuer_name(leaf.get(), issuer);
            X509_NAME_free(issuer);
            if (X509_sign(leaf.get(), leaf_key.get(), md) == 0) throw_openssl("leaf sign failed");
            out.chain.push_back(cert_to_der(leaf.get()));
            break;
        }
    }

    out.leaf_key_pem = key_to_pem(leaf_key.get());
    return out;
}

Forge::Forge(Profile profile, std::optional<SigningAuthority> root)
    : profile_(std::move(profile)), root_(std::move(root)) {
    profile_.validate();
    if (profile_.issuer_mode == Profile::IssuerMode::injected_root && !root_) {
        root_ = make_authority("Local Interception Root",
                               profile_.issuer_org_override.value_or(
                                   "Local Interception Authority"));
    }
}

ForgedIdentity Forge::forge_for_origin(const std::vector<Bytes>& origin_chain,
                                       const std::string& origin_ip) {
    if (origin_chain.empty()) throw ParameterError("origin chain is empty");
    std::string key = hex(sha256(origin_chain.front()));
    if (profile_.subject_mode == Profile::SubjectMode::wildcard_subnet) key += "|" + origin_ip;
    std::lock_guard lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    ForgedIdentity identity = forge_certificate(profile_, origin_chain, origin_ip, root_);
    cache_[key] = identity;
    return identity;
}

std::string Forge::root_pem() const {
    if (profile_.issuer_mode != Profile::IssuerMode::injected_root || !root_) return {};
    return root_->cert_pem;
}

InterceptProxy::InterceptProxy(Options options) : options_(std::move(options)) {
    options_.profile.validate();
    if (options_.relay &&
        options_.profile.issuer_mode != Profile::IssuerMode::self_signed &&
        options_.profile.issuer_mode != Profile::IssuerMode::injected_root)
        throw ParameterError("relay only works for self_signed or injected_root substitutes");
    forge_ = std::make_unique<Forge>(options_.profile, options_.root);

    tls::FlightServer::Options server_options;
    server_options.io_timeout_ms = options_.timeout_ms;
    server_options.policy_xml = options_.policy_xml;
    server_options.provider = [this](const tls::ParsedClientHello& hello,
                                     const net::Socket&) -> std::vector<Bytes> {
        try {
            std::pair<std::vector<Bytes>, std::string> origin;
            {
                std::lock_guard lock(origin_mutex_);
                if (origin_) {
                    origin = *origin_;
                } else {
                    tls::ProbeTarget upstream{options_.upstream_host, options_.upstream_port,
                                              hello.sni};
                    tls::ProbeOptions probe_options;
                    probe_options.connect_timeout_ms = options_.timeout_ms;
                    probe_options.read_timeout_ms = options_.timeout_ms;
                    tls::ProbeOutcome outcome = tls::probe(upstream, probe_options);
                    if (!outcome.ok()) {
                        ++forge_failures_;
                        return {};
                    }
                    origin = {outcome.success->chain.der_blobs, outcome.success->peer_address};
                    origin_ = origin;
                }
            }
            return forge_->forge_for_origin(origin.first, origin.second).chain;
        } catch (const std::exception&) {
            ++forge_failures_;
            return {};
        }
    };
    if (options_.relay) {
        server_options.post_flight = [this](net::Socket& client, const Bytes& buffered) {
            auto upstream =
                net::connect_to(options_.upstream_host, options_.upstream_port, options_.timeout_ms);
            if (!upstream.socket) return;
            if (!buffered.empty())
                upstream.socket->write_all(buffered, net::Deadline::in_ms(options_.timeout_ms));
            // Blind byte pump until either side closes.
            struct pollfd fds[2] = {{client.fd(), POLLIN, 0}, {upstream.socket->fd(), POLLIN, 0}};
            std::uint8_t buf[8192];
            net::Deadline dl = net::Deadline::in_ms(options_.timeout_ms);
            while (dl.remaining_ms() > 0) {
                int rc = ::poll(fds, 2, dl.remaining_ms());
                if (rc <= 0) break;
                bool progressed = false;
                if (fds[0].revents & (POLLIN | POLLHUP)) {
                    auto r = client.read_some(buf, sizeof(buf), net::Deadline::in_ms(50));
                    if (r.status != net::IoStatus::ok) break;
                    if (!upstream.socket->write_all(buf, r.n, dl)) break;
                    progressed = true;
                }
                if (fds[1].revents & (POLLIN | POLLHUP)) {
                    auto r = upstream.socket->read_some(buf, sizeof(buf), net::Deadline::in_ms(50));
                    if (r.status != net::IoStatus::ok) break;
                    if (!client.write_all(buf, r.n, dl)) break;
                    progressed = true;
                }
                if (!progressed) break;
            }
        };
    }
    server_ = std::make_unique<tls::FlightServer>(std::move(server_options));
}

InterceptProxy::~InterceptProxy() { stop(); }

bool InterceptProxy::start(std::uint16_t port) { return server_->start(port); }

void InterceptProxy::stop() {
    if (server_) server_->stop();
}

std::uint16_t InterceptProxy::port() const { return server_->port(); }

std::size_t InterceptProxy::connections() const { return server_->connections(); }

std::size_t InterceptProxy::forge_failures() const { return forge_failures_.load(); }

}  // namespace proxyscope::forge
