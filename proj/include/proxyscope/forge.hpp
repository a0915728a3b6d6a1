#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "proxyscope/bytes.hpp"
#include "proxyscope/errors.hpp"
#include "proxyscope/tls_server.hpp"

namespace proxyscope::forge {

struct Profile {
    enum class IssuerMode { self_signed, injected_root, copy_issuer_name, null_issuer };
    enum class Hash { md5, sha1, sha256 };
    enum class SubjectMode { copy, fixed, wildcard_subnet };

    IssuerMode issuer_mode = IssuerMode::self_signed;
    int key_bits = 2048;  // 512, 1024, 2048, 2432 or 4096
    Hash hash = Hash::sha256;
    SubjectMode subject_mode = SubjectMode::copy;
    std::string fixed_subject;  // subject_mode == fixed
    std::optional<std::string> issuer_org_override;

    void validate() const;  // throws ParameterError
    std::string describe() const;
};

std::string_view issuer_mode_name(Profile::IssuerMode m);
std::optional<Profile::IssuerMode> issuer_mode_from_name(std::string_view s);
std::string_view hash_name(Profile::Hash h);
std::optional<Profile::Hash> hash_from_name(std::string_view s);
std::string_view subject_mode_name(Profile::SubjectMode m);
std::optional<Profile::SubjectMode> subject_mode_from_name(std::string_view s);

struct ForgedIdentity {
    std::vector<Bytes> chain;  // leaf first; injected_root appends the root
    std::string leaf_key_pem;
};

struct SigningAuthority {
    std::string cert_pem;
    std::string key_pem;
};

// Deterministic per origin leaf within one instance: repeated requests for
// the same origin return byte-identical substitutes.
class Forge {
  public:
    explicit Forge(Profile profile,
                   std::optional<SigningAuthority> root = std::nullopt);

    const Profile& profile() const { return profile_; }
    // origin_ip feeds wildcard_subnet subjects; may be empty otherwise.
    ForgedIdentity forge_for_origin(const std::vector<Bytes>& origin_chain,
                                    const std::string& origin_ip);
    std::string root_pem() const;  // empty unless issuer_mode == injected_root

  private:
    Profile profile_;
    std::optional<SigningAuthority> root_;
    std::mutex mutex_;
    std::map<std::string, ForgedIdentity> cache_;  // origin leaf fp -> identity
};

// One-shot forge without caching.
ForgedIdentity forge_certificate(const Profile& profile, const std::vector<Bytes>& origin_chain,
                                 const std::string& origin_ip,
                                 const std::optional<SigningAuthority>& root = std::nullopt);

// Generates a self-signed authority (issuer_org_override names it).
SigningAuthority make_authority(const std::string& common_name, const std::string& organization);

// TCP listener that answers TLS probes with substitutes forged from the
// upstream origin's chain.
class InterceptProxy {
  public:
    struct Options {
        std::string upstream_host;
        std::uint16_t upstream_port = 443;
        Profile profile;
        std::optional<SigningAuthority> root;
        bool relay = false;  // only self_signed / injected_root keep a relay
        int timeout_ms = 5000;
        std::optional<std::string> policy_xml;
    };

    explicit InterceptProxy(Options options);  // throws ParameterError
    ~InterceptProxy();

    bool start(std::uint16_t port = 0);
    void stop();
    std::uint16_t port() const;
    std::size_t connections() const;
    std::size_t forge_failures() const;
    std::string root_pem() const { return forge_->root_pem(); }

  private:
    Options options_;
    std::unique_ptr<Forge> forge_;
    std::unique_ptr<tls::FlightServer> server_;
    std::mutex origin_mutex_;
    std::optional<std::pair<std::vector<Bytes>, std::string>> origin_;  // chain, ip
    std::atomic<std::size_t> forge_failures_{0};
};

}  // namespace proxyscope::forge
