#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "proxyscope/classify.hpp"
#include "proxyscope/geo.hpp"
#include "proxyscope/store.hpp"
#include "proxyscope/tls.hpp"

namespace proxyscope::service {

// Re-probes its own view of each target and keeps a rotation-tolerant set of
// fingerprints that count as genuine.
class AuthoritativeCache {
  public:
    struct Entry {
        std::vector<Bytes> chain;  // latest authoritative chain
        std::vector<std::string> valid_fps;
        std::chrono::steady_clock::time_point fetched{};
        bool available = false;
    };

    using ProbeFn = std::function<tls::ProbeOutcome(const store::TargetKey&)>;
    using Clock = std::function<std::chrono::steady_clock::time_point()>;

    AuthoritativeCache(ProbeFn probe_fn, int ttl_s, int rotation_grace_s,
                       Clock clock = [] { return std::chrono::steady_clock::now(); });

    // Fresh-enough entry for the target; refreshes when stale. Throws
    // RetryableError when no authoritative view is obtainable.
    Entry get(const store::TargetKey& target);
    void invalidate(const store::TargetKey& target);

  private:
    struct Slot {
        Entry entry;
        std::map<std::string, std::chrono::steady_clock::time_point> fp_last_seen;
    };
    void refresh(const store::TargetKey& target, Slot& slot);

    ProbeFn probe_fn_;
    std::chrono::seconds ttl_;
    std::chrono::seconds grace_;
    Clock clock_;
    std::mutex mutex_;
    std::map<store::TargetKey, Slot> slots_;
};

struct ServiceConfig {
    std::vector<store::TargetKey> targets;
    std::filesystem::path store_dir;
    std::optional<std::filesystem::path> geo_csv;
    std::optional<std::filesystem::path> rules_file;
    std::optional<std::filesystem::path> ca_store_pem;
    int cache_ttl_s = 3600;
    int rotation_grace_s = 86400;
    tls::ProbeOptions probe_options;
    std::optional<std::string> trusted_proxy;  // source allowed to set X-Forwarded-For
};

// Verdict pipeline shared by the HTTP layer and the library callers.
class ReportService {
  public:
    explicit ReportService(ServiceConfig config,
                           AuthoritativeCache::ProbeFn probe_override = nullptr);

    // Throws UnknownTargetError (target not measured here), ParseError /
    // EmptyChainError (payload undecodable), RetryableError (no
    // authoritative view; the client should retry later).
    store::MeasurementRecord ingest(const std::string& client_ip,
                                    const store::TargetKey& target,
                                    const std::string& chain_pem);

    store::RecordStore& record_store() { return *store_; }
    const ServiceConfig& config() const { return config_; }
    const classify::RuleSet& rules() const { return *rules_; }

  private:
    ServiceConfig config_;
    std::unique_ptr<store::RecordStore> store_;
    std::optional<geo::GeoDb> geo_;
    const classify::RuleSet* rules_;
    classify::RuleSet owned_rules_;
    classify::TrustStore genuine_;
    std::unique_ptr<AuthoritativeCache> cache_;
    std::mutex ingest_mutex_;
};

class HttpServer {
  public:
    HttpServer(ReportService& service, std::string bind_address = "127.0.0.1");
    ~HttpServer();

    bool start(std::uint16_t port);  // port 0 picks a free one
    void stop();
    std::uint16_t port() const { return port_; }

  private:
    struct Impl;
    ReportService& service_;
    std::string bind_address_;
    std::uint16_t port_ = 0;
    std::unique_ptr<Impl> impl_;
};

}  // namespace proxyscope::service
