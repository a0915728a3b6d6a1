#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "proxyscope/classify.hpp"
#include "proxyscope/errors.hpp"

namespace proxyscope::store {

enum class Verdict { match, mismatch };

std::string_view verdict_name(Verdict v);
std::optional<Verdict> verdict_from_name(std::string_view s);

struct TargetKey {
    std::string host;
    std::uint16_t port = 443;

    bool operator==(const TargetKey&) const = default;
    bool operator<(const TargetKey& o) const {
        return host != o.host ? host < o.host : port < o.port;
    }
    std::string label() const { return host + ":" + std::to_string(port); }
};

struct MeasurementRecord {
    std::uint64_t id = 0;
    std::string received_at;  // ISO-8601 UTC
    std::string client_ip;
    std::string country;  // "??" when unlocatable
    TargetKey target;
    std::string observed_leaf_fp;             // sha256 hex of exact DER
    std::string authoritative_leaf_fp;        // current authoritative leaf at ingest
    std::vector<std::string> valid_leaf_fps;  // full rotation-tolerant set at ingest
    Verdict verdict = Verdict::match;
    std::string chain_ref;  // blob id of the canonical PEM
    // Set on mismatch only:
    std::optional<std::string> category;    // category id
    std::optional<std::string> issuer_org;  // null issuer stays nullopt
    bool issuer_recorded = false;           // true when verdict == mismatch
    std::optional<classify::NegligenceReport> negligence;
};

std::string record_to_json_line(const MeasurementRecord& r);
MeasurementRecord record_from_json_line(const std::string& line);  // throws ParseError

struct RecordFilter {
    std::optional<std::string> country;
    std::optional<std::string> host;
    std::optional<std::uint16_t> port;
    std::optional<Verdict> verdict;
    std::optional<std::string> category;
    std::optional<std::string> from_iso;  // inclusive received_at bounds
    std::optional<std::string> to_iso;

    bool matches(const MeasurementRecord& r) const;
};

// Append-only measurement log plus a content-addressed blob directory for
// full chains. Layout under dir: records.jsonl, rejects.jsonl, blobs/…
class RecordStore {
  public:
    explicit RecordStore(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }
    std::uint64_t next_id();

    // Returns the blob id (sha256 hex of the content). Duplicate content is
    // stored once.
    std::string put_blob(const std::string& canonical_pem);
    std::optional<std::string> get_blob(const std::string& blob_id) const;

    void append(const MeasurementRecord& record);
    void append_reject(const std::string& reason, const std::string& detail,
                       const std::string& client_ip);

    std::vector<MeasurementRecord> scan() const;
    std::vector<MeasurementRecord> query(const RecordFilter& filter) const;
    std::size_t reject_count() const;

  private:
    std::filesystem::path dir_;
    std::filesystem::path records_path_;
    std::filesystem::path rejects_path_;
    std::filesystem::path blob_dir_;
    mutable std::mutex mutex_;
    std::uint64_t last_id_ = 0;
};

struct ReplayResult {
    std::size_t total = 0;
    std::vector<std::uint64_t> divergent_ids;
    bool deterministic() const { return divergent_ids.empty(); }
};

// Recomputes every verdict from the fingerprint data stored in the records
// themselves and reports any divergence from the stored verdicts.
ReplayResult replay_verdicts(const std::vector<MeasurementRecord>& records);

}  // namespace proxyscope::store
