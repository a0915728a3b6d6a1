#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "proxyscope/tls.hpp"

namespace proxyscope::campaign {

enum class ReportState { sent, spooled, not_attempted };

struct TargetResult {
    tls::ProbeTarget target;
    tls::ProbeOutcome outcome;
    ReportState report = ReportState::not_attempted;
    std::optional<std::uint64_t> record_id;
    std::string verdict;
};

struct Options {
    std::size_t concurrency = 32;
    std::string endpoint;  // e.g. "http://127.0.0.1:8617"; empty = no reporting
    std::optional<std::filesystem::path> spool_path;
    tls::ProbeOptions probe_options;
};

struct Summary {
    std::vector<TargetResult> results;  // campaign order, anchor first
    std::size_t probed_ok = 0;
    std::size_t probe_failures = 0;
    std::size_t reports_sent = 0;
    std::size_t reports_spooled = 0;
};

// Probes the anchor (first target) to completion before any other target
// starts, then fans the rest out over a bounded pool. Successful probes post
// chains to the endpoint; unreachable endpoints spool to disk.
Summary run(const std::vector<tls::ProbeTarget>& targets, const Options& options);

// POSTs every spooled line to the endpoint; lines that still fail stay in
// the file. Returns the number drained.
std::size_t replay_spool(const std::filesystem::path& spool_path, const std::string& endpoint);

}  // namespace proxyscope::campaign
