#include "proxyscope/campaign.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include <fstream>
#include <mutex>
#include <thread>

#include "proxyscope/errors.hpp"
#include "proxyscope/x509.hpp"

namespace proxyscope::campaign {

using nlohmann::json;

namespace {

struct PostResult {
    bool delivered = false;
    bool retryable_endpoint = false;  // endpoint unreachable or overloaded
    std::optional<std::uint64_t> record_id;
    std::string verdict;
};

PostResult post_report(const std::string& endpoint, const std::string& body) {
    PostResult out;
    httplib::Client client(endpoint);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(10, 0);
    auto res = client.Post("/report", body, "application/json");
    if (!res) {
        out.retryable_endpoint = true;
        return out;
    }
    if (res->status == 503) {
        out.retryable_endpoint = true;
        return out;
    }
    if (res->status == 200) {
        json j = json::parse(res->body, nullptr, false);
        if (!j.is_discarded()) {
            if (j.contains("id")) out.record_id = j["id"].get<std::uint64_t>();
            if (j.contains("verdict")) out.verdict = j["verdict"].get<std::string>();
        }
        out.delivered = true;
    }
    // 4xx is a final answer: delivered=false but nothing to spool.
    return out;
}

std::string report_body(const tls::ProbeTarget& target, const tls::ProbeSuccess& success) {
    json j;
    j["target_host"] = target.host;
    j["target_port"] = target.port;
    j["chain_pem"] = x509::encode_concatenated_pem(success.chain.der_blobs);
    return j.dump();
}

class Spool {
  public:
    explicit Spool(std::optional<std::filesystem::path> path) : path_(std::move(path)) {}

    bool enabled() const { return path_.has_value(); }
    void add(const std::string& line) {
        std::lock_guard lock(mutex_);
        std::ofstream out(*path_, std::ios::binary | std::ios::app);
        if (!out) throw IoError("cannot append to spool " + path_->string());
        out << line << '\n';
    }

  private:
    std::optional<std::filesystem::path> path_;
    std::mutex mutex_;
};

void run_one(const tls::ProbeTarget& target, const Options& options, Spool& spool,
             TargetResult& result) {
    result.target = target;
    tls::ProbeOptions probe_options = options.probe_options;
    probe_options.hello = tls::ClientHelloParams::fresh();
    result.outcome = tls::probe(target, probe_options);
    if (!result.outcome.ok() || options.endpoint.empty()) return;

    std::string body = report_body(target, *result.outcome.success);
    PostResult post = post_report(options.endpoint, body);
    if (post.delivered) {
        result.report = ReportState::sent;
        result.record_id = post.record_id;
        result.verdict = post.verdict;
    } else if (post.retryable_endpoint && spool.enabled()) {
        spool.add(body);
        result.report = ReportState::spooled;
    }
}

}  // namespace

Summary run(const std::vector<tls::ProbeTarget>& targets, const Options& options) {
    if (targets.empty()) throw ParameterError("campaign needs at least one target");
    if (options.concurrency == 0) throw ParameterError("campaign concurrency must be positive");

    Summary summary;
    summary.results.resize(targets.size());
    Spool spool(options.spool_path);

    // The anchor must finish before anything else launches: its outcome
    // gates whether the rest of the run is worth the noise.
    run_one(targets[0], options, spool, summary.results[0]);

    std::size_t next = 1;
    std::mutex next_mutex;
    std::size_t workers = std::min(options.concurrency, targets.size() - 1);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i;
                {
                    std::lock_guard lock(next_mutex);
                    if (next >= targets.size()) return;
                    i = next++;
                }
                run_one(targets[i], options, spool, summary.results[i]);
            }
        });
    }
    for (auto& t : pool) t.join();

    for (const TargetResult& r : summary.results) {
        if (r.outcome.ok())
            ++summary.probed_ok;
        else
            ++summary.probe_failures;
        if (r.report == ReportState::sent) ++summary.reports_sent;
        if (r.report == ReportState::spooled) ++summary.reports_spooled;
    }
    return summary;
}

std::size_t replay_spool(const std::filesystem::path& spool_path, const std::string& endpoint) {
    std::ifstream in(spool_path, std::ios::binary);
    if (!in) return 0;
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!trim_ascii(line).empty()) lines.push_back(line);
    in.close();

    std::vector<std::string> kept;
    std::size_t drained = 0;
    for (const std::string& body : lines) {
        PostResult post = post_report(endpoint, body);
        if (post.delivered)
            ++drained;
        else if (post.retryable_endpoint)
            kept.push_back(body);
        else
            ++drained;  // final rejection; replaying again cannot help
    }
    std::filesystem::path tmp = spool_path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        for (const std::string& body : kept) out << body << '\n';
    }
    std::filesystem::rename(tmp, spool_path);
    return drained;
}

}  // namespace proxyscope::campaign
