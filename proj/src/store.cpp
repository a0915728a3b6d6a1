#include "proxyscope/store.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "proxyscope/bytes.hpp"

namespace proxyscope::store {

using nlohmann::json;

std::string_view verdict_name(Verdict v) {
    return v == Verdict::match ? "match" : "mismatch";
}

std::optional<Verdict> verdict_from_name(std::string_view s) {
    if (s == "match") return Verdict::match;
    if (s == "mismatch") return Verdict::mismatch;
    return std::nullopt;
}

namespace {

json negligence_to_json(const classify::NegligenceReport& n) {
    json out = json::object();
    if (n.weak_key)
        out["weak_key"] = {{"observed_bits", n.weak_key->observed_bits},
                           {"authoritative_bits", n.weak_key->authoritative_bits}};
    if (n.weak_hash) out["weak_hash"] = *n.weak_hash;
    if (n.ca_masquerade) out["ca_masquerade"] = *n.ca_masquerade;
    if (n.subject_mismatch)
        out["subject_mismatch"] = {{"expected", n.subject_mismatch->expected},
                                   {"observed_names", n.subject_mismatch->observed_names}};
    out["null_issuer"] = n.null_issuer;
    if (!n.notes.empty()) out["notes"] = n.notes;
    return out;
}

classify::NegligenceReport negligence_from_json(const json& j) {
    classify::NegligenceReport n;
    if (j.contains("weak_key"))
        n.weak_key = classify::WeakKeyFinding{j["weak_key"]["observed_bits"].get<int>(),
                                              j["weak_key"]["authoritative_bits"].get<int>()};
    if (j.contains("weak_hash")) n.weak_hash = j["weak_hash"].get<std::string>();
    if (j.contains("ca_masquerade")) n.ca_masquerade = j["ca_masquerade"].get<std::string>();
    if (j.contains("subject_mismatch"))
        n.subject_mismatch = classify::SubjectMismatchFinding{
            j["subject_mismatch"]["expected"].get<std::string>(),
            j["subject_mismatch"]["observed_names"].get<std::vector<std::string>>()};
    n.null_issuer = j.value("null_issuer", false);
    if (j.contains("notes")) n.notes = j["notes"].get<std::vector<std::string>>();
    return n;
}

}  // namespace

std::string record_to_json_line(const MeasurementRecord& r) {
    json j;
    j["id"] = r.id;
    j["received_at"] = r.received_at;
    j["client_ip"] = r.client_ip;
    j["country"] = r.country;
    j["target"] = {{"host", r.target.host}, {"port", r.target.port}};
    j["observed_leaf_fp"] = r.observed_leaf_fp;
    j["authoritative_leaf_fp"] = r.authoritative_leaf_fp;
    j["valid_leaf_fps"] = r.valid_leaf_fps;
    j["verdict"] = std::string(verdict_name(r.verdict));
    j["chain_ref"] = r.chain_ref;
    if (r.verdict == Verdict::mismatch) {
        j["category"] = r.category.value_or("unknown");
        if (r.issuer_org)
            j["issuer_org"] = *r.issuer_org;
        else
            j["issuer_org"] = nullptr;
        if (r.negligence) j["negligence"] = negligence_to_json(*r.negligence);
    }
    return j.dump();
}

MeasurementRecord record_from_json_line(const std::string& line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("record line is not JSON", 0);
    try {
        MeasurementRecord r;
        r.id = j.at("id").get<std::uint64_t>();
        r.received_at = j.at("received_at").get<std::string>();
        r.client_ip = j.at("client_ip").get<std::string>();
        r.country = j.at("country").get<std::string>();
        r.target.host = j.at("target").at("host").get<std::string>();
        r.target.port = j.at("target").at("port").get<std::uint16_t>();
        r.observed_leaf_fp = j.at("observed_leaf_fp").get<std::string>();
        r.authoritative_leaf_fp = j.at("authoritative_leaf_fp").get<std::string>();
        r.valid_leaf_fps = j.at("valid_leaf_fps").get<std::vector<std::string>>();
        auto verdict = verdict_from_name(j.at("verdict").get<std::string>());
        if (!verdict) throw ParseError("unknown verdict", 0);
        r.verdict = *verdict;
        r.chain_ref = j.at("chain_ref").get<std::string>();
        if (r.verdict == Verdict::mismatch) {
            r.issuer_recorded = true;
            if (j.contains("category")) r.category = j["category"].get<std::string>();
            if (j.contains("issuer_org") && !j["issuer_org"].is_null())
                r.issuer_org = j["issuer_org"].get<std::string>();
            if (j.contains("negligence")) r.negligence = negligence_from_json(j["negligence"]);
        }
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("record line malformed: ") + e.what(), 0);
    }
}

bool RecordFilter::matches(const MeasurementRecord& r) const {
    if (country && r.country != *country) return false;
    if (host && r.target.host != *host) return false;
    if (port && r.target.port != *port) return false;
    if (verdict && r.verdict != *verdict) return false;
    if (category && r.category.value_or("") != *category) return false;
    // ISO-8601 UTC strings order lexicographically.
    if (from_iso && r.received_at < *from_iso) return false;
    if (to_iso && r.received_at > *to_iso) return false;
    return true;
}

RecordStore::RecordStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    records_path_ = dir_ / "records.jsonl";
    rejects_path_ = dir_ / "rejects.jsonl";
    blob_dir_ = dir_ / "blobs";
    std::filesystem::create_directories(blob_dir_);
    if (!std::filesystem::exists(records_path_)) {
        std::ofstream touch(records_path_, std::ios::app);
        if (!touch) throw IoError("cannot create " + records_path_.string());
    }
    for (const MeasurementRecord& r : scan()) last_id_ = std::max(last_id_, r.id);
}

std::uint64_t RecordStore::next_id() {
    std::lock_guard lock(mutex_);
    return last_id_ + 1;
}

std::string RecordStore::put_blob(const std::string& canonical_pem) {
    std::string id = hex(sha256(canonical_pem));
    std::filesystem::path final_path = blob_dir_ / (id + ".pem");
    std::lock_guard lock(mutex_);
    if (std::filesystem::exists(final_path)) return id;
    std::filesystem::path tmp = blob_dir_ / (id + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write blob " + tmp.string());
        out << canonical_pem;
    }
    std::filesystem::rename(tmp, final_path);
    return id;
}

std::optional<std::string> RecordStore::get_blob(const std::string& blob_id) const {
    std::ifstream in(blob_dir_ / (blob_id + ".pem"), std::ios::binary);
    if (!in) return std::nullopt;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

void RecordStore::append(const MeasurementRecord& record) {
    std::string line = record_to_json_line(record);
    std::lock_guard lock(mutex_);
    std::ofstream out(records_path_, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to " + records_path_.string());
    out << line << '\n';
    out.flush();
    last_id_ = std::max(last_id_, record.id);
}

void RecordStore::append_reject(const std::string& reason, const std::string& detail,
                                const std::string& client_ip) {
    nlohmann::json j;
    j["reason"] = reason;
    j["detail"] = detail;
    j["client_ip"] = client_ip;
    std::lock_guard lock(mutex_);
    std::ofstream out(rejects_path_, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to " + rejects_path_.string());
    out << j.dump() << '\n';
}

std::vector<MeasurementRecord> RecordStore::scan() const {
    std::lock_guard lock(mutex_);
    std::vector<MeasurementRecord> out;
    std::ifstream in(records_path_, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
        if (trim_ascii(line).empty()) continue;
        out.push_back(record_from_json_line(line));
    }
    return out;
}

std::vector<MeasurementRecord> RecordStore::query(const RecordFilter& filter) const {
    std::vector<MeasurementRecord> all = scan();
    std::vector<MeasurementRecord> out;
    for (auto& r : all)
        if (filter.matches(r)) out.push_back(std::move(r));
    std::stable_sort(out.begin(), out.end(),
                     [](const MeasurementRecord& a, const MeasurementRecord& b) {
                         return a.received_at < b.received_at;
                     });
    return out;
}

std::size_t RecordStore::reject_count() const {
    std::lock_guard lock(mutex_);
    std::ifstream in(rejects_path_, std::ios::binary);
    if (!in) return 0;
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!trim_ascii(line).empty()) ++n;
    return n;
}

ReplayResult replay_verdicts(const std::vector<MeasurementRecord>& records) {
    ReplayResult out;
    out.total = records.size();
    for (const MeasurementRecord& r : records) {
        bool valid = std::find(r.valid_leaf_fps.begin(), r.valid_leaf_fps.end(),
                               r.observed_leaf_fp) != r.valid_leaf_fps.end();
        Verdict recomputed = valid ? Verdict::match : Verdict::mismatch;
        if (recomputed != r.verdict) out.divergent_ids.push_back(r.id);
    }
    return out;
}

}  // namespace proxyscope::store
