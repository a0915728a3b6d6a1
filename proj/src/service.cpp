#include "proxyscope/service.hpp"

#include <algorithm>

#include "proxyscope/x509.hpp"

namespace proxyscope::service {

AuthoritativeCache::AuthoritativeCache(ProbeFn probe_fn, int ttl_s, int rotation_grace_s,
                                       Clock clock)
    : probe_fn_(std::move(probe_fn)),
      ttl_(ttl_s),
      grace_(rotation_grace_s),
      clock_(std::move(clock)) {}

void AuthoritativeCache::refresh(const store::TargetKey& target, Slot& slot) {
    auto now = clock_();
    tls::ProbeOutcome outcome = probe_fn_(target);
    if (outcome.ok()) {
        slot.entry.chain = outcome.success->chain.der_blobs;
        std::string fp = hex(sha256(slot.entry.chain.front()));
        slot.fp_last_seen[fp] = now;
        // Fingerprints seen within the grace window stay valid so key
        // rotation does not smear honest clients as intercepted.
        slot.entry.valid_fps.clear();
        for (auto it = slot.fp_last_seen.begin(); it != slot.fp_last_seen.end();) {
            if (now - it->second > grace_) {
                it = slot.fp_last_seen.erase(it);
            } else {
                slot.entry.valid_fps.push_back(it->first);
                ++it;
            }
        }
        std::sort(slot.entry.valid_fps.begin(), slot.entry.valid_fps.end());
        // The current fingerprint leads; the rest are rotation grace.
        auto cur = std::find(slot.entry.valid_fps.begin(), slot.entry.valid_fps.end(), fp);
        std::rotate(slot.entry.valid_fps.begin(), cur, cur + 1);
        slot.entry.fetched = now;
        slot.entry.available = true;
        return;
    }
    // Keep serving a stale-but-in-ttl view; beyond ttl the entry is dead.
    if (slot.entry.available && now - slot.entry.fetched <= ttl_) return;
    slot.entry.available = false;
}

AuthoritativeCache::Entry AuthoritativeCache::get(const store::TargetKey& target) {
    std::lock_guard lock(mutex_);
    Slot& slot = slots_[target];
    auto now = clock_();
    bool stale = !slot.entry.available || now - slot.entry.fetched > ttl_;
    if (stale) refresh(target, slot);
    if (!slot.entry.available)
        throw RetryableError("no authoritative view of " + target.label());
    return slot.entry;
}

void AuthoritativeCache::invalidate(const store::TargetKey& target) {
    std::lock_guard lock(mutex_);
    slots_.erase(target);
}

ReportService::ReportService(ServiceConfig config, AuthoritativeCache::ProbeFn probe_override)
    : config_(std::move(config)) {
    store_ = std::make_unique<store::RecordStore>(config_.store_dir);
    if (config_.geo_csv) geo_ = geo::GeoDb::load_csv(*config_.geo_csv);
    if (config_.rules_file) {
        owned_rules_ = classify::RuleSet::load_file(*config_.rules_file);
        rules_ = &owned_rules_;
    } else {
        rules_ = &classify::RuleSet::builtin();
    }
    if (config_.ca_store_pem) genuine_ = classify::TrustStore::load_pem_file(*config_.ca_store_pem);

    AuthoritativeCache::ProbeFn probe_fn = std::move(probe_override);
    if (!probe_fn) {
        tls::ProbeOptions options = config_.probe_options;
        probe_fn = [options](const store::TargetKey& t) {
            tls::ProbeTarget target{t.host, t.port, std::nullopt};
            tls::ProbeOptions fresh = options;
            fresh.hello = tls::ClientHelloParams::fresh();
            return tls::probe(target, fresh);
        };
    }
    cache_ = std::make_unique<AuthoritativeCache>(std::move(probe_fn), config_.cache_ttl_s,
                                                  config_.rotation_grace_s);
}

store::MeasurementRecord ReportService::ingest(const std::string& client_ip,
                                               const store::TargetKey& target,
                                               const std::string& chain_pem) {
    bool known = std::find(config_.targets.begin(), config_.targets.end(), target) !=
                 config_.targets.end();
    if (!known) {
        store_->append_reject("unknown_target", target.label(), client_ip);
        throw UnknownTargetError("target " + target.label() + " is not measured here");
    }

    std::vector<Bytes> observed;
    try {
        observed = x509::decode_concatenated_pem(chain_pem);
    } catch (const EmptyChainError&) {
        store_->append_reject("empty_chain", target.label(), client_ip);
        throw;
    } catch (const ParseError& e) {
        store_->append_reject("undecodable", e.what(), client_ip);
        throw;
    }

    // Never guess: without an authoritative view there is no verdict.
    AuthoritativeCache::Entry entry = cache_->get(target);

    store::MeasurementRecord record;
    record.target = target;
    record.client_ip = client_ip;
    record.received_at = x509::iso8601_utc(std::chrono::time_point_cast<std::chrono::seconds>(
        std::chrono::system_clock::now()));
    record.country = "??";
    if (geo_) {
        try {
            record.country = geo_->lookup(client_ip);
        } catch (const ParameterError&) {
            record.country = "??";
        }
    }
    record.observed_leaf_fp = hex(sha256(observed.front()));
    record.authoritative_leaf_fp = hex(sha256(entry.chain.front()));
    record.valid_leaf_fps = entry.valid_fps;
    bool valid = std::find(entry.valid_fps.begin(), entry.valid_fps.end(),
                           record.observed_leaf_fp) != entry.valid_fps.end();
    record.verdict = valid ? store::Verdict::match : store::Verdict::mismatch;
    record.chain_ref = store_->put_blob(x509::encode_concatenated_pem(observed));

    if (record.verdict == store::Verdict::mismatch) {
        record.issuer_recorded = true;
        try {
            x509::CertificateSummary leaf = x509::parse_der(observed.front());
            x509::CertificateSummary authoritative = x509::parse_der(entry.chain.front());
            record.issuer_org = leaf.issuer_org;
            record.category =
                std::string(classify::category_id(classify::classify(leaf, *rules_).category));
            record.negligence = classify::detect_negligence(leaf, observed.front(), authoritative,
                                                            target.host, genuine_);
        } catch (const ParseError&) {
            record.category = std::string(classify::category_id(classify::Category::unknown));
            classify::NegligenceReport n;
            n.notes.push_back("observed leaf unparseable");
            record.negligence = n;
        }
    }

    std::lock_guard lock(ingest_mutex_);
    record.id = store_->next_id();
    store_->append(record);
    return record;
}

}  // namespace proxyscope::service
