// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances and time budgets are pinned here, not configurable.
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "proxyscope/classify.hpp"
#include "proxyscope/forge.hpp"
#include "proxyscope/net.hpp"
#include "proxyscope/policy.hpp"
#include "proxyscope/service.hpp"
#include "proxyscope/stats.hpp"
#include "proxyscope/store.hpp"
#include "proxyscope/tls.hpp"
#include "proxyscope/tls_server.hpp"
#include "proxyscope/x509.hpp"
#include "ssl_server.hpp"

using namespace proxyscope;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& msg) {
    if (!cond) throw CheckFailure(msg);
}

int g_failures = 0;

void criterion(const char* label, const std::function<std::string()>& body) {
    try {
        std::string detail = body();
        std::printf("PASS %-28s %s\n", label, detail.c_str());
    } catch (const std::exception& e) {
        ++g_failures;
        std::printf("FAIL %-28s %s\n", label, e.what());
    }
    std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// Reference dataset: interception counts with the rate each count was
// recorded as. `corrected` is set on the rows with a documented discrepancy,
// where the recorded rate disagrees with the row's own counts; the value is
// what the counts actually yield.

struct GoldenRow {
    const char* key;
    std::uint64_t proxied;
    std::uint64_t total;  // 0 for share tables (denominator is table-wide)
    const char* printed;
    const char* corrected = nullptr;
};

const std::vector<GoldenRow> kSurveyACountries = {
    {"United States", 2252, 285078, "0.79"},
    {"Brazil", 2041, 298618, "0.68"},
    {"France", 812, 74789, "1.09"},
    {"United Kingdom", 759, 259971, "0.29"},
    {"Romania", 696, 94116, "0.74"},
    {"Germany", 499, 187805, "0.27"},
    {"Canada", 303, 34695, "0.87"},
    {"Turkey", 303, 65195, "0.46"},
    {"India", 302, 51348, "0.59"},
    {"Spain", 226, 62569, "0.36"},
    {"Russia", 224, 58402, "0.38"},
    {"Italy", 200, 129358, "0.15"},
    {"South Korea", 196, 46660, "0.42"},
    {"Portugal", 185, 29799, "0.62"},
    {"Poland", 182, 110550, "0.16"},
    {"Ukraine", 160, 61431, "0.26"},
    {"Belgium", 136, 16816, "0.81"},
    {"Japan", 111, 31751, "0.35"},
    {"Netherlands", 104, 31938, "0.33"},
    {"Taiwan", 101, 61195, "0.17"},
    {"Other", 1972, 869096, "0.23"},
};
constexpr const char* kSurveyACountryTotal = "0.41";

const std::vector<GoldenRow> kSurveyACategories = {
    {"Business/Personal Firewall", 8101, 0, "68.86"},
    {"Business Firewall", 69, 0, "0.59"},
    {"Personal Firewall", 11, 0, "0.09"},
    {"Parental Control", 156, 0, "1.33"},
    {"Organization", 1394, 0, "12.66", "11.85"},
    {"School", 32, 0, "0.27"},
    {"Malware", 1112, 0, "8.65", "9.45"},
    {"Unknown", 840, 0, "7.14"},
    {"Telecom", 0, 0, "0.00"},
    {"Certificate Authority", 49, 0, "0.42"},
};
constexpr std::uint64_t kSurveyAMismatches = 11764;

const std::vector<GoldenRow> kSurveyBCountries = {
    {"China", 563, 2549301, "0.02"},
    {"Ukraine", 4329, 1575053, "0.27"},
    {"Russia", 4532, 1116341, "0.40", "0.41"},
    {"South Korea", 1722, 836556, "0.21"},
    {"Egypt", 3720, 660937, "0.56"},
    {"Pakistan", 1890, 456792, "0.41"},
    {"Turkey", 1975, 411962, "0.48"},
    {"United States", 3327, 385811, "0.86"},
    {"Japan", 2033, 273532, "0.74"},
    {"United Kingdom", 2056, 266873, "0.77"},
    {"Brazil", 1889, 232454, "0.81"},
    {"Taiwan", 530, 186942, "0.28"},
    {"Romania", 2210, 185749, "1.19"},
    {"Indonesia", 798, 181971, "0.44"},
    {"Germany", 1091, 177586, "0.61"},
    {"Italy", 737, 145438, "0.50", "0.51"},
    {"Greece", 516, 130613, "0.40"},
    {"Poland", 456, 127806, "0.36"},
    {"Czech Republic", 343, 110170, "0.31"},
    {"India", 716, 102869, "0.70"},
    {"Other", 15328, 2200000, "0.70"},
};
constexpr const char* kSurveyBCountryTotal = "0.41";

const std::vector<GoldenRow> kSurveyBCategories = {
    {"Business/Personal Firewall", 36005, 0, "70.93"},
    {"Business Firewall", 1231, 0, "2.43"},
    {"Personal Firewall", 536, 0, "1.06"},
    {"Parental Control", 428, 0, "0.84"},
    {"Organization", 3531, 0, "6.96"},
    {"School", 482, 0, "0.95"},
    {"Malware", 2571, 0, "5.06"},
    {"Unknown", 5455, 0, "10.75"},
    {"Telecom", 447, 0, "0.88"},
    {"Certificate Authority", 68, 0, "0.13"},
};
constexpr std::uint64_t kSurveyBMismatches = 50761;

const std::vector<GoldenRow> kHostTypes = {
    {"Popular", 20965, 5132342, "0.41"},
    {"Business", 7494, 1787875, "0.42"},
    {"Pornographic", 12458, 3004996, "0.41"},
    {"Operator-hosted", 9844, 2353717, "0.42"},
};

// Issuer organizations with their expected categories; "Null" stands for a
// certificate without issuer fields.
const std::vector<std::pair<const char*, const char*>> kIssuerGoldens = {
    {"Bitdefender", "business_personal_firewall"},
    {"PSafe Tecnologia S.A.", "business_personal_firewall"},
    {"Sendori Inc", "malware"},
    {"ESET spol. s r. o.", "business_personal_firewall"},
    {"Null", "unknown"},
    {"Kaspersky Lab ZAO", "business_personal_firewall"},
    {"Fortinet", "business_firewall"},
    {"Kurupira.NET", "parental_control"},
    {"POSCO", "organization"},
    {"Qustodio", "parental_control"},
    {"WebMakerPlus Ltd", "malware"},
    {"Southern Company Services", "organization"},
    {"NordNet", "personal_firewall"},
    {"Target Corporation", "organization"},
    {"DigiCert Inc", "certificate_authority"},
    {"ContentWatch, Inc.", "parental_control"},
    {"NetSpark, Inc.", "parental_control"},
    {"Sweesh LTD", "malware"},
    {"IBRD", "organization"},
    {"Cloud Services", "malware"},
};

// ---------------------------------------------------------------------------

std::vector<Bytes> fixture_chain() {
    return x509::decode_concatenated_pem(testsup::fixture_text("chain3.pem"));
}

classify::TrustStore genuine_store() {
    return classify::TrustStore::from_pem_text(testsup::fixture_text("ca.pem") +
                                               testsup::fixture_text("inter.pem"));
}

tls::FlightServer::Options serve_chain(std::vector<Bytes> chain) {
    tls::FlightServer::Options opts;
    opts.provider = [chain = std::move(chain)](const tls::ParsedClientHello&,
                                               const net::Socket&) { return chain; };
    return opts;
}

tls::ProbeOutcome probe_port(std::uint16_t port) {
    tls::ProbeTarget target;
    target.host = "127.0.0.1";
    target.port = port;
    target.server_name = "www.fixture.test";
    tls::ProbeOptions opts;
    opts.connect_timeout_ms = 3000;
    opts.read_timeout_ms = 3000;
    return tls::probe(target, opts);
}

std::string criterion_dataset_replay() {
    auto start = std::chrono::steady_clock::now();
    std::size_t rows = 0;
    std::size_t discrepancies = 0;

    auto match_rows = [&](const stats::PrevalenceTable& table,
                          const std::vector<GoldenRow>& golden, const char* table_name) {
        std::map<std::string, std::string> by_key;
        for (const auto& row : table.rows) by_key[row.key] = row.percent;
        for (const GoldenRow& g : golden) {
            auto it = by_key.find(g.key);
            expect(it != by_key.end(),
                   std::string(table_name) + ": row '" + g.key + "' missing");
            const char* want = g.corrected ? g.corrected : g.printed;
            expect(it->second == want, std::string(table_name) + ": row '" + g.key +
                                           "' recomputed " + it->second + ", want " + want);
            if (g.corrected) {
                expect(it->second != g.printed,
                       std::string(table_name) + ": row '" + g.key +
                           "' no longer diverges from its recorded rate");
                ++discrepancies;
            }
            ++rows;
        }
    };

    auto check_rates = [&](const std::vector<GoldenRow>& golden, const char* total_percent,
                           stats::Dimension dim, const char* table_name) {
        std::vector<stats::CountRow> counts;
        for (const GoldenRow& g : golden) counts.push_back({g.key, g.proxied, g.total});
        auto table = stats::tabulate(dim, counts);
        match_rows(table, golden, table_name);
        if (total_percent) {
            expect(table.total_row.percent == total_percent,
                   std::string(table_name) + ": total recomputed " + table.total_row.percent +
                       ", want " + total_percent);
            ++rows;
        }
    };

    auto check_shares = [&](const std::vector<GoldenRow>& golden, std::uint64_t denominator,
                            const char* table_name) {
        std::vector<stats::CountRow> counts;
        for (const GoldenRow& g : golden) counts.push_back({g.key, g.proxied, 0});
        auto table = stats::tabulate(stats::Dimension::category, counts, denominator);
        match_rows(table, golden, table_name);
    };

    check_rates(kSurveyACountries, kSurveyACountryTotal, stats::Dimension::country,
                "survey A countries");
    check_shares(kSurveyACategories, kSurveyAMismatches, "survey A categories");
    check_rates(kSurveyBCountries, kSurveyBCountryTotal, stats::Dimension::country,
                "survey B countries");
    check_shares(kSurveyBCategories, kSurveyBMismatches, "survey B categories");
    check_rates(kHostTypes, nullptr, stats::Dimension::host_type, "host types");

    expect(discrepancies == 4,
           "expected 4 documented discrepancies, saw " + std::to_string(discrepancies));

    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - start)
                  .count();
    expect(ms < 1000, "replay took " + std::to_string(ms) + "ms, budget is 1000ms");
    return std::to_string(rows) + " rates reproduced from counts, 4 documented " +
           "discrepancies confirmed, in " + std::to_string(ms) + "ms";
}

std::string criterion_randomized_trials(const std::filesystem::path& store_dir,
                                        const std::filesystem::path& genuine_pem) {
    auto start = std::chrono::steady_clock::now();

    tls::FlightServer origin(serve_chain(fixture_chain()));
    expect(origin.start(), "origin server failed to start");
    store::TargetKey origin_key{"127.0.0.1", origin.port()};

    service::ServiceConfig config;
    config.targets = {origin_key};
    config.store_dir = store_dir;
    config.ca_store_pem = genuine_pem;
    service::ReportService service(std::move(config));

    auto make_proxy = [&](forge::Profile profile) {
        forge::InterceptProxy::Options opts;
        opts.upstream_host = "127.0.0.1";
        opts.upstream_port = origin.port();
        opts.profile = profile;
        auto proxy = std::make_unique<forge::InterceptProxy>(std::move(opts));
        expect(proxy->start(), "intercept proxy failed to start");
        return proxy;
    };

    forge::Profile weak_key;
    weak_key.key_bits = 512;
    forge::Profile weak_hash;
    weak_hash.hash = forge::Profile::Hash::md5;
    forge::Profile injected;
    injected.issuer_mode = forge::Profile::IssuerMode::injected_root;
    forge::Profile wrong_subject;
    wrong_subject.subject_mode = forge::Profile::SubjectMode::fixed;
    wrong_subject.fixed_subject = "wrong.example";
    forge::Profile subnet;
    subnet.key_bits = 1024;
    subnet.hash = forge::Profile::Hash::sha1;
    subnet.subject_mode = forge::Profile::SubjectMode::wildcard_subnet;
    forge::Profile branded;
    branded.issuer_org_override = "Sendori Inc";

    std::vector<std::unique_ptr<forge::InterceptProxy>> proxies;
    for (const auto& p : {weak_key, weak_hash, injected, wrong_subject, subnet, branded})
        proxies.push_back(make_proxy(p));

    std::mt19937 rng(20250818);
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<std::size_t> pick(0, proxies.size() - 1);

    const int kTrials = 1000;
    int intercepted = 0, false_positives = 0, false_negatives = 0;
    for (int i = 0; i < kTrials; ++i) {
        bool mitm = coin(rng);
        std::uint16_t port = mitm ? proxies[pick(rng)]->port() : origin.port();
        auto outcome = probe_port(port);
        expect(outcome.ok(), "trial " + std::to_string(i) + " probe failed: " +
                                 (outcome.failure ? outcome.failure->detail : ""));
        auto record = service.ingest(
            "127.0.0.1", origin_key,
            x509::encode_concatenated_pem(outcome.success->chain.der_blobs));
        bool flagged = record.verdict == store::Verdict::mismatch;
        if (mitm) {
            ++intercepted;
            if (!flagged) ++false_negatives;
        } else if (flagged) {
            ++false_positives;
        }
    }

    expect(false_positives == 0,
           std::to_string(false_positives) + " honest trials flagged as interception");
    expect(false_negatives == 0,
           std::to_string(false_negatives) + " intercepted trials passed as honest");
    expect(intercepted > 0 && intercepted < kTrials, "coin flip degenerated");

    auto secs = std::chrono::duration_cast<std::chrono::seconds>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    expect(secs < 120, "trials took " + std::to_string(secs) + "s, budget is 120s");
    return std::to_string(kTrials) + " trials (" + std::to_string(intercepted) +
           " intercepted), 0 false positives, 0 false negatives, in " +
           std::to_string(secs) + "s";
}

std::string criterion_negligence_findings() {
    auto chain = fixture_chain();
    auto authoritative = x509::parse_der(chain.front());
    auto genuine = genuine_store();
    const std::string expected_name = "www.fixture.test";

    auto judge = [&](const forge::Profile& profile) {
        auto identity = forge::forge_certificate(profile, chain, "203.0.113.9");
        auto leaf = x509::parse_der(identity.chain.front());
        return classify::detect_negligence(leaf, identity.chain.front(), authoritative,
                                           expected_name, genuine);
    };
    auto finding_count = [](const classify::NegligenceReport& r) {
        return static_cast<int>(r.weak_key.has_value()) +
               static_cast<int>(r.weak_hash.has_value()) +
               static_cast<int>(r.ca_masquerade.has_value()) +
               static_cast<int>(r.subject_mismatch.has_value()) +
               static_cast<int>(r.null_issuer);
    };

    forge::Profile weak_key;
    weak_key.key_bits = 512;
    auto report = judge(weak_key);
    expect(report.weak_key.has_value(), "weak key profile did not trip the weak key finding");
    expect(finding_count(report) == 1, "weak key profile tripped extra findings");
    expect(report.weak_key->observed_bits == 512 && report.weak_key->authoritative_bits == 2048,
           "weak key bits misreported");

    forge::Profile weak_hash;
    weak_hash.hash = forge::Profile::Hash::md5;
    report = judge(weak_hash);
    expect(report.weak_hash.has_value(), "weak hash profile did not trip the weak hash finding");
    expect(finding_count(report) == 1, "weak hash profile tripped extra findings");
    expect(*report.weak_hash == "md5-with-rsa", "weak hash algorithm misreported");

    forge::Profile masquerade;
    masquerade.issuer_mode = forge::Profile::IssuerMode::copy_issuer_name;
    report = judge(masquerade);
    expect(report.ca_masquerade.has_value(),
           "issuer-name copy did not trip the masquerade finding");
    expect(finding_count(report) == 1, "masquerade profile tripped extra findings");
    expect(*report.ca_masquerade == "Fixture Trust Services", "claimed authority misreported");

    forge::Profile wrong_subject;
    wrong_subject.subject_mode = forge::Profile::SubjectMode::fixed;
    wrong_subject.fixed_subject = "wrong.example";
    report = judge(wrong_subject);
    expect(report.subject_mismatch.has_value(),
           "fixed subject did not trip the subject mismatch finding");
    expect(finding_count(report) == 1, "subject mismatch profile tripped extra findings");
    expect(report.subject_mismatch->expected == expected_name, "expected name misreported");

    forge::Profile null_issuer;
    null_issuer.issuer_mode = forge::Profile::IssuerMode::null_issuer;
    report = judge(null_issuer);
    expect(report.null_issuer, "stripped issuer did not trip the null issuer finding");
    expect(finding_count(report) == 1, "null issuer profile tripped extra findings");

    auto honest = classify::detect_negligence(authoritative, chain.front(), authoritative,
                                              expected_name, genuine);
    expect(!honest.any(), "honest re-served leaf tripped a finding");
    expect(honest.notes.empty(), "honest re-served leaf left notes");

    return "five findings isolated to their profiles; honest re-serve is clean";
}

std::string criterion_issuer_classification() {
    const auto& rules = classify::RuleSet::builtin();
    for (const auto& [org, want] : kIssuerGoldens) {
        x509::CertificateSummary leaf;
        if (std::string(org) != "Null") leaf.issuer_org = org;
        auto got = classify::category_id(classify::classify(leaf, rules).category);
        expect(got == want, std::string("issuer '") + org + "' classified as " +
                                std::string(got) + ", want " + want);
    }
    return std::to_string(kIssuerGoldens.size()) + " issuers classified as expected";
}

std::string criterion_hello_interop() {
    testsup::RefTlsServer::Options opts;
    opts.chain_file = testsup::fixture_path("chain3.pem");
    opts.key_file = testsup::fixture_path("chainleaf.key");
    testsup::RefTlsServer server(opts);

    auto outcome = probe_port(server.port());
    expect(outcome.ok(), "probe against the reference stack failed" +
                             (outcome.failure ? ": " + outcome.failure->detail : ""));
    server.stop();
    auto results = server.results();
    expect(results.size() == 1, "reference stack saw no connection");
    expect(results[0].hello_seen, "reference stack never parsed the hello");
    expect(results[0].negotiated_version == 0x0303, "reference stack negotiated another version");
    expect(results[0].received_close_notify, "abort did not deliver close_notify");
    return "reference stack accepted the hello and the graceful abort";
}

std::string criterion_policy_exactness() {
    const std::string xml =
        "<cross-domain-policy><allow-access-from domain=\"*\" to-ports=\"843\"/>"
        "</cross-domain-policy>";
    policy::PolicyServer server(xml);
    expect(server.start(), "policy server failed to start");

    std::string request = "<policy-file-request/>";
    request.push_back('\0');
    expect(request.size() == 23, "request is not 23 bytes");

    auto exchange = [&](const std::string& wire) {
        auto conn = net::connect_to("127.0.0.1", server.port(), 2000);
        expect(conn.socket.has_value(), "connect to policy server failed");
        expect(conn.socket->write_all(Bytes(wire.begin(), wire.end()),
                                      net::Deadline::in_ms(2000)),
               "write to policy server failed");
        std::string reply;
        std::uint8_t buf[512];
        net::Deadline dl = net::Deadline::in_ms(2000);
        for (;;) {
            auto r = conn.socket->read_some(buf, sizeof(buf), dl);
            if (r.status != net::IoStatus::ok) break;
            reply.append(reinterpret_cast<char*>(buf), r.n);
        }
        return reply;
    };

    std::string reply = exchange(request);
    expect(reply == xml + '\0', "policy reply is not byte-exact");

    std::string flipped = request;
    flipped[1] = 'P';
    expect(exchange(flipped).empty(), "flipped request byte was still answered");
    expect(server.served() == 1, "served count is not exactly 1");

    // The gate itself: nothing but the exact 23 bytes gets an answer.
    Bytes exact(request.begin(), request.end());
    auto gate = policy::handle_policy_request(exact, xml);
    expect(gate.has_value() && std::string(gate->begin(), gate->end()) == xml + '\0',
           "gate reply is not byte-exact");
    Bytes no_nul(exact.begin(), exact.end() - 1);
    expect(!policy::handle_policy_request(no_nul, xml), "gate answered without the NUL");
    Bytes trailing = exact;
    trailing.push_back('x');
    expect(!policy::handle_policy_request(trailing, xml), "gate answered a 24-byte request");
    Bytes flipped_byte = exact;
    flipped_byte[0] = 'X';
    expect(!policy::handle_policy_request(flipped_byte, xml), "gate answered a flipped request");

    return "23-byte request answered byte-exact; perturbations rejected";
}

std::string criterion_origin_leaf_capture() {
    auto chain = fixture_chain();
    testsup::RefTlsServer::Options opts;
    opts.chain_file = testsup::fixture_path("chain3.pem");
    opts.key_file = testsup::fixture_path("chainleaf.key");
    testsup::RefTlsServer server(opts);

    auto outcome = probe_port(server.port());
    expect(outcome.ok(), "probe through the TLS 1.2 origin failed" +
                             (outcome.failure ? ": " + outcome.failure->detail : ""));
    expect(outcome.success->negotiated == tls::Version::v1_2, "origin is not TLS 1.2");
    expect(!outcome.success->chain.der_blobs.empty(), "no certificates captured");
    expect(outcome.success->chain.der_blobs.front() == chain.front(),
           "captured leaf differs from the configured one");
    return "captured leaf is byte-identical to the origin's configured leaf";
}

std::string criterion_replay_determinism(const std::filesystem::path& store_dir) {
    store::RecordStore reopened(store_dir);
    auto records = reopened.scan();
    expect(!records.empty(), "no persisted records to replay");

    std::size_t matches = 0, mismatches = 0;
    for (const auto& r : records)
        (r.verdict == store::Verdict::match ? matches : mismatches) += 1;
    expect(matches > 0 && mismatches > 0, "persisted log lacks both verdict kinds");

    auto replay = store::replay_verdicts(records);
    expect(replay.total == records.size(), "replay skipped records");
    expect(replay.deterministic(),
           std::to_string(replay.divergent_ids.size()) + " verdicts diverged on replay");
    return std::to_string(replay.total) + " verdicts reproduced (" + std::to_string(matches) +
           " match, " + std::to_string(mismatches) + " mismatch), 0 divergent";
}

}  // namespace

int main() {
    testsup::TempDir tmp;
    std::filesystem::path store_dir = tmp.path() / "store";
    std::filesystem::path genuine_pem = tmp.path() / "genuine.pem";
    {
        std::ofstream out(genuine_pem, std::ios::binary);
        out << testsup::fixture_text("ca.pem") << testsup::fixture_text("inter.pem");
    }

    criterion("[1] dataset replay", criterion_dataset_replay);
    criterion("[2] randomized detection",
              [&] { return criterion_randomized_trials(store_dir, genuine_pem); });
    criterion("[3] negligence findings", criterion_negligence_findings);
    criterion("[4] issuer classification", criterion_issuer_classification);
    criterion("[5a] client hello interop", criterion_hello_interop);
    criterion("[5b] policy gate exactness", criterion_policy_exactness);
    criterion("[5c] origin leaf capture", criterion_origin_leaf_capture);
    criterion("[6] verdict replay", [&] { return criterion_replay_determinism(store_dir); });

    if (g_failures == 0) {
        std::printf("acceptance: all criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria failed\n", g_failures);
    return 1;
}
