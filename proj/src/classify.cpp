#include "proxyscope/classify.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "proxyscope/net.hpp"

namespace proxyscope::classify {

extern const char* const kDefaultRulesTsv;  // generated from data/default_rules.tsv

const std::vector<Category>& all_categories() {
    static const std::vector<Category> cats = {
        Category::business_personal_firewall,
        Category::business_firewall,
        Category::personal_firewall,
        Category::parental_control,
        Category::organization,
        Category::school,
        Category::malware,
        Category::unknown,
        Category::telecom,
        Category::certificate_authority,
    };
    return cats;
}

std::string_view category_id(Category c) {
    switch (c) {
        case Category::business_personal_firewall: return "business_personal_firewall";
        case Category::business_firewall: return "business_firewall";
        case Category::personal_firewall: return "personal_firewall";
        case Category::parental_control: return "parental_control";
        case Category::organization: return "organization";
        case Category::school: return "school";
        case Category::malware: return "malware";
        case Category::unknown: return "unknown";
        case Category::telecom: return "telecom";
        case Category::certificate_authority: return "certificate_authority";
    }
    return "unknown";
}

std::string_view category_display(Category c) {
    switch (c) {
        case Category::business_personal_firewall: return "Business/Personal Firewall";
        case Category::business_firewall: return "Business Firewall";
        case Category::personal_firewall: return "Personal Firewall";
        case Category::parental_control: return "Parental Control";
        case Category::organization: return "Organization";
        case Category::school: return "School";
        case Category::malware: return "Malware";
        case Category::unknown: return "Unknown";
        case Category::telecom: return "Telecom";
        case Category::certificate_authority: return "Certificate Authority";
    }
    return "Unknown";
}

std::optional<Category> category_from_id(std::string_view id) {
    for (Category c : all_categories())
        if (category_id(c) == id) return c;
    return std::nullopt;
}

namespace {

RuleField parse_field(std::string_view s, std::size_t line_no) {
    if (s == "issuer_org") return RuleField::issuer_org;
    if (s == "issuer_ou") return RuleField::issuer_ou;
    if (s == "issuer_cn") return RuleField::issuer_cn;
    throw ParseError("rule line " + std::to_string(line_no) + ": unknown field '" +
                         std::string(s) + "'",
                     line_no);
}

MatchKind parse_match(std::string_view s, std::size_t line_no) {
    if (s == "substring") return MatchKind::substring;
    if (s == "exact") return MatchKind::exact;
    throw ParseError("rule line " + std::to_string(line_no) + ": unknown match kind '" +
                         std::string(s) + "'",
                     line_no);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t tab = line.find('\t', pos);
        if (tab == std::string_view::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, tab - pos));
        pos = tab + 1;
    }
    return out;
}

}  // namespace

RuleSet RuleSet::parse(std::string_view text) {
    RuleSet out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                                              : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        std::string trimmed = trim_ascii(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;

        std::vector<std::string_view> cols = split_tabs(line);
        if (cols.size() != 5)
            throw ParseError("rule line " + std::to_string(line_no) + ": expected 5 columns, got " +
                                 std::to_string(cols.size()),
                             line_no);
        Rule rule;
        std::string prio = trim_ascii(cols[0]);
        auto [p, ec] = std::from_chars(prio.data(), prio.data() + prio.size(), rule.priority);
        if (ec != std::errc() || p != prio.data() + prio.size())
            throw ParseError("rule line " + std::to_string(line_no) + ": bad priority '" +
                                 prio + "'",
                             line_no);
        rule.field = parse_field(trim_ascii(cols[1]), line_no);
        rule.kind = parse_match(trim_ascii(cols[2]), line_no);
        rule.pattern = trim_ascii(cols[3]);
        if (rule.pattern.empty())
            throw ParseError("rule line " + std::to_string(line_no) + ": empty pattern", line_no);
        std::string cat = trim_ascii(cols[4]);
        auto category = category_from_id(cat);
        if (!category)
            throw ParseError("rule line " + std::to_string(line_no) + ": unknown category '" +
                                 cat + "'",
                             line_no);
        rule.category = *category;
        rule.line_no = line_no;
        out.rules_.push_back(std::move(rule));
    }
    std::stable_sort(out.rules_.begin(), out.rules_.end(),
                     [](const Rule& a, const Rule& b) { return a.priority > b.priority; });
    for (std::size_t i = 1; i < out.rules_.size(); ++i) {
        if (out.rules_[i].priority == out.rules_[i - 1].priority)
            throw ParseError("rule line " + std::to_string(out.rules_[i].line_no) +
                                 ": duplicate priority " + std::to_string(out.rules_[i].priority),
                             out.rules_[i].line_no);
    }
    return out;
}

RuleSet RuleSet::load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open rule file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const RuleSet& RuleSet::builtin() {
    static const RuleSet rules = RuleSet::parse(kDefaultRulesTsv);
    return rules;
}

namespace {

const std::optional<std::string>& field_value(const x509::CertificateSummary& leaf,
                                              RuleField field) {
    switch (field) {
        case RuleField::issuer_org: return leaf.issuer_org;
        case RuleField::issuer_ou: return leaf.issuer_ou;
        case RuleField::issuer_cn: return leaf.issuer_cn;
    }
    return leaf.issuer_org;
}

bool rule_matches(const Rule& rule, const x509::CertificateSummary& leaf) {
    const std::optional<std::string>& value = field_value(leaf, rule.field);
    if (!value) return false;
    if (rule.kind == MatchKind::exact) return iequals_ascii(*value, rule.pattern);
    return icontains_ascii(*value, rule.pattern);
}

}  // namespace

Classification classify(const x509::CertificateSummary& leaf, const RuleSet& rules) {
    for (const Rule& rule : rules.rules()) {
        if (rule_matches(rule, leaf)) return {rule.category, &rule};
    }
    return {Category::unknown, nullptr};
}

bool hostname_matches(std::string_view pattern, std::string_view name) {
    if (pattern.empty() || name.empty()) return false;
    if (iequals_ascii(pattern, name)) return true;
    if (pattern.substr(0, 2) != "*.") return false;
    // Wildcards cover exactly one left-most label and never IP addresses.
    if (net::looks_like_ip_literal(std::string(name))) return false;
    std::string_view suffix = pattern.substr(1);  // ".example.com"
    if (name.size() <= suffix.size()) return false;
    if (!iequals_ascii(name.substr(name.size() - suffix.size()), suffix)) return false;
    std::string_view label = name.substr(0, name.size() - suffix.size());
    return !label.empty() && label.find('.') == std::string_view::npos &&
           label.find('*') == std::string_view::npos;
}

TrustStore TrustStore::from_pem_text(std::string_view pem) {
    TrustStore store;
    store.roots = x509::decode_concatenated_pem(pem);
    for (const Bytes& der : store.roots) store.summaries.push_back(x509::parse_der(der));
    return store;
}

TrustStore TrustStore::load_pem_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open trust store " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_pem_text(ss.str());
}

namespace {

bool blank_or_null(const std::optional<std::string>& v) {
    return !v || trim_ascii(*v).empty();
}

bool names_equal(const std::optional<std::string>& a, const std::optional<std::string>& b) {
    return a && b && iequals_ascii(*a, *b);
}

}  // namespace

NegligenceReport detect_negligence(const x509::CertificateSummary& observed,
                                   const Bytes& observed_der,
                                   const x509::CertificateSummary& authoritative,
                                   const std::string& expected_name,
                                   const TrustStore& genuine) {
    NegligenceReport report;

    if (observed.key_bits > 0 && authoritative.key_bits > 0 &&
        observed.key_bits < authoritative.key_bits)
        report.weak_key = WeakKeyFinding{observed.key_bits, authoritative.key_bits};
    if (observed.key_bits == 0)
        report.notes.push_back("observed key strength unknown");

    std::string alg = to_lower_ascii(observed.signature_algorithm);
    if (alg.find("md5") != std::string::npos || alg.find("md2") != std::string::npos ||
        alg.find("sha1") != std::string::npos)
        report.weak_hash = observed.signature_algorithm;

    report.null_issuer = blank_or_null(observed.issuer_cn) && blank_or_null(observed.issuer_org) &&
                         blank_or_null(observed.issuer_ou);

    // A claimed authority name that exists in the genuine store but whose key
    // did not make this signature is a masquerade, not an authority.
    if (!report.null_issuer && !genuine.roots.empty()) {
        bool claimed_known = false;
        std::string claimed;
        bool verified = false;
        for (std::size_t i = 0; i < genuine.roots.size(); ++i) {
            const auto& root = genuine.summaries[i];
            bool name_hit = names_equal(observed.issuer_org, root.subject_org) ||
                            names_equal(observed.issuer_cn, root.subject_cn);
            if (!name_hit) continue;
            claimed_known = true;
            if (claimed.empty())
                claimed = observed.issuer_org.value_or(observed.issuer_cn.value_or(""));
            try {
                if (x509::verify_signed_by(observed_der, genuine.roots[i])) {
                    verified = true;
                    break;
                }
            } catch (const UnsupportedAlgorithmError&) {
                report.notes.push_back("authority check skipped an unsupported algorithm");
            }
        }
        if (claimed_known && !verified) report.ca_masquerade = claimed;
    }

    if (!expected_name.empty()) {
        std::vector<std::string> names;
        if (observed.subject_cn) names.push_back(*observed.subject_cn);
        names.insert(names.end(), observed.san_dns.begin(), observed.san_dns.end());
        names.insert(names.end(), observed.san_ip.begin(), observed.san_ip.end());
        bool matched = false;
        for (const std::string& n : names) {
            if (hostname_matches(n, expected_name)) {
                matched = true;
                break;
            }
        }
        if (!matched) report.subject_mismatch = SubjectMismatchFinding{expected_name, names};
    }

    return report;
}

}  // namespace proxyscope::classify
