#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "proxyscope/errors.hpp"
#include "proxyscope/x509.hpp"

namespace proxyscope::classify {

enum class Category {
    business_personal_firewall,
    business_firewall,
    personal_firewall,
    parental_control,
    organization,
    school,
    malware,
    unknown,
    telecom,
    certificate_authority,
};

constexpr std::size_t kCategoryCount = 10;
const std::vector<Category>& all_categories();

std::string_view category_id(Category c);       // stable snake_case id
std::string_view category_display(Category c);  // human table label
std::optional<Category> category_from_id(std::string_view id);

enum class RuleField { issuer_org, issuer_ou, issuer_cn };
enum class MatchKind { substring, exact };

struct Rule {
    int priority;  // higher wins; unique within a rule set
    RuleField field;
    MatchKind kind;
    std::string pattern;
    Category category;
    std::size_t line_no = 0;
};

class RuleSet {
  public:
    // Format, one rule per line, UTF-8:
    //   priority<TAB>field<TAB>match<TAB>pattern<TAB>category
    // field: issuer_org | issuer_ou | issuer_cn
    // match: substring | exact   (both ASCII-case-insensitive)
    // '#' starts a comment; blank lines are skipped. Duplicate priorities
    // are rejected so rule order is never load-order-dependent.
    static RuleSet parse(std::string_view text);
    static RuleSet load_file(const std::filesystem::path& path);
    static const RuleSet& builtin();  // compiled-in default rule set

    const std::vector<Rule>& rules() const { return rules_; }
    std::size_t size() const { return rules_.size(); }

  private:
    std::vector<Rule> rules_;  // sorted by priority desc, then file order
};

struct Classification {
    Category category = Category::unknown;
    const Rule* rule = nullptr;  // null when nothing matched
};

Classification classify(const x509::CertificateSummary& leaf, const RuleSet& rules);

// Certificate-name matching: exact (case-insensitive) or a single leading
// "*." label covering exactly one label. IP addresses never match wildcards.
bool hostname_matches(std::string_view pattern, std::string_view name);

struct TrustStore {
    std::vector<Bytes> roots;
    std::vector<x509::CertificateSummary> summaries;

    static TrustStore from_pem_text(std::string_view pem);
    static TrustStore load_pem_file(const std::filesystem::path& path);
    static TrustStore empty() { return TrustStore{}; }
};

struct WeakKeyFinding {
    int observed_bits;
    int authoritative_bits;
};

struct SubjectMismatchFinding {
    std::string expected;
    std::vector<std::string> observed_names;
};

struct NegligenceReport {
    std::optional<WeakKeyFinding> weak_key;
    std::optional<std::string> weak_hash;      // offending algorithm name
    std::optional<std::string> ca_masquerade;  // claimed authority name
    std::optional<SubjectMismatchFinding> subject_mismatch;
    bool null_issuer = false;
    std::vector<std::string> notes;

    bool any() const {
        return weak_key || weak_hash || ca_masquerade || subject_mismatch || null_issuer;
    }
};

// Findings about an observed (substitute) leaf, judged against the
// authoritative leaf, the name the client expected, and a store of genuine
// authority certificates.
NegligenceReport detect_negligence(const x509::CertificateSummary& observed,
                                   const Bytes& observed_der,
                                   const x509::CertificateSummary& authoritative,
                                   const std::string& expected_name,
                                   const TrustStore& genuine);

}  // namespace proxyscope::classify
