#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "proxyscope/errors.hpp"
#include "proxyscope/store.hpp"

namespace proxyscope::stats {

// Half-up decimal percent of num/den, e.g. "0.41". den == 0 yields "0.00".
std::string format_percent_2dp(std::uint64_t num, std::uint64_t den);

// Half-up rate to 4 decimals with trailing zeros trimmed (at least one
// decimal survives): 79/10000 -> "0.0079", 0 -> "0.0".
std::string format_rate_4dp(std::uint64_t num, std::uint64_t den);

enum class Dimension { country, host_type, category, issuer_org };

std::string_view dimension_name(Dimension d);
std::optional<Dimension> dimension_from_name(std::string_view s);

struct PrevalenceRow {
    std::string key;
    std::uint64_t proxied = 0;
    std::uint64_t total = 0;  // denominator for this row's percent
    std::string percent;
};

struct CountryFootnote {
    std::size_t countries_observed = 0;
    std::size_t countries_with_mismatch = 0;
};

struct PrevalenceTable {
    Dimension dimension = Dimension::country;
    bool per_key_totals = true;  // false: percent is a share of all proxied
    std::vector<PrevalenceRow> rows;  // sorted by proxied desc, then key
    PrevalenceRow total_row;
    std::optional<CountryFootnote> footnote;
};

struct CountRow {
    std::string key;
    std::uint64_t proxied = 0;
    std::uint64_t total = 0;  // ignored for share dimensions
};

// Builds a table straight from counts. For country/host_type rows carry
// their own totals; for category/issuer_org the denominator is the sum of
// proxied counts unless an override is supplied.
PrevalenceTable tabulate(Dimension dimension, const std::vector<CountRow>& rows,
                         std::optional<std::uint64_t> denominator_override = std::nullopt);

using HostTypeMap = std::map<std::string, std::string>;  // host -> type label

// Aggregates records along a dimension. host_type needs a complete map:
// a record whose host is unmapped raises AggregationError naming it.
PrevalenceTable prevalence_by(const std::vector<store::MeasurementRecord>& records,
                              Dimension dimension, const HostTypeMap* host_types = nullptr);

std::string render_text_table(const PrevalenceTable& table);
std::string render_csv(const PrevalenceTable& table);

// One `iso2,rate` line per country whose total meets min_total. The "??"
// bucket is not a country and is skipped.
std::string export_heatmap(const PrevalenceTable& country_table, std::uint64_t min_total);

}  // namespace proxyscope::stats
