#include "proxyscope/stats.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace proxyscope::stats {

std::string format_percent_2dp(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return "0.00";
    // hundredths of a percent, rounded half-up: (num/den*10000 + 1/2)
    std::uint64_t hundredths = (num * 20000 + den) / (2 * den);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%llu.%02llu",
                  static_cast<unsigned long long>(hundredths / 100),
                  static_cast<unsigned long long>(hundredths % 100));
    return buf;
}

std::string format_rate_4dp(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return "0.0";
    std::uint64_t ten_thousandths = (num * 20000 + den) / (2 * den);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%llu.%04llu",
                  static_cast<unsigned long long>(ten_thousandths / 10000),
                  static_cast<unsigned long long>(ten_thousandths % 10000));
    std::string out = buf;
    while (out.size() > 1 && out.back() == '0' && out[out.size() - 2] != '.') out.pop_back();
    return out;
}

std::string_view dimension_name(Dimension d) {
    switch (d) {
        case Dimension::country: return "country";
        case Dimension::host_type: return "host_type";
        case Dimension::category: return "category";
        case Dimension::issuer_org: return "issuer_org";
    }
    return "?";
}

std::optional<Dimension> dimension_from_name(std::string_view s) {
    if (s == "country") return Dimension::country;
    if (s == "host_type" || s == "host-type") return Dimension::host_type;
    if (s == "category") return Dimension::category;
    if (s == "issuer_org" || s == "issuer-org") return Dimension::issuer_org;
    return std::nullopt;
}

namespace {

bool is_share_dimension(Dimension d) {
    return d == Dimension::category || d == Dimension::issuer_org;
}

void sort_rows(std::vector<PrevalenceRow>& rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const PrevalenceRow& a, const PrevalenceRow& b) {
        if (a.proxied != b.proxied) return a.proxied > b.proxied;
        return a.key < b.key;
    });
}

}  // namespace

PrevalenceTable tabulate(Dimension dimension, const std::vector<CountRow>& rows,
                         std::optional<std::uint64_t> denominator_override) {
    PrevalenceTable table;
    table.dimension = dimension;
    table.per_key_totals = !is_share_dimension(dimension);

    std::uint64_t sum_proxied = 0, sum_total = 0;
    for (const CountRow& r : rows) {
        sum_proxied += r.proxied;
        sum_total += r.total;
    }

    // A percent over an empty denominator is displayed as "-", not 0.00.
    auto percent_or_dash = [](std::uint64_t num, std::uint64_t den) {
        return den > 0 ? format_percent_2dp(num, den) : std::string("-");
    };

    if (table.per_key_totals) {
        for (const CountRow& r : rows) {
            if (r.proxied > r.total)
                throw AggregationError("row '" + r.key + "' has proxied > total");
            table.rows.push_back({r.key, r.proxied, r.total, percent_or_dash(r.proxied, r.total)});
        }
        table.total_row = {"Total", sum_proxied, sum_total,
                           percent_or_dash(sum_proxied, sum_total)};
    } else {
        std::uint64_t den = denominator_override.value_or(sum_proxied);
        for (const CountRow& r : rows)
            table.rows.push_back({r.key, r.proxied, den, percent_or_dash(r.proxied, den)});
        table.total_row = {"Total", sum_proxied, den, percent_or_dash(sum_proxied, den)};
    }
    sort_rows(table.rows);
    return table;
}

PrevalenceTable prevalence_by(const std::vector<store::MeasurementRecord>& records,
                              Dimension dimension, const HostTypeMap* host_types) {
    std::map<std::string, CountRow> buckets;
    std::uint64_t mismatches = 0;
    std::set<std::string> proxied_countries;

    auto bucket_of = [&](const std::string& key) -> CountRow& {
        auto [it, inserted] = buckets.try_emplace(key);
        if (inserted) it->second.key = key;
        return it->second;
    };

    for (const store::MeasurementRecord& r : records) {
        bool mismatch = r.verdict == store::Verdict::mismatch;
        if (mismatch) ++mismatches;
        switch (dimension) {
            case Dimension::country: {
                CountRow& b = bucket_of(r.country);
                b.total += 1;
                if (mismatch) {
                    b.proxied += 1;
                    proxied_countries.insert(r.country);
                }
                break;
            }
            case Dimension::host_type: {
                if (host_types == nullptr)
                    throw AggregationError("host_type aggregation needs a host type map");
                auto it = host_types->find(r.target.host);
                if (it == host_types->end())
                    throw AggregationError("no host type for target '" + r.target.host + "'");
                CountRow& b = bucket_of(it->second);
                b.total += 1;
                if (mismatch) b.proxied += 1;
                break;
            }
            case Dimension::category: {
                if (!mismatch) break;
                bucket_of(std::string(classify::category_display(
                              classify::category_from_id(r.category.value_or("unknown"))
                                  .value_or(classify::Category::unknown))))
                    .proxied += 1;
                break;
            }
            case Dimension::issuer_org: {
                if (!mismatch) break;
                // Absent issuer organizations group under "Null".
                bucket_of(r.issuer_org.value_or("Null")).proxied += 1;
                break;
            }
        }
    }

    if (dimension == Dimension::category) {
        // The category set is closed; zero rows stay visible.
        for (classify::Category c : classify::all_categories())
            bucket_of(std::string(classify::category_display(c)));
    }

    std::vector<CountRow> rows;
    rows.reserve(buckets.size());
    for (auto& [key, row] : buckets) rows.push_back(std::move(row));

    PrevalenceTable table = is_share_dimension(dimension)
                                ? tabulate(dimension, rows, mismatches)
                                : tabulate(dimension, rows);
    if (dimension == Dimension::country)
        table.footnote = CountryFootnote{buckets.size(), proxied_countries.size()};
    return table;
}

std::string render_text_table(const PrevalenceTable& table) {
    std::vector<const PrevalenceRow*> rows;
    for (const auto& r : table.rows) rows.push_back(&r);
    rows.push_back(&table.total_row);

    std::size_t key_w = 3;
    for (const auto* r : rows) key_w = std::max(key_w, r->key.size());

    std::string out;
    char line[256];
    if (table.per_key_totals) {
        std::snprintf(line, sizeof(line), "%-*s  %12s  %12s  %8s\n", static_cast<int>(key_w),
                      std::string(dimension_name(table.dimension)).c_str(), "proxied", "total",
                      "%");
        out += line;
        for (const auto* r : rows) {
            std::snprintf(line, sizeof(line), "%-*s  %12llu  %12llu  %8s\n",
                          static_cast<int>(key_w), r->key.c_str(),
                          static_cast<unsigned long long>(r->proxied),
                          static_cast<unsigned long long>(r->total), r->percent.c_str());
            out += line;
        }
    } else {
        std::snprintf(line, sizeof(line), "%-*s  %12s  %8s\n", static_cast<int>(key_w),
                      std::string(dimension_name(table.dimension)).c_str(), "proxied", "%");
        out += line;
        for (const auto* r : rows) {
            std::snprintf(line, sizeof(line), "%-*s  %12llu  %8s\n", static_cast<int>(key_w),
                          r->key.c_str(), static_cast<unsigned long long>(r->proxied),
                          r->percent.c_str());
            out += line;
        }
    }
    if (table.footnote) {
        std::snprintf(line, sizeof(line),
                      "countries observed: %zu; countries with interception: %zu\n",
                      table.footnote->countries_observed,
                      table.footnote->countries_with_mismatch);
        out += line;
    }
    return out;
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

}  // namespace

std::string render_csv(const PrevalenceTable& table) {
    std::string out;
    out += std::string(dimension_name(table.dimension));
    out += table.per_key_totals ? ",proxied,total,percent\n" : ",proxied,percent\n";
    auto emit = [&](const PrevalenceRow& r) {
        out += csv_escape(r.key);
        out += ',' + std::to_string(r.proxied);
        if (table.per_key_totals) out += ',' + std::to_string(r.total);
        out += ',' + r.percent + '\n';
    };
    for (const auto& r : table.rows) emit(r);
    emit(table.total_row);
    return out;
}

std::string export_heatmap(const PrevalenceTable& country_table, std::uint64_t min_total) {
    if (country_table.dimension != Dimension::country)
        throw ParameterError("heatmap needs a country table");
    std::vector<const PrevalenceRow*> rows;
    for (const auto& r : country_table.rows) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(),
              [](const PrevalenceRow* a, const PrevalenceRow* b) { return a->key < b->key; });
    std::string out;
    for (const auto* r : rows) {
        if (r->key == "??" || r->total < min_total) continue;
        out += r->key + ',' + format_rate_4dp(r->proxied, r->total) + '\n';
    }
    return out;
}

}  // namespace proxyscope::stats
