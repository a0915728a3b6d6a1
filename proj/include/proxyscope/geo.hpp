#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "proxyscope/errors.hpp"

namespace proxyscope::geo {

// Longest-prefix lookup over a CSV of `cidr,iso2` lines. '#' starts a
// comment. Unmatched addresses map to "??".
class GeoDb {
  public:
    static GeoDb from_csv_text(std::string_view text);
    static GeoDb load_csv(const std::filesystem::path& path);

    // Throws ParameterError when ip is not a valid IPv4/IPv6 literal.
    std::string lookup(const std::string& ip) const;
    std::size_t size() const { return count_; }

  private:
    struct Key {
        std::array<std::uint8_t, 16> bytes{};
        bool operator<(const Key& o) const { return bytes < o.bytes; }
    };
    // family (4/6) -> prefix length -> masked address -> country
    std::map<int, std::map<int, std::map<Key, std::string>, std::greater<>>> tables_;
    std::size_t count_ = 0;

    void insert(int family, const std::array<std::uint8_t, 16>& addr, int prefix,
                const std::string& country);
};

}  // namespace proxyscope::geo
