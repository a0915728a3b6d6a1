#include "proxyscope/geo.hpp"

#include <arpa/inet.h>

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "proxyscope/bytes.hpp"

namespace proxyscope::geo {

namespace {

struct ParsedAddr {
    int family;  // 4 or 6
    std::array<std::uint8_t, 16> bytes{};
    int max_prefix() const { return family == 4 ? 32 : 128; }
};

std::optional<ParsedAddr> parse_ip(const std::string& text) {
    ParsedAddr out{};
    in_addr v4{};
    if (inet_pton(AF_INET, text.c_str(), &v4) == 1) {
        out.family = 4;
        std::memcpy(out.bytes.data(), &v4, 4);
        return out;
    }
    in6_addr v6{};
    if (inet_pton(AF_INET6, text.c_str(), &v6) == 1) {
        out.family = 6;
        std::memcpy(out.bytes.data(), &v6, 16);
        return out;
    }
    return std::nullopt;
}

void mask_prefix(std::array<std::uint8_t, 16>& bytes, int prefix) {
    for (int i = 0; i < 16; ++i) {
        int bit_start = i * 8;
        if (prefix <= bit_start) {
            bytes[static_cast<std::size_t>(i)] = 0;
        } else if (prefix < bit_start + 8) {
            int keep = prefix - bit_start;
            bytes[static_cast<std::size_t>(i)] &=
                static_cast<std::uint8_t>(0xff << (8 - keep));
        }
    }
}

}  // namespace

void GeoDb::insert(int family, const std::array<std::uint8_t, 16>& addr, int prefix,
                   const std::string& country) {
    Key key{addr};
    mask_prefix(key.bytes, prefix);
    tables_[family][prefix][key] = country;
    ++count_;
}

GeoDb GeoDb::from_csv_text(std::string_view text) {
    GeoDb db;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                                             : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        std::string line = trim_ascii(raw);
        if (line.empty() || line[0] == '#') continue;

        std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw ParseError("geo line " + std::to_string(line_no) + ": expected cidr,iso2",
                             line_no);
        std::string cidr = trim_ascii(std::string_view(line).substr(0, comma));
        std::string country = trim_ascii(std::string_view(line).substr(comma + 1));
        if (country.size() != 2)
            throw ParseError("geo line " + std::to_string(line_no) +
                                 ": country code must be 2 characters",
                             line_no);

        std::string addr_part = cidr;
        int prefix = -1;
        std::size_t slash = cidr.find('/');
        if (slash != std::string::npos) {
            addr_part = cidr.substr(0, slash);
            std::string plen = cidr.substr(slash + 1);
            auto [p, ec] = std::from_chars(plen.data(), plen.data() + plen.size(), prefix);
            if (ec != std::errc() || p != plen.data() + plen.size())
                throw ParseError("geo line " + std::to_string(line_no) + ": bad prefix length",
                                 line_no);
        }
        auto parsed = parse_ip(addr_part);
        if (!parsed)
            throw ParseError("geo line " + std::to_string(line_no) + ": bad address '" +
                                 addr_part + "'",
                             line_no);
        if (prefix < 0) prefix = parsed->max_prefix();  // bare address = host route
        if (prefix > parsed->max_prefix())
            throw ParseError("geo line " + std::to_string(line_no) + ": prefix too long",
                             line_no);
        db.insert(parsed->family, parsed->bytes, prefix, country);
    }
    return db;
}

GeoDb GeoDb::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open geo csv " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_csv_text(ss.str());
}

std::string GeoDb::lookup(const std::string& ip) const {
    auto parsed = parse_ip(ip);
    if (!parsed) throw ParameterError("not an IP address: " + ip);
    auto family_it = tables_.find(parsed->family);
    if (family_it == tables_.end()) return "??";
    for (const auto& [prefix, entries] : family_it->second) {  // longest first
        Key key{parsed->bytes};
        mask_prefix(key.bytes, prefix);
        auto hit = entries.find(key);
        if (hit != entries.end()) return hit->second;
    }
    return "??";
}

}  // namespace proxyscope::geo
