#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace proxyscope {

using Bytes = std::vector<std::uint8_t>;
using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(const std::uint8_t* data, std::size_t len);
Sha256 sha256(const Bytes& data);
Sha256 sha256(std::string_view data);

std::string hex(const std::uint8_t* data, std::size_t len);
std::string hex(const Bytes& data);
std::string hex(const Sha256& digest);
std::optional<Bytes> unhex(std::string_view text);

std::string base64_encode(const std::uint8_t* data, std::size_t len);
// Tolerates ASCII whitespace between groups; rejects anything else.
std::optional<Bytes> base64_decode(std::string_view text);

inline void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

inline void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u24(Bytes& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] << 8 | p[1]);
}

inline std::uint32_t get_u24(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) << 16 |
           static_cast<std::uint32_t>(p[1]) << 8 | p[2];
}

std::string to_lower_ascii(std::string_view s);
bool iequals_ascii(std::string_view a, std::string_view b);
bool icontains_ascii(std::string_view haystack, std::string_view needle);
std::string trim_ascii(std::string_view s);

}  // namespace proxyscope
