#include "proxyscope/bytes.hpp"

#include <openssl/sha.h>

#include <cctype>

namespace proxyscope {

Sha256 sha256(const std::uint8_t* data, std::size_t len) {
    Sha256 out{};
    SHA256(data, len, out.data());
    return out;
}

Sha256 sha256(const Bytes& data) { return sha256(data.data(), data.size()); }

Sha256 sha256(std::string_view data) {
    return sha256(reinterpret_cast<const std::uint8_t*>(data.data()), data.size());
}

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";
}

std::string hex(const std::uint8_t* data, std::size_t len) {
    std::string out;
    out.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(kHexDigits[data[i] >> 4]);
        out.push_back(kHexDigits[data[i] & 0x0f]);
    }
    return out;
}

std::string hex(const Bytes& data) { return hex(data.data(), data.size()); }

std::string hex(const Sha256& digest) { return hex(digest.data(), digest.size()); }

std::optional<Bytes> unhex(std::string_view text) {
    if (text.size() % 2 != 0) return std::nullopt;
    Bytes out;
    out.reserve(text.size() / 2);
    for (std::size_t i = 0; i < text.size(); i += 2) {
        int hi = -1, lo = -1;
        auto nibble = [](char c) -> int {
            if (c >= '0' && c <= '9') return c - '0';
            if (c >= 'a' && c <= 'f') return c - 'a' + 10;
            if (c >= 'A' && c <= 'F') return c - 'A' + 10;
            return -1;
        };
        hi = nibble(text[i]);
        lo = nibble(text[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
    return out;
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
}  // namespace

std::string base64_encode(const std::uint8_t* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= len; i += 3) {
        std::uint32_t v = data[i] << 16 | data[i + 1] << 8 | data[i + 2];
        out.push_back(kB64[v >> 18 & 0x3f]);
        out.push_back(kB64[v >> 12 & 0x3f]);
        out.push_back(kB64[v >> 6 & 0x3f]);
        out.push_back(kB64[v & 0x3f]);
    }
    if (i + 1 == len) {
        std::uint32_t v = data[i] << 16;
        out.push_back(kB64[v >> 18 & 0x3f]);
        out.push_back(kB64[v >> 12 & 0x3f]);
        out.append("==");
    } else if (i + 2 == len) {
        std::uint32_t v = data[i] << 16 | data[i + 1] << 8;
        out.push_back(kB64[v >> 18 & 0x3f]);
        out.push_back(kB64[v >> 12 & 0x3f]);
        out.push_back(kB64[v >> 6 & 0x3f]);
        out.push_back('=');
    }
    return out;
}

std::optional<Bytes> base64_decode(std::string_view text) {
    Bytes out;
    std::uint32_t acc = 0;
    int bits = 0;
    int pad = 0;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') continue;
        if (c == '=') {
            ++pad;
            continue;
        }
        if (pad > 0) return std::nullopt;  // data after padding
        int v = b64_value(c);
        if (v < 0) return std::nullopt;
        acc = acc << 6 | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>(acc >> bits & 0xff));
        }
    }
    if (pad > 2) return std::nullopt;
    // Leftover bits must be zero-pad of an incomplete group.
    if (bits > 0 && (acc & ((1u << bits) - 1)) != 0) return std::nullopt;
    return out;
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

bool iequals_ascii(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        char x = a[i], y = b[i];
        if (x >= 'A' && x <= 'Z') x = static_cast<char>(x - 'A' + 'a');
        if (y >= 'A' && y <= 'Z') y = static_cast<char>(y - 'A' + 'a');
        if (x != y) return false;
    }
    return true;
}

bool icontains_ascii(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    if (needle.size() > haystack.size()) return false;
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        if (iequals_ascii(haystack.substr(i, needle.size()), needle)) return true;
    }
    return false;
}

std::string trim_ascii(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace proxyscope
