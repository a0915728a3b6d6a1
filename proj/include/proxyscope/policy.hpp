#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "proxyscope/bytes.hpp"
#include "proxyscope/errors.hpp"
#include "proxyscope/net.hpp"

namespace proxyscope::policy {

// The request is these 22 ASCII bytes plus a terminating NUL (23 on the wire).
constexpr std::string_view kPolicyRequest = "<policy-file-request/>";
Bytes policy_request_bytes();

struct PortRange {
    std::uint16_t lo = 0;
    std::uint16_t hi = 0;
    bool contains(std::uint16_t p) const { return p >= lo && p <= hi; }
};

struct AllowEntry {
    std::string domain;  // "*", "*.suffix", or exact
    bool all_ports = false;
    std::vector<PortRange> ports;

    bool covers_port(std::uint16_t p) const;
    bool covers_domain(std::string_view d) const;
};

struct PolicyDocument {
    std::string xml;
    std::vector<AllowEntry> entries;

    // Minimal reader for <cross-domain-policy> / <allow-access-from
    // domain=".." to-ports=".."/>. Throws ParseError.
    static PolicyDocument parse(std::string_view xml_text);
    // domain="*" to-ports="*"
    static PolicyDocument permissive();
    static PolicyDocument allow(const std::string& domain, const std::string& to_ports);

    bool allows(std::string_view domain, std::uint16_t port) const;
    // Any-origin access to this port.
    bool permissive_for(std::uint16_t port) const;
};

// Exact-request gate: the 23 request bytes yield policy XML plus NUL;
// anything else yields nothing and the caller closes silently.
std::optional<Bytes> handle_policy_request(const Bytes& request, const std::string& policy_xml);

class PolicyServer {
  public:
    PolicyServer(std::string policy_xml, std::uint16_t port = 0);
    ~PolicyServer();

    bool start();
    void stop();
    std::uint16_t port() const { return port_; }
    std::size_t served() const { return served_.load(); }
    std::size_t rejected() const { return rejected_.load(); }

  private:
    void loop();
    std::string xml_;
    std::uint16_t requested_port_;
    std::uint16_t port_ = 0;
    net::Listener listener_;
    std::thread thread_;
    std::atomic<bool> running_{false};
    std::atomic<std::size_t> served_{0};
    std::atomic<std::size_t> rejected_{0};
};

enum class ScanStatus { served, closed_silently, refused, timeout, malformed };

std::string_view scan_status_name(ScanStatus s);

// Scan verdict once permissiveness is judged against a port: a served policy
// is permissive or restrictive for it; refused, timed-out, and silently
// closed probes all read as absent.
enum class Outcome { permissive, restrictive, absent, malformed };

std::string_view outcome_name(Outcome o);

struct PolicyScan {
    ScanStatus status;
    std::optional<PolicyDocument> document;
    std::string raw;
    std::string detail;
    std::uint16_t eval_port = 443;

    bool permissive_for(std::uint16_t port) const {
        return document && document->permissive_for(port);
    }
    Outcome outcome() const;  // judged at eval_port
};

PolicyScan scan_policy(const std::string& host, std::uint16_t port, int timeout_ms = 5000,
                       std::uint16_t eval_port = 443);

}  // namespace proxyscope::policy
