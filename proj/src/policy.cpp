#include "proxyscope/policy.hpp"

#include <algorithm>
#include <charconv>

namespace proxyscope::policy {

Bytes policy_request_bytes() {
    Bytes out(kPolicyRequest.begin(), kPolicyRequest.end());
    out.push_back(0);
    return out;
}

bool AllowEntry::covers_port(std::uint16_t p) const {
    if (all_ports) return true;
    for (const PortRange& r : ports)
        if (r.contains(p)) return true;
    return false;
}

bool AllowEntry::covers_domain(std::string_view d) const {
    if (domain == "*") return true;
    if (iequals_ascii(domain, d)) return true;
    if (domain.size() > 2 && domain[0] == '*' && domain[1] == '.') {
        // Flash-style wildcard: "*.example.com" covers example.com and any
        // depth of subdomain.
        std::string_view base = std::string_view(domain).substr(2);
        if (iequals_ascii(base, d)) return true;
        if (d.size() > base.size() + 1) {
            std::string_view tail = d.substr(d.size() - base.size() - 1);
            if (tail[0] == '.' && iequals_ascii(tail.substr(1), base)) return true;
        }
    }
    return false;
}

namespace {

std::vector<PortRange> parse_ports(std::string_view spec, bool& all_ports,
                                   std::size_t err_offset) {
    std::vector<PortRange> out;
    all_ports = false;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        std::size_t comma = spec.find(',', pos);
        std::string_view item_raw =
            spec.substr(pos, comma == std::string_view::npos ? spec.size() - pos : comma - pos);
        pos = comma == std::string_view::npos ? spec.size() + 1 : comma + 1;
        std::string item = trim_ascii(item_raw);
        if (item.empty()) throw ParseError("empty to-ports item", err_offset);
        if (item == "*") {
            all_ports = true;
            continue;
        }
        auto parse_port = [&](std::string_view s) -> std::uint16_t {
            unsigned value = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
            if (ec != std::errc() || p != s.data() + s.size() || value == 0 || value > 65535)
                throw ParseError("bad port '" + std::string(s) + "' in to-ports", err_offset);
            return static_cast<std::uint16_t>(value);
        };
        std::size_t dash = item.find('-');
        if (dash == std::string::npos) {
            std::uint16_t p = parse_port(item);
            out.push_back({p, p});
        } else {
            std::uint16_t lo = parse_port(std::string_view(item).substr(0, dash));
            std::uint16_t hi = parse_port(std::string_view(item).substr(dash + 1));
            if (lo > hi) throw ParseError("inverted range in to-ports", err_offset);
            out.push_back({lo, hi});
        }
    }
    return out;
}

// Returns attribute value inside an element's text, or nullopt.
std::optional<std::string> attr_value(std::string_view element, std::string_view name) {
    std::size_t pos = 0;
    while (true) {
        std::size_t at = element.find(name, pos);
        if (at == std::string_view::npos) return std::nullopt;
        std::size_t after = at + name.size();
        // must be a whole attribute name followed by =
        bool boundary_left = at == 0 || element[at - 1] == ' ' || element[at - 1] == '\t' ||
                             element[at - 1] == '\n' || element[at - 1] == '\r';
        while (after < element.size() && (element[after] == ' ' || element[after] == '\t')) ++after;
        if (!boundary_left || after >= element.size() || element[after] != '=') {
            pos = at + 1;
            continue;
        }
        ++after;
        while (after < element.size() && (element[after] == ' ' || element[after] == '\t')) ++after;
        if (after >= element.size() || (element[after] != '"' && element[after] != '\''))
            return std::nullopt;
        char quote = element[after];
        std::size_t close = element.find(quote, after + 1);
        if (close == std::string_view::npos) return std::nullopt;
        return std::string(element.substr(after + 1, close - after - 1));
    }
}

}  // namespace

PolicyDocument PolicyDocument::parse(std::string_view xml_text) {
    PolicyDocument doc;
    doc.xml = std::string(xml_text);
    std::size_t root = xml_text.find("<cross-domain-policy");
    if (root == std::string_view::npos)
        throw ParseError("no cross-domain-policy element", 0);
    std::size_t pos = root;
    while (true) {
        std::size_t at = xml_text.find("<allow-access-from", pos);
        if (at == std::string_view::npos) break;
        std::size_t close = xml_text.find('>', at);
        if (close == std::string_view::npos)
            throw ParseError("unterminated allow-access-from element", at);
        std::string_view element = xml_text.substr(at, close - at);
        AllowEntry entry;
        auto domain = attr_value(element, "domain");
        if (!domain) throw ParseError("allow-access-from without domain", at);
        entry.domain = *domain;
        if (auto ports = attr_value(element, "to-ports"))
            entry.ports = parse_ports(*ports, entry.all_ports, at);
        // No to-ports: the entry grants nothing on a socket gate.
        doc.entries.push_back(std::move(entry));
        pos = close + 1;
    }
    return doc;
}

PolicyDocument PolicyDocument::permissive() { return allow("*", "*"); }

PolicyDocument PolicyDocument::allow(const std::string& domain, const std::string& to_ports) {
    std::string xml = "<?xml version=\"1.0\"?>\n<cross-domain-policy>\n  <allow-access-from domain=\"" +
                      domain + "\" to-ports=\"" + to_ports + "\"/>\n</cross-domain-policy>\n";
    return parse(xml);
}

bool PolicyDocument::allows(std::string_view domain, std::uint16_t port) const {
    for (const AllowEntry& e : entries)
        if (e.covers_domain(domain) && e.covers_port(port)) return true;
    return false;
}

bool PolicyDocument::permissive_for(std::uint16_t port) const {
    for (const AllowEntry& e : entries)
        if (e.domain == "*" && e.covers_port(port)) return true;
    return false;
}

std::optional<Bytes> handle_policy_request(const Bytes& request, const std::string& policy_xml) {
    Bytes expected = policy_request_bytes();
    if (request != expected) return std::nullopt;
    Bytes out(policy_xml.begin(), policy_xml.end());
    out.push_back(0);
    return out;
}

PolicyServer::PolicyServer(std::string policy_xml, std::uint16_t port)
    : xml_(std::move(policy_xml)), requested_port_(port) {}

PolicyServer::~PolicyServer() { stop(); }

bool PolicyServer::start() {
    auto listener = net::Listener::open(requested_port_);
    if (!listener) return false;
    listener_ = std::move(*listener);
    port_ = listener_.port();
    running_ = true;
    thread_ = std::thread([this] { loop(); });
    return true;
}

void PolicyServer::stop() {
    running_ = false;
    if (thread_.joinable()) thread_.join();
    listener_.close();
}

void PolicyServer::loop() {
    while (running_) {
        auto conn = listener_.accept(100);
        if (!conn) continue;
        Bytes request;
        std::uint8_t buf[64];
        net::Deadline dl = net::Deadline::in_ms(3000);
        bool saw_nul = false;
        while (request.size() <= policy_request_bytes().size()) {
            auto r = conn->read_some(buf, sizeof(buf), dl);
            if (r.status != net::IoStatus::ok) break;
            request.insert(request.end(), buf, buf + r.n);
            if (!request.empty() && request.back() == 0) {
                saw_nul = true;
                break;
            }
        }
        std::optional<Bytes> reply;
        if (saw_nul) reply = handle_policy_request(request, xml_);
        if (reply) {
            conn->write_all(*reply, net::Deadline::in_ms(3000));
            ++served_;
        } else {
            ++rejected_;  // silent close
        }
    }
}

std::string_view scan_status_name(ScanStatus s) {
    switch (s) {
        case ScanStatus::served: return "served";
        case ScanStatus::closed_silently: return "closed_silently";
        case ScanStatus::refused: return "refused";
        case ScanStatus::timeout: return "timeout";
        case ScanStatus::malformed: return "malformed";
    }
    return "?";
}

std::string_view outcome_name(Outcome o) {
    switch (o) {
        case Outcome::permissive: return "permissive";
        case Outcome::restrictive: return "restrictive";
        case Outcome::absent: return "absent";
        case Outcome::malformed: return "malformed";
    }
    return "?";
}

Outcome PolicyScan::outcome() const {
    switch (status) {
        case ScanStatus::served:
            return permissive_for(eval_port) ? Outcome::permissive : Outcome::restrictive;
        case ScanStatus::malformed: return Outcome::malformed;
        case ScanStatus::closed_silently:
        case ScanStatus::refused:
        case ScanStatus::timeout: return Outcome::absent;
    }
    return Outcome::absent;
}

PolicyScan scan_policy(const std::string& host, std::uint16_t port, int timeout_ms,
                       std::uint16_t eval_port) {
    PolicyScan out{ScanStatus::refused, std::nullopt, "", "", eval_port};
    auto conn = net::connect_to(host, port, timeout_ms);
    if (!conn.socket) {
        out.status = conn.error == net::ConnectError::timeout ? ScanStatus::timeout
                                                              : ScanStatus::refused;
        out.detail = conn.detail;
        return out;
    }
    net::Deadline dl = net::Deadline::in_ms(timeout_ms);
    if (!conn.socket->write_all(policy_request_bytes(), dl)) {
        out.status = ScanStatus::closed_silently;
        return out;
    }
    Bytes response;
    std::uint8_t buf[4096];
    bool saw_nul = false;
    while (response.size() < 64 * 1024) {
        auto r = conn.socket->read_some(buf, sizeof(buf), dl);
        if (r.status == net::IoStatus::ok) {
            response.insert(response.end(), buf, buf + r.n);
            if (std::find(response.begin(), response.end(), 0) != response.end()) {
                saw_nul = true;
                break;
            }
            continue;
        }
        if (r.status == net::IoStatus::timeout && response.empty()) {
            out.status = ScanStatus::timeout;
            return out;
        }
        break;
    }
    if (response.empty()) {
        out.status = ScanStatus::closed_silently;
        return out;
    }
    auto nul = std::find(response.begin(), response.end(), 0);
    if (!saw_nul && nul == response.end()) {
        out.status = ScanStatus::malformed;
        out.detail = "response not NUL-terminated";
        out.raw.assign(response.begin(), response.end());
        return out;
    }
    out.raw.assign(response.begin(), nul);
    try {
        out.document = PolicyDocument::parse(out.raw);
        out.status = ScanStatus::served;
    } catch (const ParseError& e) {
        out.status = ScanStatus::malformed;
        out.detail = e.what();
    }
    return out;
}

}  // namespace proxyscope::policy
