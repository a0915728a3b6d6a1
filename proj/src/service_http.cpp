#include <httplib.h>

#include <nlohmann/json.hpp>

#include "proxyscope/service.hpp"

namespace proxyscope::service {

using nlohmann::json;

struct HttpServer::Impl {
    httplib::Server server;
    std::thread thread;
};

HttpServer::HttpServer(ReportService& service, std::string bind_address)
    : service_(service), bind_address_(std::move(bind_address)), impl_(new Impl) {}

HttpServer::~HttpServer() { stop(); }

namespace {

std::string client_ip_for(const httplib::Request& req,
                          const std::optional<std::string>& trusted_proxy) {
    // The socket peer is authoritative; a forwarded header only counts when
    // the peer is the one proxy allowed to set it.
    if (trusted_proxy && req.remote_addr == *trusted_proxy && req.has_header("X-Forwarded-For")) {
        std::string xff = req.get_header_value("X-Forwarded-For");
        std::size_t comma = xff.find(',');
        std::string first = proxyscope::trim_ascii(
            comma == std::string::npos ? xff : xff.substr(0, comma));
        if (!first.empty()) return first;
    }
    return req.remote_addr;
}

}  // namespace

bool HttpServer::start(std::uint16_t port) {
    auto& server = impl_->server;

    server.Post("/report", [this](const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        res.set_header("Content-Type", "application/json");
        if (body.is_discarded() || !body.contains("target_host") ||
            !body.contains("target_port") || !body.contains("chain_pem") ||
            !body["target_port"].is_number_unsigned()) {
            res.status = 400;
            res.body = json{{"error", "undecodable"}, {"detail", "bad request body"}}.dump();
            return;
        }
        store::TargetKey target{body["target_host"].get<std::string>(),
                                body["target_port"].get<std::uint16_t>()};
        std::string client_ip = client_ip_for(req, service_.config().trusted_proxy);
        try {
            store::MeasurementRecord record =
                service_.ingest(client_ip, target, body["chain_pem"].get<std::string>());
            res.status = 200;
            res.body = json{{"id", record.id},
                            {"verdict", std::string(store::verdict_name(record.verdict))}}
                           .dump();
        } catch (const UnknownTargetError& e) {
            res.status = 404;
            res.body = json{{"error", "unknown_target"}, {"detail", e.what()}}.dump();
        } catch (const EmptyChainError& e) {
            res.status = 400;
            res.body = json{{"error", "empty_chain"}, {"detail", e.what()}}.dump();
        } catch (const ParseError& e) {
            res.status = 400;
            res.body = json{{"error", "undecodable"}, {"detail", e.what()}}.dump();
        } catch (const RetryableError& e) {
            res.status = 503;
            res.set_header("Retry-After", "60");
            res.body = json{{"error", "retryable"}, {"detail", e.what()}}.dump();
        }
    });

    server.Get("/records", [this](const httplib::Request& req, httplib::Response& res) {
        store::RecordFilter filter;
        if (req.has_param("country")) filter.country = req.get_param_value("country");
        if (req.has_param("host")) filter.host = req.get_param_value("host");
        if (req.has_param("port"))
            filter.port = static_cast<std::uint16_t>(std::stoul(req.get_param_value("port")));
        if (req.has_param("verdict")) {
            auto v = store::verdict_from_name(req.get_param_value("verdict"));
            if (!v) {
                res.status = 400;
                res.body = R"({"error":"undecodable","detail":"bad verdict filter"})";
                return;
            }
            filter.verdict = v;
        }
        if (req.has_param("category")) filter.category = req.get_param_value("category");
        if (req.has_param("from")) filter.from_iso = req.get_param_value("from");
        if (req.has_param("to")) filter.to_iso = req.get_param_value("to");
        std::string out;
        for (const auto& record : service_.record_store().query(filter)) {
            out += store::record_to_json_line(record);
            out += '\n';
        }
        res.status = 200;
        res.set_content(out, "application/x-ndjson");
    });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("ok\n", "text/plain");
    });

    if (port == 0) {
        int picked = server.bind_to_any_port(bind_address_);
        if (picked <= 0) return false;
        port_ = static_cast<std::uint16_t>(picked);
    } else {
        if (!server.bind_to_port(bind_address_, port)) return false;
        port_ = port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    // listen_after_bind needs a beat before the server accepts.
    for (int i = 0; i < 100 && !impl_->server.is_running(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    return impl_->server.is_running();
}

void HttpServer::stop() {
    if (!impl_) return;
    if (impl_->server.is_running()) impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace proxyscope::service
