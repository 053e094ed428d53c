#include "agentrec/gateway.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/sinks/rotating_file_sink.h>
#include <spdlog/spdlog.h>

#include "http_post.hpp"

namespace agentrec {

void to_json(json& j, const ToolRequest& r) {
    j = json{{"tool", r.tool}, {"arguments", r.arguments}, {"request_id", r.request_id}};
    if (r.context) j["context"] = *r.context;
}

void from_json(const json& j, ToolRequest& r) {
    if (!j.is_object()) throw GatewayError("request body must be a JSON object");
    auto tool = j.find("tool");
    if (tool == j.end() || !tool->is_string()) throw GatewayError("request needs a string \"tool\"");
    r = {};
    r.tool = tool->get<std::string>();
    if (auto args = j.find("arguments"); args != j.end() && !args->is_null()) {
        if (!args->is_object()) throw GatewayError("\"arguments\" must be an object");
        r.arguments = *args;
    }
    if (auto id = j.find("request_id"); id != j.end() && !id->is_null()) {
        if (!id->is_string()) throw GatewayError("\"request_id\" must be a string");
        r.request_id = id->get<std::string>();
    }
    if (auto ctx = j.find("context"); ctx != j.end() && !ctx->is_null()) {
        try {
            r.context = ctx->get<ToolContext>();
        } catch (const std::exception& e) {
            throw GatewayError(fmt::format("invalid \"context\": {}", e.what()));
        }
    }
}

void to_json(json& j, const ToolResponse& r) {
    j = json{{"request_id", r.request_id}, {"ok", r.ok}, {"payload", r.payload}};
    j["error"] = r.error ? json(*r.error) : json(nullptr);
}

void from_json(const json& j, ToolResponse& r) {
    r.request_id = j.at("request_id").get<std::string>();
    r.ok = j.at("ok").get<bool>();
    r.payload = j.at("payload").get<std::string>();
    r.error.reset();
    if (j.contains("error") && !j.at("error").is_null()) r.error = j.at("error").get<std::string>();
}

ToolResponse handle_request(const Toolbox& toolbox, const ToolRequest& request) {
    auto obs = toolbox.dispatch(ToolCall{request.tool, request.arguments}, request.context.value_or(ToolContext{}));
    return {request.request_id, obs.ok, std::move(obs.payload), std::move(obs.error)};
}

// ---------------------------------------------------------------------------
// Server

namespace {
void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}
}  // namespace

ToolServer::ToolServer(std::shared_ptr<const Toolbox> toolbox, GatewayConfig config)
    : toolbox_(std::move(toolbox)), config_(std::move(config)) {
    if (!toolbox_) throw GatewayError("tool server needs a toolbox");
    token_ = detail::env_or_empty(config_.token_env);
    if (!config_.log_file.empty()) {
        auto sink = std::make_shared<spdlog::sinks::rotating_file_sink_mt>(config_.log_file, config_.log_max_bytes,
                                                                           config_.log_max_files);
        auto logger = std::make_shared<spdlog::logger>("gateway", sink);
        logger->flush_on(spdlog::level::info);
        logger_ = logger;
    }
}

ToolServer::~ToolServer() { stop(); }

std::string ToolServer::base_url() const { return fmt::format("http://{}:{}", config_.host, port_); }

int ToolServer::start() {
    if (server_) throw GatewayError("tool server already started");
    server_ = std::make_unique<httplib::Server>();
    server_->new_task_queue = [] { return new httplib::ThreadPool(16); };
    auto logger = std::static_pointer_cast<spdlog::logger>(logger_);
    auto authorized = [this](const httplib::Request& req) {
        return token_.empty() || req.get_header_value("Authorization") == "Bearer " + token_;
    };

    server_->Post("/tools/call", [this, logger, authorized](const httplib::Request& req, httplib::Response& res) {
        if (!authorized(req)) return send_json(res, 401, {{"error", "missing or invalid bearer token"}});
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded()) return send_json(res, 400, {{"error", "request body is not valid JSON"}});
        ToolRequest request;
        try {
            request = body.get<ToolRequest>();
        } catch (const std::exception& e) {
            return send_json(res, 400, {{"error", e.what()}});
        }
        auto response = handle_request(*toolbox_, request);
        if (logger) logger->info("call {} id={} ok={}", request.tool, request.request_id, response.ok);
        send_json(res, 200, response);
    });
    server_->Get("/tools/specs", [this, authorized](const httplib::Request& req, httplib::Response& res) {
        if (!authorized(req)) return send_json(res, 401, {{"error", "missing or invalid bearer token"}});
        send_json(res, 200, toolbox_->registry().document());
    });
    server_->Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200,
                  {{"status", "ok"},
                   {"tools", toolbox_->registry().specs().size()},
                   {"content_hashes", toolbox_->indices().content_hashes}});
    });

    if (config_.port == 0) {
        port_ = server_->bind_to_any_port(config_.host);
        if (port_ <= 0) throw GatewayError(fmt::format("cannot bind {} on any port", config_.host));
    } else {
        if (!server_->bind_to_port(config_.host, config_.port)) {
            throw GatewayError(fmt::format("cannot bind {}:{}", config_.host, config_.port));
        }
        port_ = config_.port;
    }
    thread_ = std::jthread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    if (logger) logger->info("serving on {}", base_url());
    return port_;
}

void ToolServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

// ---------------------------------------------------------------------------
// Client

GatewayClient::GatewayClient(std::string base_url, RetryPolicy retry, std::chrono::milliseconds timeout,
                             std::string token_env)
    : base_url_(std::move(base_url)), retry_(retry), timeout_(timeout), token_env_(std::move(token_env)) {}

ToolResponse GatewayClient::call_remote(const ToolRequest& request) const {
    try {
        auto body = detail::post_json(base_url_, "/tools/call", request, detail::env_or_empty(token_env_), retry_,
                                      timeout_);
        return body.get<ToolResponse>();
    } catch (const detail::HttpError& e) {
        throw GatewayError(fmt::format("tool gateway call failed: {}", e.what()));
    } catch (const json::exception& e) {
        throw GatewayError(fmt::format("tool gateway at {} sent a malformed response: {}", base_url_, e.what()));
    }
}

json GatewayClient::get(const std::string& path) const {
    const std::string endpoint = base_url_ + path;
    const auto token = detail::env_or_empty(token_env_);
    std::string last;
    for (int attempt = 1; attempt <= std::max(1, retry_.max_attempts); ++attempt) {
        if (attempt > 1) std::this_thread::sleep_for(retry_.delay(attempt - 1));
        httplib::Client client(base_url_);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        if (!token.empty()) client.set_bearer_token_auth(token);
        auto res = client.Get(path);
        if (!res) {
            last = httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) return json::parse(res->body);
        last = fmt::format("HTTP {}", res->status);
        if (!retryable_status(res->status)) break;
    }
    throw GatewayError(fmt::format("tool gateway call failed: {}: {}", endpoint, last));
}

json GatewayClient::specs() const { return get("/tools/specs"); }
json GatewayClient::health() const { return get("/healthz"); }

}  // namespace agentrec
