#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "agentrec/common.hpp"
#include "agentrec/http_retry.hpp"
#include "agentrec/toolbox.hpp"

namespace httplib {
class Server;
}

namespace agentrec {

class GatewayError : public Error {
public:
    using Error::Error;
};

struct ToolRequest {
    std::string tool;
    json arguments = json::object();
    std::string request_id;
    std::optional<ToolContext> context;  // absent: default context
};

void to_json(json& j, const ToolRequest& r);
/// Throws GatewayError on a structurally invalid request.
void from_json(const json& j, ToolRequest& r);

struct ToolResponse {
    std::string request_id;
    bool ok = false;
    std::string payload;
    std::optional<std::string> error;

    friend bool operator==(const ToolResponse&, const ToolResponse&) = default;
};

void to_json(json& j, const ToolResponse& r);
void from_json(const json& j, ToolResponse& r);

/// What the server answers for a request; also the in-process reference.
ToolResponse handle_request(const Toolbox& toolbox, const ToolRequest& request);

struct GatewayConfig {
    std::string host = "127.0.0.1";
    int port = 0;  // 0: pick a free port
    std::string token_env = "AGENTREC_GATEWAY_TOKEN";
    std::string log_file;  // empty: no request log
    std::size_t log_max_bytes = 5 * 1024 * 1024;
    std::size_t log_max_files = 3;
};

class ToolServer {
public:
    ToolServer(std::shared_ptr<const Toolbox> toolbox, GatewayConfig config = {});
    ~ToolServer();
    ToolServer(const ToolServer&) = delete;
    ToolServer& operator=(const ToolServer&) = delete;

    /// Binds and serves on a background thread. Throws GatewayError if the
    /// port cannot be bound. Returns the bound port.
    int start();
    void stop();

    int port() const noexcept { return port_; }
    std::string base_url() const;

private:
    std::shared_ptr<const Toolbox> toolbox_;
    GatewayConfig config_;
    std::unique_ptr<httplib::Server> server_;
    std::string token_;
    std::shared_ptr<void> logger_;
    std::jthread thread_;
    int port_ = 0;
};

class GatewayClient {
public:
    explicit GatewayClient(std::string base_url, RetryPolicy retry = {},
                           std::chrono::milliseconds timeout = std::chrono::milliseconds(10'000),
                           std::string token_env = "AGENTREC_GATEWAY_TOKEN");

    /// Throws GatewayError naming the endpoint once retries are exhausted.
    ToolResponse call_remote(const ToolRequest& request) const;
    json specs() const;
    json health() const;

private:
    json get(const std::string& path) const;

    std::string base_url_;
    RetryPolicy retry_;
    std::chrono::milliseconds timeout_;
    std::string token_env_;
};

}  // namespace agentrec
