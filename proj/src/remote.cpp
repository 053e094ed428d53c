#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "agentrec/policy.hpp"
#include "agentrec/retrieval.hpp"
#include "http_post.hpp"

namespace agentrec {

namespace detail {

std::string env_or_empty(const std::string& name) {
    if (name.empty()) return {};
    const char* v = std::getenv(name.c_str());
    return v ? std::string(v) : std::string();
}

json post_json(const std::string& base_url, const std::string& path, const json& body,
               const std::string& bearer_token, const RetryPolicy& retry, std::chrono::milliseconds timeout) {
    const std::string endpoint = base_url + path;
    const std::string payload = body.dump();
    HttpFailure last;
    const int attempts = std::max(1, retry.max_attempts);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (attempt > 1) std::this_thread::sleep_for(retry.delay(attempt - 1));
        httplib::Client client(base_url);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        if (!bearer_token.empty()) client.set_bearer_token_auth(bearer_token);
        auto res = client.Post(path, payload, "application/json");
        if (!res) {
            last = {0, {}, fmt::format("{}: {}", endpoint, httplib::to_string(res.error()))};
            spdlog::debug("POST {} attempt {} failed: {}", endpoint, attempt, last.message);
            continue;
        }
        if (res->status >= 200 && res->status < 300) {
            json out = json::parse(res->body, nullptr, false);
            if (out.is_discarded()) throw HttpError({res->status, res->body, endpoint + ": response is not JSON"});
            return out;
        }
        last = {res->status, res->body, fmt::format("{}: HTTP {}", endpoint, res->status)};
        if (!retryable_status(res->status)) throw HttpError(last);
        spdlog::debug("POST {} attempt {} got HTTP {}", endpoint, attempt, res->status);
    }
    last.message = fmt::format("{} (after {} attempts)", last.message, attempts);
    throw HttpError(last);
}

}  // namespace detail

namespace {

class SlotGuard {
public:
    explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
    ~SlotGuard() { s_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::counting_semaphore<>& s_;
};

std::ptrdiff_t slots(std::size_t n) { return static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, n)); }

bool mentions_context_length(const std::string& body) {
    return body.find("context_length") != std::string::npos || body.find("context length") != std::string::npos ||
           body.find("maximum context") != std::string::npos;
}

}  // namespace

// ---------------------------------------------------------------------------
// RemotePolicy

RemotePolicy::RemotePolicy(RemotePolicyConfig config)
    : config_(std::move(config)), in_flight_(slots(config_.max_in_flight)) {
    if (!config_.trace_file.empty()) {
        trace_.open(config_.trace_file, std::ios::app);
        if (!trace_) throw Error("cannot open trace file " + config_.trace_file);
    }
}

RemotePolicy::~RemotePolicy() = default;

json RemotePolicy::request_body(const std::string& model, std::span<const Message> messages,
                                const SamplingParams& params, std::uint64_t seed) {
    json msgs = json::array();
    for (const auto& m : messages) {
        if (m.role == Role::tool) {
            msgs.push_back({{"role", "user"}, {"content", "<observation>\n" + m.content + "\n</observation>"}});
        } else {
            msgs.push_back({{"role", std::string(message_role_name(m.role))}, {"content", m.content}});
        }
    }
    return {{"model", model},
            {"messages", std::move(msgs)},
            {"temperature", params.temperature},
            {"top_p", params.top_p},
            {"max_tokens", params.max_tokens},
            // JSON numbers beyond 2^53 lose precision in many servers
            {"seed", seed & 0x7fffffff}};
}

void RemotePolicy::trace(const json& record) {
    if (!trace_.is_open()) return;
    std::lock_guard lock(trace_mu_);
    trace_ << record.dump() << '\n';
    trace_.flush();
}

std::string RemotePolicy::complete(std::span<const Message> messages, const SamplingParams& params,
                                   std::uint64_t seed) {
    params.validate();
    check_roles(messages);
    json body = request_body(config_.model, messages, params, seed);
    json response;
    {
        SlotGuard slot(in_flight_);
        try {
            response = detail::post_json(config_.base_url, config_.path, body, detail::env_or_empty(config_.auth_env),
                                         config_.retry, config_.timeout);
        } catch (const detail::HttpError& e) {
            trace({{"request", body}, {"error", e.what()}});
            if (e.failure.status == 400 && mentions_context_length(e.failure.body)) {
                throw ContextLengthExceeded(fmt::format("context length exceeded: {}", e.what()));
            }
            throw PolicyUnavailable(fmt::format("policy unavailable: {}", e.what()));
        }
    }
    trace({{"request", body}, {"response", response}});
    try {
        const auto& choice = response.at("choices").at(0);
        if (choice.value("finish_reason", "") == "length" && choice.at("message").at("content").is_null()) {
            throw ContextLengthExceeded("context length exceeded: empty completion");
        }
        return choice.at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw PolicyUnavailable(fmt::format("policy unavailable: malformed response from {}{}: {}", config_.base_url,
                                            config_.path, e.what()));
    }
}

// ---------------------------------------------------------------------------
// RemoteEmbedder

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config)
    : config_(std::move(config)), in_flight_(slots(config_.max_in_flight)), dimension_(config_.dimension) {
    if (config_.batch_size == 0) throw RetrievalError("embedding batch size must be >= 1");
}

RemoteEmbedder::~RemoteEmbedder() = default;

std::string RemoteEmbedder::tag() const {
    return fmt::format("remote-{}-d{}", config_.model.empty() ? config_.base_url : config_.model, dimension());
}

std::size_t RemoteEmbedder::dimension() const {
    std::lock_guard lock(mu_);
    return dimension_;
}

std::vector<std::vector<double>> RemoteEmbedder::embed_batch(std::span<const std::string> texts) {
    json body = {{"texts", json(std::vector<std::string>(texts.begin(), texts.end()))}};
    if (!config_.model.empty()) body["model"] = config_.model;
    json response;
    {
        SlotGuard slot(in_flight_);
        try {
            response = detail::post_json(config_.base_url, config_.path, body, detail::env_or_empty(config_.auth_env),
                                         config_.retry, config_.timeout);
        } catch (const detail::HttpError& e) {
            throw RetrievalError(fmt::format("embedding service unavailable: {}", e.what()));
        }
    }
    auto vectors = response.at("vectors").get<std::vector<std::vector<double>>>();
    if (vectors.size() != texts.size()) {
        throw RetrievalError(fmt::format("embedding service returned {} vectors for {} texts", vectors.size(),
                                         texts.size()));
    }
    std::lock_guard lock(mu_);
    for (const auto& v : vectors) {
        if (dimension_ == 0) dimension_ = v.size();
        if (v.size() != dimension_) {
            throw RetrievalError(fmt::format("embedding dimension {} differs from {}", v.size(), dimension_));
        }
    }
    return vectors;
}

std::vector<std::vector<double>> RemoteEmbedder::embed(std::span<const std::string> texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); i += config_.batch_size) {
        auto batch = embed_batch(texts.subspan(i, std::min(config_.batch_size, texts.size() - i)));
        for (auto& v : batch) out.push_back(std::move(v));
    }
    return out;
}

}  // namespace agentrec
