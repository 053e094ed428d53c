#pragma once

#include <chrono>
#include <string>

#include "agentrec/common.hpp"
#include "agentrec/http_retry.hpp"

namespace agentrec::detail {

struct HttpFailure {
    int status = 0;  // 0: transport failure
    std::string body;
    std::string message;
};

class HttpError : public Error {
public:
    HttpError(HttpFailure f) : Error(f.message), failure(std::move(f)) {}
    HttpFailure failure;
};

/// POSTs `body` as JSON, retrying transport failures and retryable statuses
/// with capped exponential backoff. Throws HttpError once attempts run out or
/// on a non-retryable status.
json post_json(const std::string& base_url, const std::string& path, const json& body,
               const std::string& bearer_token, const RetryPolicy& retry, std::chrono::milliseconds timeout);

/// Value of environment variable `name`, or empty.
std::string env_or_empty(const std::string& name);

}  // namespace agentrec::detail
