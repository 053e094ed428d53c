#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>

namespace agentrec {

/// Capped exponential backoff for outbound HTTP calls.
struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds initial_delay{250};
    std::chrono::milliseconds max_delay{4'000};
    double multiplier = 2.0;

    /// Delay before retry number `retry` (1-based).
    std::chrono::milliseconds delay(int retry) const {
        double ms = static_cast<double>(initial_delay.count()) * std::pow(multiplier, retry - 1);
        ms = std::min(ms, static_cast<double>(max_delay.count()));
        return std::chrono::milliseconds(static_cast<long long>(ms));
    }
};

/// 429 and 5xx are worth retrying; other 4xx are not.
inline bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace agentrec
