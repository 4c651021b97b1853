#include "relay/harness/token_bucket.hpp"

#include <thread>

namespace relay::harness {

namespace {

std::chrono::steady_clock::duration span_for(double bytes, double rate) {
    return std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(bytes / rate));
}

}  // namespace

TokenBucket::TokenBucket(double rate, double depth)
    : rate_(rate),
      depth_(depth),
      vtime_(std::chrono::steady_clock::now() - (rate > 0 ? span_for(depth, rate)
                                                          : std::chrono::steady_clock::duration{0})) {}

void TokenBucket::consume(std::size_t bytes) {
    if (rate_ <= 0) return;
    std::chrono::steady_clock::time_point due;
    {
        std::lock_guard lk(mu_);
        auto now = std::chrono::steady_clock::now();
        // vtime_ trails real time by at most depth/rate: that slack is the
        // burst allowance. Each caller books its own slot and waits for it,
        // so concurrent overdraws cannot stack into double-paid debt.
        auto earliest = now - span_for(depth_, rate_);
        if (vtime_ < earliest) vtime_ = earliest;
        vtime_ += span_for(static_cast<double>(bytes), rate_);
        due = vtime_;
    }
    std::this_thread::sleep_until(due);
}

}  // namespace relay::harness
