#pragma once

#include <chrono>
#include <cstddef>
#include <mutex>

namespace relay::harness {

// Byte-rate limiter shared by all streams of one shaped link. Admission is
// booked against a virtual clock that may run ahead of real time by at most
// `depth` bytes worth, so sustained release is exactly `rate` and the burst
// allowance is exactly `depth`, independent of how many callers contend.
class TokenBucket {
public:
    // rate in bytes/second; depth in bytes. rate <= 0 disables limiting.
    TokenBucket(double rate, double depth);

    // Blocks until `bytes` tokens have been paid for.
    void consume(std::size_t bytes);

    double rate() const { return rate_; }
    double depth() const { return depth_; }

private:
    const double rate_;
    const double depth_;
    std::mutex mu_;
    // Instant at which every admitted byte is paid for.
    std::chrono::steady_clock::time_point vtime_;
};

}  // namespace relay::harness
