#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

namespace relay::harness {

double median(std::vector<double> values);

// Largest deviation from the median, as a fraction of the median.
double relative_spread(const std::vector<double>& values, double median_value);

struct LatencyOptions {
    int samples = 5;
    int warmup = 3;  // discarded rounds before sampling starts
    std::chrono::milliseconds timeout{5000};
};

struct LatencyResult {
    double median_ms = 0;
    double spread = 0;  // relative to the median
    std::vector<double> samples_ms;
};

// Round-trip time of 64-byte echoes against an echo upstream, one
// connection for all rounds. Throws NetworkError on connect failure or
// when a round exceeds the timeout.
LatencyResult measure_latency(const std::string& host, std::uint16_t port,
                              const LatencyOptions& options = {});

}  // namespace relay::harness
