#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "relay/harness/profile.hpp"

namespace relay::bench {

struct BenchSpec {
    harness::NetworkProfile profile;
    std::uint32_t file_count = 10;
    std::uint64_t file_size_bytes = 0;
    std::uint32_t parallelism = 4;
    std::uint32_t repetitions = 5;  // odd, so the median is a sample

    void validate() const;
};

struct BenchReport {
    std::string profile;
    double median_latency_ms = 0.0;
    double latency_spread = 0.0;
    double median_throughput_MBps = 0.0;  // decimal MB/s over wall time
    double relative_spread = 0.0;         // max deviation of throughput runs from median
    std::vector<double> latency_samples_ms;
    std::vector<double> run_samples_MBps;

    nlohmann::json to_json() const;
};

// Returns a copy with the bandwidth cap multiplied by factor; latency fields
// are untouched. Ratios between profiles survive uniform scaling, so a
// desk-scale run can stand in for the full-rate one.
harness::NetworkProfile scale_caps(const harness::NetworkProfile& profile, double factor);

// One full measurement: latency through a shaped echo, then `repetitions`
// complete agent-to-service transfer runs of file_count files behind a fresh
// shaper and storage service each time. Every run must commit every file; an
// integrity or upload failure aborts the bench.
BenchReport run_throughput_bench(const BenchSpec& spec);

struct RouteRatio {
    std::string profile;
    double latency_ratio = 1.0;     // profile latency / direct latency
    double throughput_ratio = 1.0;  // direct throughput / profile throughput
};

struct RouteComparison {
    std::string baseline;
    std::vector<RouteRatio> rows;  // baseline first

    nlohmann::json to_json() const;
};

// Ratios of every report against the direct-connection baseline. Throws
// ParamError when the baseline profile is absent and ConsistencyError when
// any profile beats the direct path on either axis.
RouteComparison compare_routes(const std::vector<BenchReport>& reports);

}  // namespace relay::bench
