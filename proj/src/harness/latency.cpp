#include "relay/harness/latency.hpp"

#include <algorithm>
#include <cmath>

#include "relay/core/errors.hpp"
#include "relay/harness/net.hpp"

namespace relay::harness {

using relay::NetworkError;
using relay::ParamError;

double median(std::vector<double> values) {
    if (values.empty()) throw ParamError("median of empty sample set");
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2]) / 2;
}

double relative_spread(const std::vector<double>& values, double median_value) {
    if (median_value <= 0) throw ParamError("relative spread needs a positive median");
    double worst = 0;
    for (double v : values) worst = std::max(worst, std::abs(v - median_value));
    return worst / median_value;
}

LatencyResult measure_latency(const std::string& host, std::uint16_t port,
                              const LatencyOptions& options) {
    if (options.samples < 1) throw ParamError("latency samples must be >= 1");
    auto sock = net::tcp_connect(host, port);
    net::set_nodelay(sock.fd());
    net::set_recv_timeout(sock.fd(), static_cast<int>(options.timeout.count()));

    char payload[64];
    for (int i = 0; i < 64; ++i) payload[i] = static_cast<char>('a' + i % 26);
    char reply[64];

    LatencyResult result;
    int rounds = options.warmup + options.samples;
    for (int i = 0; i < rounds; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        if (!net::send_all(sock.fd(), payload, sizeof(payload))) {
            throw NetworkError("echo send failed");
        }
        if (!net::recv_exact(sock.fd(), reply, sizeof(reply))) {
            throw NetworkError("echo endpoint unreachable (timeout or close)");
        }
        auto t1 = std::chrono::steady_clock::now();
        if (i < options.warmup) continue;
        result.samples_ms.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    result.median_ms = median(result.samples_ms);
    result.spread = relative_spread(result.samples_ms, result.median_ms);
    return result;
}

}  // namespace relay::harness
