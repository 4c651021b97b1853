#include "relay/bench.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>

#include "relay/agent/agent.hpp"
#include "relay/core/errors.hpp"
#include "relay/core/util.hpp"
#include "relay/harness/echo.hpp"
#include "relay/harness/latency.hpp"
#include "relay/harness/shaper.hpp"
#include "relay/service/server.hpp"

namespace relay::bench {

namespace {

namespace fs = std::filesystem;

constexpr const char* kBenchUser = "bench";
constexpr const char* kBenchDevice = "bench-device";

struct ScratchDir {
    fs::path path;

    explicit ScratchDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("relay-bench-" + tag + "-" + core::random_hex(8));
        fs::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;
};

void fill_random_file(const fs::path& path, std::uint64_t size, std::uint64_t seed) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create bench file " + path.string());
    std::mt19937_64 rng(seed);
    std::vector<std::uint64_t> block(128 * 1024);  // 1 MiB of words
    std::uint64_t remaining = size;
    while (remaining > 0) {
        for (auto& w : block) w = rng();
        auto take = std::min<std::uint64_t>(remaining, block.size() * sizeof(std::uint64_t));
        out.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(take));
        remaining -= take;
    }
    if (!out) throw IoError("short write while creating " + path.string());
    out.close();
    fs::last_write_time(path, fs::file_time_type::clock::now() - std::chrono::hours(1));
}

}  // namespace

void BenchSpec::validate() const {
    profile.validate();
    if (file_count < 1) throw ValidationError("file_count must be at least 1");
    if (file_size_bytes < 1) throw ValidationError("file_size_bytes must be at least 1");
    if (parallelism < 1) throw ValidationError("parallelism must be at least 1");
    if (repetitions < 1 || repetitions % 2 == 0) {
        throw ValidationError("repetitions must be odd so the median is well-defined");
    }
}

nlohmann::json BenchReport::to_json() const {
    return {{"profile", profile},
            {"median_latency_ms", median_latency_ms},
            {"latency_spread", latency_spread},
            {"median_throughput_MBps", median_throughput_MBps},
            {"relative_spread", relative_spread},
            {"latency_samples_ms", latency_samples_ms},
            {"run_samples_MBps", run_samples_MBps}};
}

harness::NetworkProfile scale_caps(const harness::NetworkProfile& profile, double factor) {
    if (!(factor > 0.0)) throw ParamError("cap scale factor must be positive");
    auto scaled = profile;
    if (scaled.bandwidth_cap_MBps) *scaled.bandwidth_cap_MBps *= factor;
    return scaled;
}

BenchReport run_throughput_bench(const BenchSpec& spec) {
    spec.validate();

    BenchReport report;
    report.profile = spec.profile.name;

    {
        harness::EchoServer echo;
        harness::Shaper shaper(spec.profile, "127.0.0.1", echo.port());
        auto latency = harness::measure_latency("127.0.0.1", shaper.port());
        report.median_latency_ms = latency.median_ms;
        report.latency_spread = latency.spread;
        report.latency_samples_ms = latency.samples_ms;
    }

    // Content is generated once; each repetition hardlinks it into a fresh
    // staging tree so only the transfer itself is repeated.
    ScratchDir masters("masters");
    for (std::uint32_t i = 0; i < spec.file_count; ++i) {
        fill_random_file(masters.path / ("f" + std::to_string(i) + ".bin"), spec.file_size_bytes,
                         0x9e3779b97f4a7c15ull + i);
    }

    const std::string secret = core::random_hex(16);
    const std::uint64_t total_bytes =
        static_cast<std::uint64_t>(spec.file_count) * spec.file_size_bytes;

    for (std::uint32_t rep = 0; rep < spec.repetitions; ++rep) {
        ScratchDir run("run");
        auto staging = run.path / "staging";
        auto user_dir = staging / kBenchUser;
        fs::create_directories(user_dir);
        for (std::uint32_t i = 0; i < spec.file_count; ++i) {
            auto name = "f" + std::to_string(i) + ".bin";
            fs::create_hard_link(masters.path / name, user_dir / name);
        }

        service::ServerConfig server_cfg;
        server_cfg.data_root = run.path / "data";
        server_cfg.devices = {{kBenchDevice, secret, {kBenchUser}}};
        service::StorageServer server(server_cfg);
        server.start();

        harness::Shaper shaper(spec.profile, "127.0.0.1", server.port());

        agent::AgentConfig agent_cfg;
        agent_cfg.staging_root = staging;
        agent_cfg.server_url = "http://127.0.0.1:" + std::to_string(shaper.port());
        agent_cfg.credential = {kBenchDevice, secret, {kBenchUser}};
        agent_cfg.stability_window = std::chrono::milliseconds(0);
        agent_cfg.max_active_files = spec.parallelism;
        agent_cfg.upload.parallelism = spec.parallelism;

        const auto t0 = std::chrono::steady_clock::now();
        agent::Agent agent(agent_cfg);
        auto pass = agent.run_once();
        const auto t1 = std::chrono::steady_clock::now();

        if (pass.committed != spec.file_count) {
            throw Error("bench run " + std::to_string(rep + 1) + " on profile " +
                        spec.profile.name + " committed " + std::to_string(pass.committed) +
                        " of " + std::to_string(spec.file_count) + " files");
        }
        const double seconds = std::chrono::duration<double>(t1 - t0).count();
        report.run_samples_MBps.push_back(static_cast<double>(total_bytes) / seconds / 1e6);

        shaper.stop();
        server.stop();
    }

    report.median_throughput_MBps = harness::median(report.run_samples_MBps);
    report.relative_spread =
        harness::relative_spread(report.run_samples_MBps, report.median_throughput_MBps);
    return report;
}

nlohmann::json RouteComparison::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"profile", r.profile},
                             {"latency_ratio", r.latency_ratio},
                             {"throughput_ratio", r.throughput_ratio}});
    }
    return {{"baseline", baseline}, {"rows", rows_json}};
}

RouteComparison compare_routes(const std::vector<BenchReport>& reports) {
    const BenchReport* direct = nullptr;
    for (const auto& r : reports) {
        if (r.profile == harness::kDirectProfileName) direct = &r;
    }
    if (!direct) {
        throw ParamError(std::string("comparison requires a \"") + harness::kDirectProfileName +
                         "\" report");
    }
    if (direct->median_latency_ms <= 0.0 || direct->median_throughput_MBps <= 0.0) {
        throw ParamError("direct baseline has no usable measurements");
    }

    RouteComparison cmp;
    cmp.baseline = direct->profile;
    cmp.rows.push_back({direct->profile, 1.0, 1.0});
    for (const auto& r : reports) {
        if (&r == direct) continue;
        RouteRatio row;
        row.profile = r.profile;
        row.latency_ratio = r.median_latency_ms / direct->median_latency_ms;
        row.throughput_ratio = direct->median_throughput_MBps / r.median_throughput_MBps;
        if (row.latency_ratio < 1.0 || row.throughput_ratio < 1.0) {
            throw ConsistencyError("profile " + r.profile +
                                   " outperformed the direct connection, which contradicts the "
                                   "modeled topology");
        }
        cmp.rows.push_back(row);
    }
    return cmp;
}

}  // namespace relay::bench
