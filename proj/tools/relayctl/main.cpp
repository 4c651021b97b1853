// relayctl: one binary hosting the staging agent, the storage service, the
// network bench and the usage stats reader. Exit codes are stable: 0 success,
// 1 runtime failure, 2 usage error, 3 assertion failure.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spdlog/sinks/stdout_color_sinks.h"
#include "spdlog/spdlog.h"

#include "relay/agent/agent.hpp"
#include "relay/bench.hpp"
#include "relay/core/errors.hpp"
#include "relay/core/manifest.hpp"
#include "relay/core/util.hpp"
#include "relay/harness/profile.hpp"
#include "relay/service/server.hpp"
#include "relay/service/stats.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitAssertion = 3;

// Bad flags or flag-named inputs that fail pre-flight validation.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A check requested via --assert-ordering did not hold.
struct AssertionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};

void handle_stop_signal(int) { g_stop.store(true); }

void install_stop_handlers() {
    std::signal(SIGINT, handle_stop_signal);
    std::signal(SIGTERM, handle_stop_signal);
}

// Values shared across subcommands, resolved as flags over environment over
// config file.
struct GlobalConfig {
    std::string server_url;
    std::string credential_path;
    std::string log_level = "info";
    std::string data_root;
};

struct GlobalFlags {
    std::string config_file;
    std::string server_url;
    std::string credential_path;
    std::string log_level;
    std::string data_root;
};

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? v : "";
}

GlobalConfig load_config_file(const std::string& path) {
    GlobalConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw UsageError("config file unreadable: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("config file " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw UsageError("config file " + path + " must hold a JSON object");
    auto take = [&](const char* key, std::string& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_string())
            throw UsageError("config key " + std::string(key) + " in " + path +
                             " must be a string");
        out = j[key].get<std::string>();
    };
    take("server_url", cfg.server_url);
    take("credential_path", cfg.credential_path);
    take("log_level", cfg.log_level);
    take("data_root", cfg.data_root);
    return cfg;
}

GlobalConfig resolve_config(const GlobalFlags& flags) {
    GlobalConfig cfg = load_config_file(flags.config_file);
    if (auto v = env_or_empty("RELAY_SERVER_URL"); !v.empty()) cfg.server_url = v;
    if (auto v = env_or_empty("RELAY_CREDENTIAL_FILE"); !v.empty()) cfg.credential_path = v;
    if (!flags.server_url.empty()) cfg.server_url = flags.server_url;
    if (!flags.credential_path.empty()) cfg.credential_path = flags.credential_path;
    if (!flags.log_level.empty()) cfg.log_level = flags.log_level;
    if (!flags.data_root.empty()) cfg.data_root = flags.data_root;
    return cfg;
}

void apply_log_level(const std::string& level) {
    static const std::map<std::string, spdlog::level::level_enum> levels = {
        {"trace", spdlog::level::trace}, {"debug", spdlog::level::debug},
        {"info", spdlog::level::info},   {"warn", spdlog::level::warn},
        {"error", spdlog::level::err},   {"off", spdlog::level::off},
    };
    auto it = levels.find(level);
    if (it == levels.end())
        throw UsageError("unknown log level \"" + level + "\" (trace|debug|info|warn|error|off)");
    spdlog::set_level(it->second);
}

std::uint64_t parse_size_flag(const std::string& text, const char* flag) {
    try {
        return relay::core::parse_size(text);
    } catch (const relay::ParamError& e) {
        throw UsageError(std::string(flag) + ": " + e.what());
    }
}

std::chrono::milliseconds parse_duration_flag(const std::string& text, const char* flag) {
    try {
        return relay::core::parse_duration(text);
    } catch (const relay::ParamError& e) {
        throw UsageError(std::string(flag) + ": " + e.what());
    }
}

std::int64_t parse_time_flag(const std::string& text, const char* flag) {
    try {
        return relay::core::parse_iso_utc(text);
    } catch (const relay::ParamError& e) {
        throw UsageError(std::string(flag) + ": " + e.what());
    }
}

// ---------------------------------------------------------------- agent run

struct AgentFlags {
    std::string staging;
    std::string server;
    std::string credential;
    std::string journal;
    std::string chunk_size = "8MiB";
    std::string stability_window = "5s";
    std::string poll_interval = "1s";
    std::uint32_t parallelism = 4;
    std::uint32_t max_active_files = 2;
    std::string category = "uncategorized";
    bool once = false;
};

int run_agent(const GlobalConfig& global, const AgentFlags& f) {
    std::string server = !f.server.empty() ? f.server : global.server_url;
    if (server.empty())
        throw UsageError("no server url: pass --server or set RELAY_SERVER_URL");
    std::string credential = !f.credential.empty() ? f.credential : global.credential_path;
    if (credential.empty())
        throw UsageError("no credential file: pass --credential or set RELAY_CREDENTIAL_FILE");
    if (!fs::is_directory(f.staging))
        throw UsageError("staging path " + f.staging + " is not a directory");

    relay::agent::AgentConfig cfg;
    cfg.staging_root = f.staging;
    cfg.server_url = server;
    try {
        cfg.credential = relay::agent::load_credential(credential);
    } catch (const relay::Error& e) {
        throw UsageError("credential file " + credential + ": " + e.what());
    }
    if (!f.journal.empty()) cfg.journal_path = f.journal;
    cfg.chunk_size = parse_size_flag(f.chunk_size, "--chunk-size");
    cfg.stability_window = parse_duration_flag(f.stability_window, "--stability-window");
    cfg.poll_interval = parse_duration_flag(f.poll_interval, "--poll-interval");
    cfg.max_active_files = f.max_active_files;
    cfg.upload.parallelism = f.parallelism;
    try {
        cfg.category = relay::core::category_from_string(f.category);
    } catch (const relay::Error& e) {
        throw UsageError(std::string("--category: ") + e.what());
    }

    relay::agent::Agent agent(std::move(cfg));
    if (f.once) {
        auto summary = agent.run_once();
        json out{{"committed", summary.committed},
                 {"failed", summary.failed},
                 {"skipped_unregistered", summary.skipped_unregistered}};
        std::cout << out.dump(2) << "\n";
        return summary.failed == 0 ? kExitOk : kExitFailure;
    }
    install_stop_handlers();
    agent.run(g_stop);
    spdlog::info("agent stopped cleanly");
    return kExitOk;
}

// -------------------------------------------------------------------- serve

struct ServeFlags {
    std::string data_root;
    std::string listen = "127.0.0.1:8080";
    std::string quota = "1TiB";
    std::string devices;
    std::string org_map;
    std::string token_ttl = "3600s";
};

int run_serve(const GlobalConfig& global, const ServeFlags& f) {
    std::string root = !f.data_root.empty() ? f.data_root : global.data_root;
    if (root.empty()) throw UsageError("no data root: pass --data-root");

    auto colon = f.listen.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == f.listen.size())
        throw UsageError("--listen wants host:port, got \"" + f.listen + "\"");
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(f.listen.substr(colon + 1), &used);
        if (used != f.listen.size() - colon - 1) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
        throw UsageError("--listen port in \"" + f.listen + "\" is not a number");
    }
    if (port < 0 || port > 65535)
        throw UsageError("--listen port " + std::to_string(port) + " is out of range");

    relay::service::ServerConfig cfg;
    cfg.data_root = root;
    cfg.listen_host = f.listen.substr(0, colon);
    cfg.listen_port = port;
    cfg.quota.per_user_limit = parse_size_flag(f.quota, "--quota");
    cfg.token_ttl = std::chrono::duration_cast<std::chrono::seconds>(
        parse_duration_flag(f.token_ttl, "--token-ttl"));
    if (cfg.token_ttl.count() <= 0) throw UsageError("--token-ttl must be at least one second");
    if (!f.devices.empty()) {
        try {
            cfg.devices = relay::service::load_device_records(f.devices);
        } catch (const relay::Error& e) {
            throw UsageError("device table " + f.devices + ": " + e.what());
        }
    }
    if (!f.org_map.empty()) {
        try {
            cfg.org_map = relay::service::load_org_map(f.org_map);
        } catch (const relay::Error& e) {
            throw UsageError("org map " + f.org_map + ": " + e.what());
        }
    }

    relay::service::StorageServer server(std::move(cfg));
    server.start();
    std::cout << "serving on " << server.base_url() << std::endl;
    install_stop_handlers();
    while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
    spdlog::info("service stopped cleanly");
    return kExitOk;
}

// -------------------------------------------------------------------- bench

struct BenchFlags {
    std::vector<std::string> profiles;
    bool all_profiles = false;
    bool dump_profiles = false;
    bool assert_ordering = false;
    bool human = false;
    std::uint32_t files = 10;
    std::string size = "16MiB";
    std::uint32_t parallelism = 4;
    std::uint32_t reps = 5;
    double scale = 1.0;
    std::string catalog;
    std::string csv;
};

void write_bench_csv(const std::string& path,
                     const std::vector<relay::bench::BenchReport>& reports) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw relay::IoError("cannot write csv file " + path);
    out << "profile,run,latency_ms,throughput_MBps\n";
    for (const auto& r : reports) {
        for (std::size_t i = 0; i < r.run_samples_MBps.size(); ++i) {
            out << r.profile << ',' << i + 1 << ',' << r.median_latency_ms << ','
                << r.run_samples_MBps[i] << '\n';
        }
    }
    if (!out.flush()) throw relay::IoError("short write to csv file " + path);
}

const relay::bench::BenchReport& report_named(
    const std::vector<relay::bench::BenchReport>& reports, const char* name) {
    for (const auto& r : reports) {
        if (r.profile == name) return r;
    }
    throw UsageError("--assert-ordering needs profile \"" + std::string(name) +
                     "\" in the run; use --all-profiles with the builtin catalog");
}

// The modeled routes sort by bandwidth cap; the two cloud paths sit close
// enough that only a weak inequality is expected between them.
void check_throughput_ordering(const std::vector<relay::bench::BenchReport>& reports) {
    struct Edge {
        const char* fast;
        const char* slow;
        bool strict;
    };
    static const Edge expected[] = {
        {"arim-jupyter-direct", "fugaku-west", true}, {"fugaku-west", "wisteria-east", true},
        {"wisteria-east", "azure-east", true},        {"azure-east", "azure-west", false},
        {"azure-west", "campus-gateway", true},
    };
    for (const auto& edge : expected) {
        double fast = report_named(reports, edge.fast).median_throughput_MBps;
        double slow = report_named(reports, edge.slow).median_throughput_MBps;
        bool ok = edge.strict ? fast > slow : fast >= slow;
        if (!ok) {
            char buf[192];
            std::snprintf(buf, sizeof(buf),
                          "throughput ordering violated: %s at %.2f MB/s vs %s at %.2f MB/s",
                          edge.fast, fast, edge.slow, slow);
            throw AssertionFailure(buf);
        }
    }
}

void print_bench_table(const std::vector<relay::bench::BenchReport>& reports,
                       const std::optional<relay::bench::RouteComparison>& cmp) {
    std::printf("%-22s %12s %16s %9s\n", "profile", "latency_ms", "throughput_MBps",
                "spread");
    for (const auto& r : reports) {
        std::printf("%-22s %12.3f %16.2f %8.1f%%\n", r.profile.c_str(), r.median_latency_ms,
                    r.median_throughput_MBps, r.relative_spread * 100.0);
    }
    if (!cmp) return;
    std::printf("\nratios against %s\n", cmp->baseline.c_str());
    std::printf("%-22s %14s %18s\n", "profile", "latency_ratio", "throughput_ratio");
    for (const auto& row : cmp->rows) {
        std::printf("%-22s %14.2f %18.2f\n", row.profile.c_str(), row.latency_ratio,
                    row.throughput_ratio);
    }
}

int run_bench(const BenchFlags& f) {
    std::vector<relay::harness::NetworkProfile> catalog;
    if (f.catalog.empty()) {
        catalog = relay::harness::builtin_profiles();
    } else {
        try {
            catalog = relay::harness::load_profile_catalog(f.catalog);
        } catch (const relay::Error& e) {
            throw UsageError("profile catalog " + f.catalog + ": " + e.what());
        }
    }
    if (f.dump_profiles) {
        json out = json::array();
        for (const auto& p : catalog) out.push_back(p.to_json());
        std::cout << out.dump(2) << "\n";
        return kExitOk;
    }

    std::vector<relay::harness::NetworkProfile> selected;
    if (f.all_profiles) {
        selected = catalog;
    } else {
        if (f.profiles.empty())
            throw UsageError("pick --profile <name> (repeatable) or --all-profiles");
        for (const auto& name : f.profiles) {
            const auto* p = relay::harness::find_profile(catalog, name);
            if (!p) throw UsageError("profile \"" + name + "\" is not in the catalog");
            selected.push_back(*p);
        }
    }
    if (f.scale <= 0.0) throw UsageError("--scale must be positive");

    std::uint64_t size_bytes = parse_size_flag(f.size, "--size");
    std::vector<relay::bench::BenchReport> reports;
    for (const auto& profile : selected) {
        relay::bench::BenchSpec spec;
        spec.profile = relay::bench::scale_caps(profile, f.scale);
        spec.file_count = f.files;
        spec.file_size_bytes = size_bytes;
        spec.parallelism = f.parallelism;
        spec.repetitions = f.reps;
        try {
            spec.validate();
        } catch (const relay::ValidationError& e) {
            throw UsageError(e.what());
        }
        spdlog::info("bench: profile {} ({} x {} bytes, {} streams, {} reps)", profile.name,
                     f.files, size_bytes, f.parallelism, f.reps);
        reports.push_back(relay::bench::run_throughput_bench(spec));
        const auto& r = reports.back();
        spdlog::info("bench: {} median {:.2f} MB/s, latency {:.3f} ms", r.profile,
                     r.median_throughput_MBps, r.median_latency_ms);
        if (r.relative_spread > 0.05)
            spdlog::warn("bench: {} throughput spread {:.1f}% exceeds the 5% stability bound",
                         r.profile, r.relative_spread * 100.0);
    }
    if (!f.csv.empty()) write_bench_csv(f.csv, reports);

    bool have_direct = false;
    for (const auto& r : reports)
        if (r.profile == relay::harness::kDirectProfileName) have_direct = true;
    std::optional<relay::bench::RouteComparison> cmp;
    if (reports.size() >= 2 && have_direct) {
        try {
            cmp = relay::bench::compare_routes(reports);
        } catch (const relay::ConsistencyError& e) {
            if (f.assert_ordering) throw AssertionFailure(e.what());
            spdlog::warn("route comparison skipped: {}", e.what());
        }
    }
    if (f.assert_ordering) check_throughput_ordering(reports);

    if (f.human) {
        print_bench_table(reports, cmp);
        return kExitOk;
    }
    json out;
    if (reports.size() == 1 && !cmp) {
        out = reports[0].to_json();
    } else {
        json arr = json::array();
        for (const auto& r : reports) arr.push_back(r.to_json());
        out["reports"] = std::move(arr);
        if (cmp) out["comparison"] = cmp->to_json();
    }
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

// -------------------------------------------------------------------- stats

struct StatsFlags {
    std::string ledger;
    std::string server;
    std::string credential;
    std::string from;
    std::string to;
    std::string cumulative_by;
    std::string org_map;
    bool human = false;
};

void print_report_row(const json& report) {
    const auto& volume = report.at("volume_by_category");
    const auto& files = report.at("file_count_by_category");
    for (const char* cat : {"experimental", "theoretical", "uncategorized"}) {
        std::printf("  %-14s %10llu files %16llu bytes\n", cat,
                    static_cast<unsigned long long>(files.at(cat).get<std::uint64_t>()),
                    static_cast<unsigned long long>(volume.at(cat).get<std::uint64_t>()));
    }
    std::printf("  %-14s %10llu files %16llu bytes\n", "total",
                static_cast<unsigned long long>(report.at("file_count_total").get<std::uint64_t>()),
                static_cast<unsigned long long>(report.at("total_volume").get<std::uint64_t>()));
}

void print_stats_table(const json& out) {
    if (out.contains("series")) {
        for (const auto& entry : out.at("series")) {
            const auto& report = entry.at("report");
            std::printf("%s  users %llu\n", entry.at("month").get<std::string>().c_str(),
                        static_cast<unsigned long long>(report.at("user_count").get<std::uint64_t>()));
            print_report_row(report);
        }
        return;
    }
    std::printf("period %s .. %s\n", out.at("period").at("from").get<std::string>().c_str(),
                out.at("period").at("to").get<std::string>().c_str());
    std::printf("users %llu",
                static_cast<unsigned long long>(out.at("user_count").get<std::uint64_t>()));
    if (out.contains("org_count"))
        std::printf("  orgs %llu",
                    static_cast<unsigned long long>(out.at("org_count").get<std::uint64_t>()));
    std::printf("\n");
    print_report_row(out);
}

int run_stats(const GlobalConfig& global, const StatsFlags& f) {
    bool use_ledger = !f.ledger.empty();
    std::string server = !f.server.empty() ? f.server : global.server_url;
    if (!use_ledger && server.empty())
        throw UsageError("give --ledger <file> or --server <url>");
    if (use_ledger && !f.server.empty())
        throw UsageError("--ledger and --server are mutually exclusive");
    if (!f.cumulative_by.empty() && f.cumulative_by != "month")
        throw UsageError("--cumulative-by supports only \"month\"");

    std::int64_t from_ms = 0;
    std::int64_t to_ms = relay::core::now_ms() + 1;
    if (!f.from.empty()) from_ms = parse_time_flag(f.from, "--from");
    if (!f.to.empty()) to_ms = parse_time_flag(f.to, "--to");

    json out;
    if (use_ledger) {
        // A fresh store legitimately has no ledger yet, so the reader treats
        // absence as empty; a path typed at the CLI deserves a hard error.
        if (std::ifstream probe(f.ledger); !probe)
            throw relay::IoError("ledger file unreadable: " + f.ledger);
        auto events = relay::service::read_usage_ledger(f.ledger);
        std::optional<relay::service::OrgMap> org_map;
        if (!f.org_map.empty()) org_map = relay::service::load_org_map(f.org_map);
        const relay::service::OrgMap* om = org_map ? &*org_map : nullptr;
        if (f.cumulative_by == "month") {
            json series = json::array();
            for (const auto& [month, report] :
                 relay::service::cumulative_monthly(events, from_ms, to_ms, om)) {
                series.push_back({{"month", month}, {"report", report.to_json()}});
            }
            out = json{{"series", std::move(series)}};
        } else {
            out = relay::service::aggregate_stats(events, from_ms, to_ms, om).to_json();
        }
    } else {
        if (!f.org_map.empty())
            throw UsageError("--org-map applies only to --ledger; a server uses its own map");
        std::string credential = !f.credential.empty() ? f.credential : global.credential_path;
        if (credential.empty())
            throw UsageError(
                "stats from a server needs --credential or RELAY_CREDENTIAL_FILE");
        relay::agent::DeviceCredential cred;
        try {
            cred = relay::agent::load_credential(credential);
        } catch (const relay::Error& e) {
            throw UsageError("credential file " + credential + ": " + e.what());
        }
        std::vector<std::string> params;
        if (!f.from.empty()) params.push_back("from=" + f.from);
        if (!f.to.empty()) params.push_back("to=" + f.to);
        if (f.cumulative_by == "month") params.push_back("cumulative=month");
        std::string query;
        for (const auto& p : params) {
            if (!query.empty()) query += "&";
            query += p;
        }
        relay::agent::ServiceClient client(server, cred);
        out = client.get_stats(query);
    }

    if (f.human) {
        print_stats_table(out);
    } else {
        std::cout << out.dump(2) << "\n";
    }
    return kExitOk;
}

// -------------------------------------------------------------- config show

int run_config_show(const GlobalConfig& cfg) {
    json out{{"server_url", cfg.server_url},
             {"credential_path", cfg.credential_path},
             {"log_level", cfg.log_level},
             {"data_root", cfg.data_root}};
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    // structured output owns stdout; diagnostics go to stderr
    spdlog::set_default_logger(spdlog::stderr_color_mt("relayctl"));

    CLI::App app{"staged file relay: agent, service, bench and stats in one binary"};
    app.require_subcommand(1);

    GlobalFlags global;
    app.add_option("--config", global.config_file, "JSON config file with default settings");
    app.add_option("--log-level", global.log_level, "trace|debug|info|warn|error|off");

    auto* agent = app.add_subcommand("agent", "staging-volume agent");
    agent->require_subcommand(1);
    agent->fallthrough();
    AgentFlags agent_flags;
    auto* agent_run = agent->add_subcommand("run", "scan the staging volume and upload");
    agent_run->fallthrough();
    agent_run->add_option("--staging", agent_flags.staging, "staging directory to watch")
        ->required();
    agent_run->add_option("--server", agent_flags.server, "service base url");
    agent_run->add_option("--credential", agent_flags.credential, "device credential file");
    agent_run->add_option("--journal", agent_flags.journal,
                          "journal file (default <staging>/.relay-journal)");
    agent_run->add_option("--chunk-size", agent_flags.chunk_size, "chunk size")->capture_default_str();
    agent_run->add_option("--parallelism", agent_flags.parallelism,
                          "parallel chunk streams per file")->capture_default_str();
    agent_run->add_option("--max-active-files", agent_flags.max_active_files,
                          "files in flight at once")->capture_default_str();
    agent_run->add_option("--stability-window", agent_flags.stability_window,
                          "quiet time before a file counts as fully copied")->capture_default_str();
    agent_run->add_option("--poll-interval", agent_flags.poll_interval, "scan period")->capture_default_str();
    agent_run->add_option("--category", agent_flags.category,
                          "experimental|theoretical|uncategorized")->capture_default_str();
    agent_run->add_flag("--once", agent_flags.once, "single scan-and-upload pass, then exit");

    auto* serve = app.add_subcommand("serve", "storage service");
    serve->fallthrough();
    ServeFlags serve_flags;
    serve->add_option("--data-root", serve_flags.data_root, "object store directory");
    serve->add_option("--listen", serve_flags.listen, "host:port (port 0 picks one)")->capture_default_str();
    serve->add_option("--quota", serve_flags.quota, "hard per-user byte limit")->capture_default_str();
    serve->add_option("--devices", serve_flags.devices, "device table file");
    serve->add_option("--org-map", serve_flags.org_map, "user-to-organization map file");
    serve->add_option("--token-ttl", serve_flags.token_ttl, "token lifetime")->capture_default_str();

    auto* bench = app.add_subcommand("bench", "throughput and latency bench");
    bench->fallthrough();
    BenchFlags bench_flags;
    bench->add_option("--profile", bench_flags.profiles, "network profile name (repeatable)");
    bench->add_flag("--all-profiles", bench_flags.all_profiles, "run the whole catalog");
    bench->add_flag("--dump-profiles", bench_flags.dump_profiles,
                    "print the catalog and exit; no network activity");
    bench->add_option("--files", bench_flags.files, "files per run")->capture_default_str();
    bench->add_option("--size", bench_flags.size, "bytes per file")->capture_default_str();
    bench->add_option("--parallelism", bench_flags.parallelism, "parallel file streams")->capture_default_str();
    bench->add_option("--reps", bench_flags.reps, "runs per profile (odd)")->capture_default_str();
    bench->add_option("--scale", bench_flags.scale, "bandwidth cap multiplier")->capture_default_str();
    bench->add_option("--catalog", bench_flags.catalog, "profile catalog file");
    bench->add_option("--csv", bench_flags.csv, "write per-run samples to this csv file");
    bench->add_flag("--assert-ordering", bench_flags.assert_ordering,
                    "fail (exit 3) unless throughput follows the modeled route order");
    bench->add_flag("--human", bench_flags.human, "table output instead of json");

    auto* stats = app.add_subcommand("stats", "usage reports from a ledger or a server");
    stats->fallthrough();
    StatsFlags stats_flags;
    stats->add_option("--ledger", stats_flags.ledger, "commit ledger file");
    stats->add_option("--server", stats_flags.server, "service base url");
    stats->add_option("--credential", stats_flags.credential, "device credential file");
    stats->add_option("--from", stats_flags.from, "period start, YYYY-MM-DD[THH:MM:SS] UTC");
    stats->add_option("--to", stats_flags.to, "period end (exclusive)");
    stats->add_option("--cumulative-by", stats_flags.cumulative_by,
                      "month: one cumulative report per calendar month");
    stats->add_option("--org-map", stats_flags.org_map, "user-to-organization map file");
    stats->add_flag("--human", stats_flags.human, "table output instead of json");

    auto* config = app.add_subcommand("config", "configuration");
    config->require_subcommand(1);
    config->fallthrough();
    auto* config_show = config->add_subcommand("show", "print the effective settings");
    config_show->fallthrough();
    config_show->add_option("--server", global.server_url, "service base url");
    config_show->add_option("--credential", global.credential_path, "device credential file");
    config_show->add_option("--data-root", global.data_root, "object store directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        GlobalConfig cfg = resolve_config(global);
        apply_log_level(cfg.log_level);
        if (agent_run->parsed()) return run_agent(cfg, agent_flags);
        if (serve->parsed()) return run_serve(cfg, serve_flags);
        if (bench->parsed()) return run_bench(bench_flags);
        if (stats->parsed()) return run_stats(cfg, stats_flags);
        if (config_show->parsed()) return run_config_show(cfg);
        std::cerr << "relayctl: no subcommand\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "relayctl: " << e.what() << "\n";
        return kExitUsage;
    } catch (const AssertionFailure& e) {
        std::cerr << "relayctl: " << e.what() << "\n";
        return kExitAssertion;
    } catch (const relay::Error& e) {
        std::cerr << "relayctl: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "relayctl: " << e.what() << "\n";
        return kExitFailure;
    }
}
