#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "relay/core/manifest.hpp"

namespace relay::service {

struct CommitEvent {
    std::int64_t ts_ms = 0;
    std::string owner;
    core::Category category = core::Category::uncategorized;
    std::uint64_t size = 0;
    std::string object_id;
    std::string relative_path;
};

// Reads the append-only commit ledger. A torn final line is skipped; damage
// earlier in the file throws ConsistencyError.
std::vector<CommitEvent> read_usage_ledger(const std::filesystem::path& path);

using OrgMap = std::map<std::string, std::string>;  // user -> organization

OrgMap load_org_map(const std::filesystem::path& path);

struct UsageReport {
    std::int64_t from_ms = 0;
    std::int64_t to_ms = 0;
    std::uint64_t user_count = 0;
    std::optional<std::uint64_t> org_count;
    std::uint64_t total_volume = 0;
    std::map<core::Category, std::uint64_t> volume_by_category;
    std::uint64_t file_count_total = 0;
    std::map<core::Category, std::uint64_t> file_count_by_category;

    nlohmann::json to_json() const;
};

// Pure fold over events with ts in [from_ms, to_ms). Category sums always
// add up to the totals. org_count appears only when an org map is given;
// users absent from the map each count as their own organization.
UsageReport aggregate_stats(const std::vector<CommitEvent>& events, std::int64_t from_ms,
                            std::int64_t to_ms, const OrgMap* org_map = nullptr);

// One report per calendar month (UTC) touched by [from_ms, to_ms), each
// covering [from_ms, end of that month). Totals are nondecreasing.
std::vector<std::pair<std::string, UsageReport>> cumulative_monthly(
    const std::vector<CommitEvent>& events, std::int64_t from_ms, std::int64_t to_ms,
    const OrgMap* org_map = nullptr);

}  // namespace relay::service
