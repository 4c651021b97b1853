#include "relay/service/stats.hpp"

#include <ctime>
#include <fstream>
#include <set>

#include "relay/core/errors.hpp"
#include "relay/core/util.hpp"

namespace relay::service {

using core::Category;

std::vector<CommitEvent> read_usage_ledger(const std::filesystem::path& path) {
    std::vector<CommitEvent> events;
    std::ifstream in(path, std::ios::binary);
    if (!in) return events;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    std::size_t lineno = 0;
    while (pos < content.size()) {
        ++lineno;
        std::size_t nl = content.find('\n', pos);
        bool terminated = nl != std::string::npos;
        std::string line = content.substr(pos, terminated ? nl - pos : std::string::npos);
        std::size_t next = terminated ? nl + 1 : content.size();
        bool is_last = next >= content.size();

        if (!line.empty()) {
            bool parsed = false;
            if (terminated) {
                try {
                    auto j = nlohmann::json::parse(line);
                    CommitEvent ev;
                    ev.ts_ms = j.at("ts").get<std::int64_t>();
                    ev.owner = j.at("owner").get<std::string>();
                    ev.category =
                        core::category_from_string(j.at("category").get<std::string>(), false);
                    ev.size = j.at("size").get<std::uint64_t>();
                    ev.object_id = j.value("object_id", "");
                    ev.relative_path = j.value("relative_path", "");
                    events.push_back(std::move(ev));
                    parsed = true;
                } catch (const std::exception&) {
                    parsed = false;
                }
            }
            if (!parsed) {
                if (is_last) break;  // torn tail, ignore
                throw ConsistencyError("usage ledger corrupt at line " +
                                       std::to_string(lineno) + " of " + path.string());
            }
        }
        pos = next;
    }
    return events;
}

OrgMap load_org_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open org map: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception&) {
        throw ValidationError("org map is not valid JSON: " + path.string());
    }
    if (!j.is_object()) throw ValidationError("org map must be a JSON object of user -> org");
    OrgMap map;
    for (const auto& [user, org] : j.items()) {
        if (!org.is_string()) throw ValidationError("org for \"" + user + "\" must be a string");
        map[user] = org.get<std::string>();
    }
    return map;
}

nlohmann::json UsageReport::to_json() const {
    auto by_cat = [](const std::map<Category, std::uint64_t>& m) {
        nlohmann::json j = nlohmann::json::object();
        for (Category c :
             {Category::experimental, Category::theoretical, Category::uncategorized}) {
            auto it = m.find(c);
            j[core::to_string(c)] = it == m.end() ? 0 : it->second;
        }
        return j;
    };
    nlohmann::json j{
        {"period",
         {{"from", core::format_iso_utc(from_ms)}, {"to", core::format_iso_utc(to_ms)}}},
        {"user_count", user_count},
        {"total_volume", total_volume},
        {"volume_by_category", by_cat(volume_by_category)},
        {"file_count_total", file_count_total},
        {"file_count_by_category", by_cat(file_count_by_category)},
    };
    if (org_count) j["org_count"] = *org_count;
    return j;
}

UsageReport aggregate_stats(const std::vector<CommitEvent>& events, std::int64_t from_ms,
                            std::int64_t to_ms, const OrgMap* org_map) {
    UsageReport report;
    report.from_ms = from_ms;
    report.to_ms = to_ms;
    std::set<std::string> users;
    std::set<std::string> orgs;
    for (const auto& ev : events) {
        if (ev.ts_ms < from_ms || ev.ts_ms >= to_ms) continue;
        users.insert(ev.owner);
        report.total_volume += ev.size;
        report.volume_by_category[ev.category] += ev.size;
        report.file_count_total += 1;
        report.file_count_by_category[ev.category] += 1;
        if (org_map) {
            auto it = org_map->find(ev.owner);
            // An unmapped user is still some organization; count it as its own.
            orgs.insert(it != org_map->end() ? "org:" + it->second : "user:" + ev.owner);
        }
    }
    report.user_count = users.size();
    if (org_map) report.org_count = orgs.size();
    return report;
}

namespace {

// Epoch ms of the first instant of the month following ts.
std::int64_t next_month_start(std::int64_t ts_ms) {
    std::time_t secs = static_cast<std::time_t>(ts_ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    tm.tm_mday = 1;
    tm.tm_hour = 0;
    tm.tm_min = 0;
    tm.tm_sec = 0;
    tm.tm_mon += 1;
    if (tm.tm_mon > 11) {
        tm.tm_mon = 0;
        tm.tm_year += 1;
    }
    return static_cast<std::int64_t>(timegm(&tm)) * 1000;
}

}  // namespace

std::vector<std::pair<std::string, UsageReport>> cumulative_monthly(
    const std::vector<CommitEvent>& events, std::int64_t from_ms, std::int64_t to_ms,
    const OrgMap* org_map) {
    std::vector<std::pair<std::string, UsageReport>> series;
    if (from_ms >= to_ms) return series;
    std::int64_t cursor = from_ms;
    for (;;) {
        std::int64_t month_end = next_month_start(cursor);
        std::int64_t window_end = std::min(month_end, to_ms);
        series.emplace_back(core::month_key_utc(cursor),
                            aggregate_stats(events, from_ms, window_end, org_map));
        if (window_end >= to_ms) break;
        cursor = month_end;
    }
    return series;
}

}  // namespace relay::service
