#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace relay::harness {

enum class Route { Direct, Gateway };

std::string to_string(Route r);
Route route_from_string(const std::string& s);

// One emulated network path. The gateway penalty applies only on Gateway
// routes; a missing bandwidth cap means the path is uncapped.
struct NetworkProfile {
    std::string name;
    double base_rtt_ms = 0;
    std::optional<double> bandwidth_cap_MBps;
    Route route = Route::Direct;
    double gateway_penalty_ms = 0;

    double effective_rtt_ms() const {
        return base_rtt_ms + (route == Route::Gateway ? gateway_penalty_ms : 0);
    }

    // Throws ValidationError naming the offending field.
    void validate() const;

    nlohmann::json to_json() const;
    static NetworkProfile from_json(const nlohmann::json& j);
};

// The six built-in paths, in report order: the direct link first, then the
// gateway-routed campus path, the two supercomputer paths, the two public
// cloud paths.
const std::vector<NetworkProfile>& builtin_profiles();

std::vector<NetworkProfile> load_profile_catalog(const std::filesystem::path& path);

// nullptr when absent.
const NetworkProfile* find_profile(const std::vector<NetworkProfile>& catalog,
                                   const std::string& name);

inline constexpr const char* kDirectProfileName = "arim-jupyter-direct";

}  // namespace relay::harness
