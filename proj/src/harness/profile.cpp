#include "relay/harness/profile.hpp"

#include <fstream>

#include "relay/core/errors.hpp"

namespace relay::harness {

using relay::ValidationError;

std::string to_string(Route r) { return r == Route::Gateway ? "gateway" : "direct"; }

Route route_from_string(const std::string& s) {
    if (s == "direct") return Route::Direct;
    if (s == "gateway") return Route::Gateway;
    throw ValidationError("route must be \"direct\" or \"gateway\", got \"" + s + "\"");
}

void NetworkProfile::validate() const {
    if (name.empty()) throw ValidationError("profile name must be non-empty");
    if (base_rtt_ms < 0) throw ValidationError("base_rtt_ms must be >= 0 in \"" + name + "\"");
    if (gateway_penalty_ms < 0) {
        throw ValidationError("gateway_penalty_ms must be >= 0 in \"" + name + "\"");
    }
    if (bandwidth_cap_MBps && *bandwidth_cap_MBps <= 0) {
        throw ValidationError("bandwidth_cap_MBps must be > 0 when present in \"" + name + "\"");
    }
}

nlohmann::json NetworkProfile::to_json() const {
    nlohmann::json j{
        {"name", name},
        {"base_rtt_ms", base_rtt_ms},
        {"route", to_string(route)},
        {"gateway_penalty_ms", gateway_penalty_ms},
    };
    if (bandwidth_cap_MBps) j["bandwidth_cap_MBps"] = *bandwidth_cap_MBps;
    return j;
}

NetworkProfile NetworkProfile::from_json(const nlohmann::json& j) {
    NetworkProfile p;
    try {
        p.name = j.at("name").get<std::string>();
        p.base_rtt_ms = j.at("base_rtt_ms").get<double>();
        p.route = route_from_string(j.at("route").get<std::string>());
        p.gateway_penalty_ms = j.value("gateway_penalty_ms", 0.0);
        if (j.contains("bandwidth_cap_MBps") && !j["bandwidth_cap_MBps"].is_null()) {
            p.bandwidth_cap_MBps = j["bandwidth_cap_MBps"].get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed network profile: ") + e.what());
    }
    p.validate();
    return p;
}

const std::vector<NetworkProfile>& builtin_profiles() {
    static const std::vector<NetworkProfile> catalog = [] {
        std::vector<NetworkProfile> v;
        v.push_back({kDirectProfileName, 0.87, 598.8, Route::Direct, 0});
        // Same campus base latency as the direct link; the extra 3.37 ms is
        // the detour through the regional upstream (0.87 + 3.37 = 4.24).
        v.push_back({"campus-gateway", 0.87, 51.65, Route::Gateway, 3.37});
        v.push_back({"wisteria-east", 4.13, 425.5, Route::Direct, 0});
        v.push_back({"fugaku-west", 11.9, 512.8, Route::Direct, 0});
        v.push_back({"azure-east", 4.85, 128.3, Route::Direct, 0});
        v.push_back({"azure-west", 12.03, 128.0, Route::Direct, 0});
        for (const auto& p : v) p.validate();
        return v;
    }();
    return catalog;
}

std::vector<NetworkProfile> load_profile_catalog(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw relay::IoError("cannot open profile catalog: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("profile catalog is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_array()) throw ValidationError("profile catalog must be a JSON array");
    std::vector<NetworkProfile> out;
    for (const auto& item : j) out.push_back(NetworkProfile::from_json(item));
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t k = i + 1; k < out.size(); ++k) {
            if (out[i].name == out[k].name) {
                throw ValidationError("duplicate profile name \"" + out[i].name + "\"");
            }
        }
    }
    return out;
}

const NetworkProfile* find_profile(const std::vector<NetworkProfile>& catalog,
                                   const std::string& name) {
    for (const auto& p : catalog) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

}  // namespace relay::harness
