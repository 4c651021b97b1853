#include "relay/service/registry.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "relay/core/errors.hpp"
#include "relay/core/manifest.hpp"
#include "relay/core/util.hpp"

namespace relay::service {

std::vector<DeviceRecord> load_device_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open device table: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception&) {
        throw ValidationError("device table is not valid JSON: " + path.string());
    }
    if (!j.is_array()) throw ValidationError("device table must be a JSON array");
    std::vector<DeviceRecord> out;
    for (const auto& item : j) {
        DeviceRecord rec;
        try {
            rec.device_id = item.at("device_id").get<std::string>();
            rec.device_secret = item.at("device_secret").get<std::string>();
            for (const auto& u : item.at("registered_users")) {
                rec.registered_users.push_back(u.get<std::string>());
            }
        } catch (const nlohmann::json::exception&) {
            throw ValidationError(
                "device record needs device_id, device_secret, registered_users");
        }
        if (rec.device_id.empty()) throw ValidationError("device_id must be non-empty");
        for (const auto& u : rec.registered_users) {
            if (!core::valid_user_id(u)) {
                throw ValidationError("invalid registered user id \"" + u + "\"");
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

bool TokenInfo::covers_user(const std::string& user) const {
    return std::find(registered_users.begin(), registered_users.end(), user) !=
           registered_users.end();
}

DeviceRegistry::DeviceRegistry(std::vector<DeviceRecord> devices, std::chrono::seconds token_ttl)
    : devices_(std::move(devices)), ttl_(token_ttl) {}

bool DeviceRegistry::rate_limited_locked(const std::string& device_id, std::int64_t now) {
    auto it = failures_.find(device_id);
    if (it == failures_.end()) return false;
    auto& window = it->second;
    std::int64_t cutoff = now - std::chrono::milliseconds(kFailureWindow).count();
    while (!window.empty() && window.front() < cutoff) window.pop_front();
    return window.size() >= kMaxFailuresPerWindow;
}

IssuedToken DeviceRegistry::issue_token(const std::string& device_id,
                                        const std::string& device_secret) {
    std::int64_t now = core::now_ms();
    std::lock_guard lk(mu_);
    if (rate_limited_locked(device_id, now)) {
        return {AuthOutcome::RateLimited, "", 0};
    }
    const DeviceRecord* match = nullptr;
    for (const auto& d : devices_) {
        if (d.device_id == device_id && d.device_secret == device_secret) {
            match = &d;
            break;
        }
    }
    if (!match) {
        failures_[device_id].push_back(now);
        return {AuthOutcome::Rejected, "", 0};
    }
    IssuedToken issued;
    issued.outcome = AuthOutcome::Ok;
    issued.token = core::random_hex(24);
    issued.expires_at_ms = now + std::chrono::milliseconds(ttl_).count();
    tokens_[issued.token] =
        TokenInfo{match->device_id, match->registered_users, issued.expires_at_ms};
    return issued;
}

std::optional<TokenInfo> DeviceRegistry::authorize(const std::string& token) {
    std::int64_t now = core::now_ms();
    std::lock_guard lk(mu_);
    auto it = tokens_.find(token);
    if (it == tokens_.end()) return std::nullopt;
    if (it->second.expires_at_ms <= now) {
        tokens_.erase(it);
        return std::nullopt;
    }
    return it->second;
}

}  // namespace relay::service
