#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace relay::service {

struct DeviceRecord {
    std::string device_id;
    std::string device_secret;  // must never reach logs or error bodies
    std::vector<std::string> registered_users;
};

std::vector<DeviceRecord> load_device_records(const std::filesystem::path& path);

enum class AuthOutcome { Ok, Rejected, RateLimited };

struct IssuedToken {
    AuthOutcome outcome = AuthOutcome::Rejected;
    std::string token;
    std::int64_t expires_at_ms = 0;
};

struct TokenInfo {
    std::string device_id;
    std::vector<std::string> registered_users;
    std::int64_t expires_at_ms = 0;

    bool covers_user(const std::string& user) const;
};

// Issues bearer tokens against a static device table and answers lookups.
// Wrong secret and unknown device are indistinguishable to the caller;
// repeated failures per presented device id trip the rate limit.
class DeviceRegistry {
public:
    explicit DeviceRegistry(std::vector<DeviceRecord> devices,
                            std::chrono::seconds token_ttl = std::chrono::seconds(3600));

    IssuedToken issue_token(const std::string& device_id, const std::string& device_secret);

    // nullopt when the token is unknown or expired.
    std::optional<TokenInfo> authorize(const std::string& token);

    std::chrono::seconds token_ttl() const { return ttl_; }

    static constexpr int kMaxFailuresPerWindow = 5;
    static constexpr std::chrono::seconds kFailureWindow{60};

private:
    bool rate_limited_locked(const std::string& device_id, std::int64_t now);

    std::vector<DeviceRecord> devices_;
    std::chrono::seconds ttl_;
    std::mutex mu_;
    std::unordered_map<std::string, TokenInfo> tokens_;
    std::unordered_map<std::string, std::deque<std::int64_t>> failures_;
};

}  // namespace relay::service
