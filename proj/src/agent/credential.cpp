#include "relay/agent/credential.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "relay/core/errors.hpp"
#include "relay/core/manifest.hpp"

namespace relay::agent {

bool DeviceCredential::covers_user(const std::string& user) const {
    return std::find(registered_users.begin(), registered_users.end(), user) !=
           registered_users.end();
}

DeviceCredential load_credential(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read credential file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("credential file " + path.string() + " is not valid JSON");
    }
    if (!j.is_object() || !j.contains("device_id") || !j.contains("device_secret") ||
        !j.contains("registered_users")) {
        throw ValidationError(
            "credential file must be an object with device_id, device_secret, registered_users");
    }
    DeviceCredential cred;
    cred.device_id = j.at("device_id").get<std::string>();
    cred.device_secret = j.at("device_secret").get<std::string>();
    for (const auto& u : j.at("registered_users")) {
        cred.registered_users.push_back(u.get<std::string>());
    }
    if (cred.device_id.empty()) throw ValidationError("device_id must not be empty");
    if (cred.device_secret.empty()) throw ValidationError("device_secret must not be empty");
    for (const auto& u : cred.registered_users) {
        if (!core::valid_user_id(u)) {
            throw ValidationError("registered user \"" + u + "\" is not a valid user id");
        }
    }
    return cred;
}

}  // namespace relay::agent
