#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace relay::agent {

// Loaded from the credential file. The secret authenticates the device to the
// service and must never reach logs or the journal.
struct DeviceCredential {
    std::string device_id;
    std::string device_secret;
    std::vector<std::string> registered_users;

    bool covers_user(const std::string& user) const;
};

// Parses {device_id, device_secret, registered_users} and validates the user
// ids; throws ValidationError on malformed input, IoError if unreadable.
DeviceCredential load_credential(const std::filesystem::path& path);

}  // namespace relay::agent
