#pragma once

#include <chrono>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "relay/agent/credential.hpp"
#include "relay/core/errors.hpp"
#include "relay/core/manifest.hpp"
#include "relay/wire.hpp"

namespace relay::agent {

// The service answered with a structured error body.
struct RemoteError : Error {
    int http_status;
    wire::ErrorBody body;

    RemoteError(int status, wire::ErrorBody b)
        : Error(b.code + " (" + std::to_string(status) + "): " + b.message),
          http_status(status),
          body(std::move(b)) {}
};

struct ClientOptions {
    std::chrono::seconds connect_timeout{5};
    std::chrono::seconds io_timeout{120};
    // Refresh the token once this fraction of its lifetime has elapsed.
    double refresh_fraction = 0.8;
};

// Thread-safe /v1 API client. Each call opens its own connection, so any
// number of chunk uploads can run in parallel against one instance; only the
// token cache is shared. A refused or expired token triggers exactly one
// re-authentication and retry per call.
class ServiceClient {
public:
    ServiceClient(std::string base_url, DeviceCredential credential, ClientOptions opts = {});

    // Acquires or proactively refreshes the bearer token.
    void ensure_token();

    std::string init_upload(const core::FileManifest& manifest);
    wire::ChunkAckBody put_chunk(const std::string& upload_id, std::uint64_t index,
                                 std::string_view payload, const std::string& digest_hex);
    wire::CommitReceipt complete_upload(const std::string& upload_id);

    struct FetchedObject {
        std::string bytes;
        std::string digest_hex;  // value of the X-Content-Digest header
    };
    FetchedObject get_object(const std::string& owner, const std::string& relative_path);

    // raw query string, e.g. "from=2024-01-01&cumulative=month"
    nlohmann::json get_stats(const std::string& query = "");

    const std::string& base_url() const { return base_url_; }

private:
    template <typename Fn>
    auto with_auth_retry(Fn&& attempt);
    std::string bearer();
    void refresh_token_locked();

    std::string base_url_;
    DeviceCredential credential_;
    ClientOptions opts_;

    std::mutex token_mu_;
    std::string token_;
    std::int64_t token_expires_ms_ = 0;
    std::int64_t token_refresh_ms_ = 0;
};

}  // namespace relay::agent
