#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "relay/service/registry.hpp"
#include "relay/service/stats.hpp"
#include "relay/service/store.hpp"

namespace httplib {
class Server;
}

namespace relay::service {

struct ServerConfig {
    std::filesystem::path data_root;
    std::string listen_host = "127.0.0.1";
    int listen_port = 0;  // 0 picks an ephemeral port
    QuotaPolicy quota;
    std::vector<DeviceRecord> devices;
    std::chrono::seconds token_ttl{3600};
    std::optional<OrgMap> org_map;
};

// The /v1 HTTP endpoint: token auth, chunked uploads, verified downloads,
// usage stats. One instance owns its data root exclusively (flock).
class StorageServer {
public:
    explicit StorageServer(ServerConfig config);
    ~StorageServer();

    StorageServer(const StorageServer&) = delete;
    StorageServer& operator=(const StorageServer&) = delete;

    // Binds and serves on a background thread. Throws NetworkError when the
    // port is taken, Error when the data root is locked by another process.
    void start();
    void stop();

    int port() const { return port_; }
    std::string base_url() const;

    ObjectStore& store() { return *store_; }
    DeviceRegistry& registry() { return *registry_; }

private:
    void install_routes();

    ServerConfig config_;
    std::unique_ptr<ObjectStore> store_;
    std::unique_ptr<DeviceRegistry> registry_;
    std::unique_ptr<httplib::Server> http_;
    std::thread serve_thread_;
    int lock_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> running_{false};
};

}  // namespace relay::service
