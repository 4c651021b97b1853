#include "relay/service/server.hpp"

#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "httplib.h"
#include "spdlog/spdlog.h"

#include "relay/core/errors.hpp"
#include "relay/core/util.hpp"
#include "relay/service/api_error.hpp"
#include "relay/wire.hpp"

namespace relay::service {

namespace {

void send_api_error(httplib::Response& res, const ApiError& e) {
    res.status = e.http_status;
    wire::ErrorBody body{e.code, e.what(), e.detail};
    res.set_content(body.to_json().dump(), "application/json");
}

void send_json(httplib::Response& res, const nlohmann::json& j) {
    res.set_content(j.dump(), "application/json");
}

// The one body every failed or cross-user object lookup gets, so namespaces
// cannot be probed.
ApiError object_not_found() {
    return ApiError(404, wire::code::kNotFound, "no such object");
}

ApiError auth_rejected() {
    return ApiError(401, wire::code::kAuthRejected, "authentication rejected");
}

}  // namespace

StorageServer::StorageServer(ServerConfig config) : config_(std::move(config)) {}

StorageServer::~StorageServer() { stop(); }

std::string StorageServer::base_url() const {
    return "http://" + config_.listen_host + ":" + std::to_string(port_);
}

void StorageServer::start() {
    if (running_) return;
    std::filesystem::create_directories(config_.data_root);
    auto lock_path = config_.data_root / ".lock";
    lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT, 0644);
    if (lock_fd_ < 0) throw IoError("open " + lock_path.string() + ": " + std::strerror(errno));
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(lock_fd_);
        lock_fd_ = -1;
        throw Error("data root " + config_.data_root.string() +
                    " is already served by another process");
    }

    store_ = std::make_unique<ObjectStore>(config_.data_root, config_.quota);
    registry_ = std::make_unique<DeviceRegistry>(config_.devices, config_.token_ttl);
    http_ = std::make_unique<httplib::Server>();
    http_->new_task_queue = [] { return new httplib::ThreadPool(12); };
    http_->set_payload_max_length(1ull << 31);
    // The library default includes SO_REUSEPORT, which would let a second
    // instance share the port instead of failing its bind.
    http_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    install_routes();

    if (config_.listen_port == 0) {
        int p = http_->bind_to_any_port(config_.listen_host);
        if (p <= 0) throw NetworkError("cannot bind an ephemeral port on " + config_.listen_host);
        port_ = p;
    } else {
        if (!http_->bind_to_port(config_.listen_host, config_.listen_port)) {
            throw NetworkError("cannot bind " + config_.listen_host + ":" +
                               std::to_string(config_.listen_port));
        }
        port_ = config_.listen_port;
    }
    running_ = true;
    serve_thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
    spdlog::info("storage service listening on {}:{} (data root {})", config_.listen_host,
                 port_, config_.data_root.string());
}

void StorageServer::stop() {
    if (!running_.exchange(false)) return;
    http_->stop();
    if (serve_thread_.joinable()) serve_thread_.join();
    if (lock_fd_ >= 0) {
        ::close(lock_fd_);
        lock_fd_ = -1;
    }
    spdlog::info("storage service on port {} stopped", port_);
}

void StorageServer::install_routes() {
    // Wraps a handler with the uniform error mapping. Internal details are
    // logged, never sent.
    auto guarded = [](auto&& fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const ApiError& e) {
                send_api_error(res, e);
            } catch (const ValidationError& e) {
                send_api_error(res, ApiError(400, wire::code::kValidationError, e.what()));
            } catch (const std::exception& e) {
                spdlog::error("internal error on {} {}: {}", req.method, req.path, e.what());
                send_api_error(res, ApiError(500, wire::code::kInternal, "internal error"));
            }
        };
    };

    // Bearer-token gate; throws so `guarded` does the formatting.
    auto authenticate = [this](const httplib::Request& req) -> TokenInfo {
        auto header = req.get_header_value(wire::kAuthHeader);
        const std::string prefix = "Bearer ";
        if (header.rfind(prefix, 0) != 0) {
            throw ApiError(401, wire::code::kAuthRequired, "missing bearer token");
        }
        auto info = registry_->authorize(header.substr(prefix.size()));
        if (!info) {
            throw ApiError(401, wire::code::kAuthRequired, "invalid or expired token");
        }
        return *info;
    };

    http_->Post("/v1/auth/token", guarded([this](const httplib::Request& req,
                                                 httplib::Response& res) {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception&) {
            throw ApiError(400, wire::code::kValidationError, "request body must be JSON");
        }
        if (!body.contains("device_id") || !body.contains("device_secret")) {
            throw ApiError(400, wire::code::kValidationError,
                           "device_id and device_secret are required");
        }
        auto issued = registry_->issue_token(body["device_id"].get<std::string>(),
                                             body["device_secret"].get<std::string>());
        switch (issued.outcome) {
            case AuthOutcome::Ok:
                send_json(res, wire::TokenResponse{issued.token, issued.expires_at_ms}.to_json());
                return;
            case AuthOutcome::RateLimited:
                throw ApiError(429, wire::code::kRateLimited,
                               "too many failed attempts, retry later");
            case AuthOutcome::Rejected:
                break;
        }
        // Unknown device and wrong secret produce this same body.
        throw auth_rejected();
    }));

    http_->Post("/v1/uploads", guarded([this, authenticate](const httplib::Request& req,
                                                            httplib::Response& res) {
        auto token = authenticate(req);
        auto manifest = core::FileManifest::parse(req.body);
        if (!token.covers_user(manifest.owner)) {
            throw ApiError(403, wire::code::kNotAuthorized,
                           "device is not registered for this user");
        }
        auto upload_id = store_->init_upload(manifest);
        spdlog::debug("upload session {} opened for {}:{}", upload_id, manifest.owner,
                      manifest.relative_path);
        send_json(res, wire::UploadCreated{upload_id}.to_json());
    }));

    http_->Put("/v1/uploads/([0-9a-f]+)/chunks/([0-9]+)",
               guarded([this, authenticate](const httplib::Request& req,
                                            httplib::Response& res) {
                   auto token = authenticate(req);
                   const std::string& upload_id = req.matches[1];
                   std::uint64_t index = std::stoull(req.matches[2]);
                   if (!token.covers_user(store_->upload_owner(upload_id))) {
                       throw ApiError(403, wire::code::kNotAuthorized,
                                      "device is not registered for this user");
                   }
                   auto claimed = req.get_header_value(wire::kChunkDigestHeader);
                   auto ack = store_->put_chunk(upload_id, index, req.body, claimed);
                   send_json(res, ack.to_json());
               }));

    http_->Post("/v1/uploads/([0-9a-f]+)/complete",
                guarded([this, authenticate](const httplib::Request& req,
                                             httplib::Response& res) {
                    auto token = authenticate(req);
                    const std::string& upload_id = req.matches[1];
                    if (!token.covers_user(store_->upload_owner(upload_id))) {
                        throw ApiError(403, wire::code::kNotAuthorized,
                                       "device is not registered for this user");
                    }
                    auto receipt = store_->complete_upload(upload_id);
                    spdlog::debug("committed object {} ({} bytes)", receipt.object_id,
                                  receipt.whole_digest.value);
                    send_json(res, receipt.to_json());
                }));

    http_->Get("/v1/objects/([^/]+)/(.+)",
               guarded([this, authenticate](const httplib::Request& req,
                                            httplib::Response& res) {
                   auto token = authenticate(req);
                   const std::string& owner = req.matches[1];
                   const std::string& rel = req.matches[2];
                   // Cross-user requests and genuinely missing paths are
                   // indistinguishable by design.
                   if (!token.covers_user(owner)) throw object_not_found();
                   if (!core::valid_user_id(owner) || !core::valid_relative_path(rel)) {
                       throw object_not_found();
                   }
                   auto handle =
                       std::make_shared<ObjectRead>(store_->open_object(owner, rel));
                   res.set_header("X-Content-Digest", handle->meta().whole_digest.value);
                   res.set_content_provider(
                       handle->meta().total_size, "application/octet-stream",
                       [handle](std::size_t offset, std::size_t length,
                                httplib::DataSink& sink) {
                           std::vector<char> buf(std::min<std::size_t>(length, 256 * 1024));
                           std::size_t n = handle->read_at(offset, buf.data(), buf.size());
                           if (n == 0) return false;
                           return sink.write(buf.data(), n);
                       });
               }));

    http_->Get("/v1/stats", guarded([this, authenticate](const httplib::Request& req,
                                                         httplib::Response& res) {
        authenticate(req);
        std::int64_t from_ms = 0;
        std::int64_t to_ms = core::now_ms() + 1;
        try {
            if (req.has_param("from")) from_ms = core::parse_iso_utc(req.get_param_value("from"));
            if (req.has_param("to")) to_ms = core::parse_iso_utc(req.get_param_value("to"));
        } catch (const ParamError& e) {
            throw ApiError(400, wire::code::kValidationError, e.what());
        }
        auto events = read_usage_ledger(store_->ledger_path());
        const OrgMap* org_map = config_.org_map ? &*config_.org_map : nullptr;
        if (req.get_param_value("cumulative") == "month") {
            nlohmann::json series = nlohmann::json::array();
            for (const auto& [month, report] : cumulative_monthly(events, from_ms, to_ms, org_map)) {
                series.push_back({{"month", month}, {"report", report.to_json()}});
            }
            send_json(res, nlohmann::json{{"series", series}});
            return;
        }
        send_json(res, aggregate_stats(events, from_ms, to_ms, org_map).to_json());
    }));
}

}  // namespace relay::service
