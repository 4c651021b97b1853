#include "relay/agent/client.hpp"

#include "httplib.h"
#include "relay/core/util.hpp"

namespace relay::agent {

namespace {

[[noreturn]] void throw_remote(const httplib::Response& res) {
    wire::ErrorBody body;
    auto j = nlohmann::json::parse(res.body, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("code")) {
        body = wire::ErrorBody::from_json(j);
    } else {
        body.code = wire::code::kInternal;
        body.message = "unstructured response: " + res.body.substr(0, 200);
    }
    throw RemoteError(res.status, std::move(body));
}

bool is_missing_auth(const httplib::Result& res) {
    if (!res || res->status != 401) return false;
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    return !j.is_discarded() && j.value("code", "") == wire::code::kAuthRequired;
}

}  // namespace

ServiceClient::ServiceClient(std::string base_url, DeviceCredential credential, ClientOptions opts)
    : base_url_(std::move(base_url)), credential_(std::move(credential)), opts_(opts) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

void ServiceClient::refresh_token_locked() {
    httplib::Client cli(base_url_);
    cli.set_connection_timeout(opts_.connect_timeout);
    cli.set_read_timeout(opts_.io_timeout);
    nlohmann::json body{{"device_id", credential_.device_id},
                        {"device_secret", credential_.device_secret}};
    const std::int64_t issued_ms = core::now_ms();
    auto res = cli.Post("/v1/auth/token", body.dump(), "application/json");
    if (!res) {
        throw NetworkError("authentication endpoint unreachable at " + base_url_ + ": " +
                           httplib::to_string(res.error()));
    }
    if (res->status != 200) throw_remote(*res);
    auto token = wire::TokenResponse::from_json(nlohmann::json::parse(res->body));
    token_ = token.token;
    token_expires_ms_ = token.expires_at_ms;
    token_refresh_ms_ =
        issued_ms + static_cast<std::int64_t>(
                        opts_.refresh_fraction * static_cast<double>(token.expires_at_ms - issued_ms));
}

std::string ServiceClient::bearer() {
    std::lock_guard lock(token_mu_);
    if (token_.empty() || core::now_ms() >= token_refresh_ms_) refresh_token_locked();
    return "Bearer " + token_;
}

void ServiceClient::ensure_token() { bearer(); }

template <typename Fn>
auto ServiceClient::with_auth_retry(Fn&& attempt) {
    auto res = attempt(bearer());
    if (is_missing_auth(res)) {
        // Token expired server-side before the proactive refresh; force a new
        // one and retry the request once.
        {
            std::lock_guard lock(token_mu_);
            token_.clear();
        }
        res = attempt(bearer());
    }
    if (!res) {
        throw NetworkError("service unreachable at " + base_url_ + ": " +
                           httplib::to_string(res.error()));
    }
    return res;
}

std::string ServiceClient::init_upload(const core::FileManifest& manifest) {
    auto body = manifest.to_canonical_json();
    auto res = with_auth_retry([&](const std::string& auth) {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(opts_.connect_timeout);
        cli.set_read_timeout(opts_.io_timeout);
        return cli.Post("/v1/uploads", {{wire::kAuthHeader, auth}}, body, "application/json");
    });
    if (res->status != 200) throw_remote(*res);
    return wire::UploadCreated::from_json(nlohmann::json::parse(res->body)).upload_id;
}

wire::ChunkAckBody ServiceClient::put_chunk(const std::string& upload_id, std::uint64_t index,
                                            std::string_view payload,
                                            const std::string& digest_hex) {
    auto path = wire::chunk_path(upload_id, index);
    auto res = with_auth_retry([&](const std::string& auth) {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(opts_.connect_timeout);
        cli.set_read_timeout(opts_.io_timeout);
        cli.set_write_timeout(opts_.io_timeout);
        httplib::Headers headers{{wire::kAuthHeader, auth}, {wire::kChunkDigestHeader, digest_hex}};
        return cli.Put(path, headers, payload.data(), payload.size(), "application/octet-stream");
    });
    if (res->status != 200) throw_remote(*res);
    return wire::ChunkAckBody::from_json(nlohmann::json::parse(res->body));
}

wire::CommitReceipt ServiceClient::complete_upload(const std::string& upload_id) {
    auto path = wire::complete_path(upload_id);
    auto res = with_auth_retry([&](const std::string& auth) {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(opts_.connect_timeout);
        cli.set_read_timeout(opts_.io_timeout);
        return cli.Post(path, {{wire::kAuthHeader, auth}}, "", "text/plain");
    });
    if (res->status != 200) throw_remote(*res);
    return wire::CommitReceipt::from_json(nlohmann::json::parse(res->body));
}

ServiceClient::FetchedObject ServiceClient::get_object(const std::string& owner,
                                                       const std::string& relative_path) {
    auto path = wire::object_path(owner, relative_path);
    auto res = with_auth_retry([&](const std::string& auth) {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(opts_.connect_timeout);
        cli.set_read_timeout(opts_.io_timeout);
        return cli.Get(path, {{wire::kAuthHeader, auth}});
    });
    if (res->status != 200) throw_remote(*res);
    return {res->body, res->get_header_value("X-Content-Digest")};
}

nlohmann::json ServiceClient::get_stats(const std::string& query) {
    std::string path = "/v1/stats";
    if (!query.empty()) path += "?" + query;
    auto res = with_auth_retry([&](const std::string& auth) {
        httplib::Client cli(base_url_);
        cli.set_connection_timeout(opts_.connect_timeout);
        cli.set_read_timeout(opts_.io_timeout);
        return cli.Get(path, {{wire::kAuthHeader, auth}});
    });
    if (res->status != 200) throw_remote(*res);
    return nlohmann::json::parse(res->body);
}

}  // namespace relay::agent
