#pragma once

// Wire-level constants and JSON bodies of the /v1 HTTP API, shared by the
// service (producer) and the agent client (consumer).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "relay/core/digest.hpp"

namespace relay::wire {

inline constexpr const char* kAuthHeader = "Authorization";
inline constexpr const char* kChunkDigestHeader = "X-Chunk-Digest";

// Stable error codes of the uniform error body {code, message, detail}.
namespace code {
inline constexpr const char* kAuthRejected = "AUTH_REJECTED";
inline constexpr const char* kAuthRequired = "AUTH_REQUIRED";
inline constexpr const char* kRateLimited = "RATE_LIMITED";
inline constexpr const char* kNotAuthorized = "NOT_AUTHORIZED";
inline constexpr const char* kQuotaExceeded = "QUOTA_EXCEEDED";
inline constexpr const char* kValidationError = "VALIDATION_ERROR";
inline constexpr const char* kUnknownUpload = "UNKNOWN_UPLOAD";
inline constexpr const char* kChunkDigestMismatch = "CHUNK_DIGEST_MISMATCH";
inline constexpr const char* kChunkConflict = "CHUNK_CONFLICT";
inline constexpr const char* kUploadIncomplete = "UPLOAD_INCOMPLETE";
inline constexpr const char* kIntegrityFailure = "INTEGRITY_FAILURE";
inline constexpr const char* kNotFound = "NOT_FOUND";
inline constexpr const char* kInternal = "INTERNAL";
}  // namespace code

struct ErrorBody {
    std::string code;
    std::string message;
    nlohmann::json detail = nlohmann::json::object();

    nlohmann::json to_json() const {
        return {{"code", code}, {"message", message}, {"detail", detail}};
    }
    static ErrorBody from_json(const nlohmann::json& j) {
        ErrorBody e;
        e.code = j.value("code", "");
        e.message = j.value("message", "");
        e.detail = j.value("detail", nlohmann::json::object());
        return e;
    }
};

struct TokenResponse {
    std::string token;
    std::int64_t expires_at_ms = 0;

    nlohmann::json to_json() const { return {{"token", token}, {"expires_at", expires_at_ms}}; }
    static TokenResponse from_json(const nlohmann::json& j) {
        return {j.at("token").get<std::string>(), j.at("expires_at").get<std::int64_t>()};
    }
};

struct UploadCreated {
    std::string upload_id;

    nlohmann::json to_json() const { return {{"upload_id", upload_id}}; }
    static UploadCreated from_json(const nlohmann::json& j) {
        return {j.at("upload_id").get<std::string>()};
    }
};

struct ChunkAckBody {
    std::uint64_t index = 0;
    std::string digest;  // hex value

    nlohmann::json to_json() const { return {{"index", index}, {"digest", digest}}; }
    static ChunkAckBody from_json(const nlohmann::json& j) {
        return {j.at("index").get<std::uint64_t>(), j.at("digest").get<std::string>()};
    }
};

struct CommitReceipt {
    std::string object_id;
    core::ContentDigest whole_digest;

    nlohmann::json to_json() const {
        return {{"object_id", object_id},
                {"whole_digest",
                 {{"algorithm", whole_digest.algorithm}, {"value", whole_digest.value}}}};
    }
    static CommitReceipt from_json(const nlohmann::json& j) {
        CommitReceipt r;
        r.object_id = j.at("object_id").get<std::string>();
        r.whole_digest = {j.at("whole_digest").at("algorithm").get<std::string>(),
                          j.at("whole_digest").at("value").get<std::string>()};
        return r;
    }
};

inline std::string chunk_path(const std::string& upload_id, std::uint64_t index) {
    return "/v1/uploads/" + upload_id + "/chunks/" + std::to_string(index);
}

inline std::string complete_path(const std::string& upload_id) {
    return "/v1/uploads/" + upload_id + "/complete";
}

inline std::string object_path(const std::string& owner, const std::string& relative_path) {
    return "/v1/objects/" + owner + "/" + relative_path;
}

}  // namespace relay::wire
