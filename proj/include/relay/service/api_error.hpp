#pragma once

#include <string>
#include <utility>

#include "json.hpp"
#include "relay/core/errors.hpp"

namespace relay::service {

// Service-level failure carrying exactly what the wire error body needs.
// Thrown by the store/registry layers, serialized uniformly by the server.
struct ApiError : Error {
    ApiError(int http_status, std::string code, const std::string& message,
             nlohmann::json detail = nlohmann::json::object())
        : Error(message),
          http_status(http_status),
          code(std::move(code)),
          detail(std::move(detail)) {}

    int http_status;
    std::string code;
    nlohmann::json detail;
};

}  // namespace relay::service
