#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace relay::core {

std::string to_hex(std::span<const unsigned char> bytes);
std::vector<unsigned char> from_hex(const std::string& hex);
bool is_lower_hex(const std::string& s);

// 2*n_bytes lowercase hex chars from a process-local CSPRNG-seeded generator.
std::string random_hex(std::size_t n_bytes);

// "8MiB", "16KiB", "1TiB", or plain bytes. IEC suffixes only.
std::uint64_t parse_size(const std::string& text);

// "5s", "500ms", "2s", or a plain number of seconds.
std::chrono::milliseconds parse_duration(const std::string& text);

std::int64_t now_ms();

// "2024-08-01" or "2024-08-01T12:30:00" (UTC) -> epoch milliseconds.
std::int64_t parse_iso_utc(const std::string& text);
std::string format_iso_utc(std::int64_t epoch_ms);

// "2024-08" bucket for an epoch-ms timestamp, UTC.
std::string month_key_utc(std::int64_t epoch_ms);

}  // namespace relay::core
