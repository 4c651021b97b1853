#include "relay/core/util.hpp"

#include <cctype>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <mutex>
#include <random>

#include "relay/core/errors.hpp"

namespace relay::core {

static const char* kHexDigits = "0123456789abcdef";

std::string to_hex(std::span<const unsigned char> bytes) {
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char b : bytes) {
        out.push_back(kHexDigits[b >> 4]);
        out.push_back(kHexDigits[b & 0x0f]);
    }
    return out;
}

static int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

std::vector<unsigned char> from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0) throw ParamError("hex string has odd length");
    std::vector<unsigned char> out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = hex_nibble(hex[2 * i]);
        int lo = hex_nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw ParamError("invalid hex character in \"" + hex + "\"");
        out[i] = static_cast<unsigned char>(hi << 4 | lo);
    }
    return out;
}

bool is_lower_hex(const std::string& s) {
    for (char c : s) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    }
    return true;
}

std::string random_hex(std::size_t n_bytes) {
    static std::mutex mu;
    static std::mt19937_64 rng = [] {
        std::random_device rd;
        std::seed_seq seq{rd(), rd(), rd(), rd(),
                          static_cast<unsigned>(::time(nullptr)),
                          static_cast<unsigned>(reinterpret_cast<std::uintptr_t>(&mu))};
        return std::mt19937_64(seq);
    }();
    std::vector<unsigned char> buf(n_bytes);
    {
        std::lock_guard<std::mutex> lock(mu);
        for (auto& b : buf) b = static_cast<unsigned char>(rng() & 0xff);
    }
    return to_hex(buf);
}

std::uint64_t parse_size(const std::string& text) {
    if (text.empty()) throw ParamError("empty size");
    std::size_t pos = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos == 0) throw ParamError("size must start with digits: \"" + text + "\"");
    std::uint64_t value = std::stoull(text.substr(0, pos));
    std::string suffix = text.substr(pos);
    if (suffix.empty() || suffix == "B") return value;
    std::uint64_t mult = 0;
    if (suffix == "KiB") mult = 1ull << 10;
    else if (suffix == "MiB") mult = 1ull << 20;
    else if (suffix == "GiB") mult = 1ull << 30;
    else if (suffix == "TiB") mult = 1ull << 40;
    else throw ParamError("unknown size suffix \"" + suffix + "\" (use KiB/MiB/GiB/TiB)");
    if (value != 0 && value > UINT64_MAX / mult) throw ParamError("size overflows: \"" + text + "\"");
    return value * mult;
}

std::chrono::milliseconds parse_duration(const std::string& text) {
    if (text.empty()) throw ParamError("empty duration");
    std::size_t pos = 0;
    while (pos < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.')) {
        ++pos;
    }
    if (pos == 0) throw ParamError("duration must start with digits: \"" + text + "\"");
    double value = std::stod(text.substr(0, pos));
    std::string suffix = text.substr(pos);
    double ms = 0;
    if (suffix.empty() || suffix == "s") ms = value * 1000.0;
    else if (suffix == "ms") ms = value;
    else if (suffix == "m") ms = value * 60'000.0;
    else throw ParamError("unknown duration suffix \"" + suffix + "\" (use ms/s/m)");
    return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::int64_t parse_iso_utc(const std::string& text) {
    std::tm tm{};
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    int n = std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s);
    if (n < 3) throw ParamError("unparseable timestamp \"" + text + "\" (want YYYY-MM-DD[THH:MM:SS])");
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = s;
    time_t t = timegm(&tm);
    if (t == static_cast<time_t>(-1)) throw ParamError("timestamp out of range \"" + text + "\"");
    return static_cast<std::int64_t>(t) * 1000;
}

std::string format_iso_utc(std::int64_t epoch_ms) {
    time_t t = static_cast<time_t>(epoch_ms / 1000);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::string month_key_utc(std::int64_t epoch_ms) {
    time_t t = static_cast<time_t>(epoch_ms / 1000);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", tm.tm_year + 1900, tm.tm_mon + 1);
    return buf;
}

}  // namespace relay::core
