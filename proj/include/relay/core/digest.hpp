#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace relay::core {

inline constexpr const char* kDigestAlgorithm = "sha256";

// The well-known SHA-256 of the empty byte sequence.
inline constexpr const char* kEmptyInputSha256 =
    "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

struct ContentDigest {
    std::string algorithm{kDigestAlgorithm};
    std::string value;  // 64 lowercase hex chars

    bool operator==(const ContentDigest&) const = default;
    bool well_formed() const;
};

// Incremental SHA-256. Not copyable; one-shot helpers below for small inputs.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t len);
    void update(std::span<const std::byte> data) { update(data.data(), data.size()); }
    void update(std::span<const unsigned char> data) { update(data.data(), data.size()); }
    void update(const std::string& data) { update(data.data(), data.size()); }

    // Finalizes and resets the context for reuse.
    ContentDigest finish();

private:
    void* ctx_;
};

ContentDigest sha256(const void* data, std::size_t len);
ContentDigest sha256(std::span<const std::byte> data);
ContentDigest sha256(const std::string& data);

}  // namespace relay::core
