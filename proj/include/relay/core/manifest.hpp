#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "relay/core/digest.hpp"

namespace relay::core {

inline constexpr std::uint64_t kDefaultChunkSize = 8ull << 20;

enum class Category { experimental, theoretical, uncategorized };

const char* to_string(Category c);
// Unknown strings fold into uncategorized when strict is false, throw otherwise.
Category category_from_string(const std::string& s, bool strict = true);

// A user id doubles as a single path component; keep it filesystem-safe.
bool valid_user_id(const std::string& s);
// Relative, no empty/"."/".." components, no NUL or backslash.
bool valid_relative_path(const std::string& s);

struct ChunkRecord {
    std::uint64_t index = 0;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    ContentDigest digest;

    bool operator==(const ChunkRecord&) const = default;
};

struct FileManifest {
    std::string file_id;
    std::string owner;
    std::string relative_path;
    Category category = Category::uncategorized;
    std::uint64_t total_size = 0;
    std::uint64_t chunk_size = kDefaultChunkSize;
    std::vector<ChunkRecord> chunks;
    ContentDigest whole_digest;

    std::uint64_t chunk_count() const { return chunks.size(); }

    // Structural invariants; throws ValidationError naming the violated rule.
    void validate() const;

    nlohmann::json to_json() const;
    // The wire and journal format: deterministic key order, chunks ascending,
    // decimal integers, lowercase hex digests.
    std::string to_canonical_json() const;
    static FileManifest from_json(const nlohmann::json& j);
    static FileManifest parse(const std::string& text);
};

// 32 hex chars from 128 random bits.
std::string new_file_id();

FileManifest build_manifest(const std::filesystem::path& file, const std::string& owner,
                            Category category, std::uint64_t chunk_size = kDefaultChunkSize);

bool verify_chunk(std::span<const std::byte> payload, const ChunkRecord& record);
bool verify_chunk(const std::string& payload, const ChunkRecord& record);

// Ascending complement of acked within [0, chunk_count); throws ConsistencyError
// on out-of-range acks.
std::vector<std::uint64_t> pending_indices(std::uint64_t chunk_count,
                                           const std::set<std::uint64_t>& acked);
std::vector<std::uint64_t> plan_resume(const FileManifest& manifest,
                                       const std::set<std::uint64_t>& acked);

}  // namespace relay::core
