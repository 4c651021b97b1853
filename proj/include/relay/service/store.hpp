#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "relay/core/digest.hpp"
#include "relay/core/manifest.hpp"
#include "relay/wire.hpp"

namespace relay::service {

struct StoredObject {
    std::string object_id;
    std::string owner;
    std::string relative_path;
    core::Category category = core::Category::uncategorized;
    std::uint64_t total_size = 0;
    core::ContentDigest whole_digest;
    std::int64_t committed_at_ms = 0;
    std::uint64_t version = 1;
};

struct QuotaPolicy {
    std::uint64_t per_user_limit = 1ull << 40;
    bool hard = true;
};

struct UserUsage {
    std::uint64_t committed = 0;
    std::uint64_t reserved = 0;
};

// Read handle for streaming: the fd stays valid across concurrent commits
// (renames do not invalidate open descriptors). Verified before handing out.
class ObjectRead {
public:
    ObjectRead(int fd, StoredObject meta) : fd_(fd), meta_(std::move(meta)) {}
    ~ObjectRead();
    ObjectRead(const ObjectRead&) = delete;
    ObjectRead& operator=(const ObjectRead&) = delete;
    ObjectRead(ObjectRead&& other) noexcept;

    const StoredObject& meta() const { return meta_; }
    // Reads up to len bytes at offset; returns bytes read, 0 at EOF, throws
    // IoError on failure.
    std::size_t read_at(std::uint64_t offset, void* buf, std::size_t len) const;

private:
    int fd_ = -1;
    StoredObject meta_;
};

// Spool-then-reassemble object store with per-user quota accounting and an
// append-only commit ledger under <data_root>/.ledger.
//
// Layout: committed objects at <data_root>/<owner>/<relative_path>;
// chunk spool under .spool/<upload_id>/; displaced versions under
// .versions/<owner>/<relative_path>.v<N>.
class ObjectStore {
public:
    ObjectStore(std::filesystem::path data_root, QuotaPolicy quota);

    // Throws ApiError (quota, validation). Reserves total_size against the
    // owner's quota until the session commits or is voided.
    std::string init_upload(const core::FileManifest& manifest);

    // Owner of the session, for request authorization. Throws ApiError
    // (UNKNOWN_UPLOAD) when absent.
    std::string upload_owner(const std::string& upload_id) const;

    // claimed_digest is the sender's X-Chunk-Digest value; empty means the
    // header was absent. A claim that disagrees with the received bytes is a
    // digest mismatch even before the manifest is consulted.
    wire::ChunkAckBody put_chunk(const std::string& upload_id, std::uint64_t index,
                                 const std::string& payload,
                                 const std::string& claimed_digest = "");

    wire::CommitReceipt complete_upload(const std::string& upload_id);

    std::optional<StoredObject> lookup(const std::string& owner,
                                       const std::string& relative_path) const;

    // Opens and re-verifies the stored bytes against the recorded digest.
    // Throws ApiError: NOT_FOUND when absent, INTERNAL when bytes no longer
    // match (storage corruption must never be served).
    ObjectRead open_object(const std::string& owner, const std::string& relative_path) const;

    UserUsage usage(const std::string& owner) const;

    const std::filesystem::path& data_root() const { return data_root_; }
    std::filesystem::path ledger_path() const { return data_root_ / ".ledger"; }
    const QuotaPolicy& quota() const { return quota_; }

    std::uint64_t committed_object_count() const;

private:
    struct Session {
        core::FileManifest manifest;
        std::filesystem::path spool_dir;
        std::map<std::uint64_t, std::string> acked;  // index -> digest hex
        std::mutex mu;
    };

    using PathKey = std::string;  // owner + '\0' + relative_path
    static PathKey key_of(const std::string& owner, const std::string& rel);

    std::shared_ptr<Session> find_session(const std::string& upload_id) const;
    void replay_ledger();
    void append_ledger_locked(const StoredObject& obj);
    void release_reservation(const std::string& owner, std::uint64_t bytes);
    std::mutex& commit_mutex_for(const PathKey& key);

    std::filesystem::path data_root_;
    QuotaPolicy quota_;

    mutable std::mutex mu_;  // sessions_, objects_, usage_, versions_
    std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
    std::unordered_map<PathKey, StoredObject> objects_;
    std::unordered_map<std::string, UserUsage> usage_;
    std::unordered_map<PathKey, std::uint64_t> versions_;

    std::mutex commit_map_mu_;
    std::unordered_map<PathKey, std::unique_ptr<std::mutex>> commit_mutexes_;
};

}  // namespace relay::service
