#include "relay/service/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>

#include "relay/core/errors.hpp"
#include "relay/core/util.hpp"
#include "relay/service/api_error.hpp"

namespace relay::service {

namespace fs = std::filesystem;
using core::ContentDigest;
using core::FileManifest;
using core::Sha256;

namespace {

// Writes a file in one go; the caller renames it into place. No fsync:
// spooled chunks are not a durability point, since sessions do not survive
// a restart and an unspooled chunk is simply sent again.
void write_file_all(const fs::path& path, const std::string& payload) {
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw IoError("open " + path.string() + ": " + std::strerror(errno));
    const char* p = payload.data();
    std::size_t left = payload.size();
    while (left > 0) {
        ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            int err = errno;
            ::close(fd);
            throw IoError("write " + path.string() + ": " + std::strerror(err));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    ::close(fd);
}

nlohmann::json ledger_line(const StoredObject& obj) {
    return nlohmann::json{
        {"category", core::to_string(obj.category)},
        {"digest", obj.whole_digest.value},
        {"event", "commit"},
        {"object_id", obj.object_id},
        {"owner", obj.owner},
        {"relative_path", obj.relative_path},
        {"size", obj.total_size},
        {"ts", obj.committed_at_ms},
        {"version", obj.version},
    };
}

}  // namespace

ObjectRead::~ObjectRead() {
    if (fd_ >= 0) ::close(fd_);
}

ObjectRead::ObjectRead(ObjectRead&& other) noexcept : fd_(other.fd_), meta_(std::move(other.meta_)) {
    other.fd_ = -1;
}

std::size_t ObjectRead::read_at(std::uint64_t offset, void* buf, std::size_t len) const {
    ssize_t n = ::pread(fd_, buf, len, static_cast<off_t>(offset));
    if (n < 0) throw IoError(std::string("object read: ") + std::strerror(errno));
    return static_cast<std::size_t>(n);
}

ObjectStore::PathKey ObjectStore::key_of(const std::string& owner, const std::string& rel) {
    return owner + '\0' + rel;
}

ObjectStore::ObjectStore(fs::path data_root, QuotaPolicy quota)
    : data_root_(std::move(data_root)), quota_(quota) {
    fs::create_directories(data_root_);
    fs::create_directories(data_root_ / ".spool");
    fs::create_directories(data_root_ / ".versions");
    replay_ledger();
    // No upload session survives a restart; stale spool dirs are garbage.
    for (const auto& entry : fs::directory_iterator(data_root_ / ".spool")) {
        fs::remove_all(entry.path());
    }
}

void ObjectStore::replay_ledger() {
    std::ifstream in(ledger_path(), std::ios::binary);
    if (!in) return;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    std::size_t pos = 0;
    std::size_t valid_end = 0;
    std::size_t lineno = 0;
    while (pos < content.size()) {
        ++lineno;
        std::size_t nl = content.find('\n', pos);
        bool terminated = nl != std::string::npos;
        std::string line = content.substr(pos, terminated ? nl - pos : std::string::npos);
        std::size_t next = terminated ? nl + 1 : content.size();
        bool is_last = next >= content.size();

        bool applied = false;
        if (terminated && !line.empty()) {
            try {
                auto j = nlohmann::json::parse(line);
                StoredObject obj;
                obj.object_id = j.at("object_id").get<std::string>();
                obj.owner = j.at("owner").get<std::string>();
                obj.relative_path = j.at("relative_path").get<std::string>();
                obj.category =
                    core::category_from_string(j.at("category").get<std::string>(), false);
                obj.total_size = j.at("size").get<std::uint64_t>();
                obj.whole_digest = ContentDigest{core::kDigestAlgorithm,
                                                 j.at("digest").get<std::string>()};
                obj.committed_at_ms = j.at("ts").get<std::int64_t>();
                obj.version = j.value("version", std::uint64_t{1});

                PathKey key = key_of(obj.owner, obj.relative_path);
                objects_[key] = obj;
                versions_[key] = std::max(versions_[key], obj.version);
                usage_[obj.owner].committed += obj.total_size;
                applied = true;
            } catch (const std::exception&) {
                applied = false;
            }
        }
        if (applied || (terminated && line.empty())) {
            valid_end = next;
            pos = next;
            continue;
        }
        // A torn final record (unterminated or unparsable) is dropped; damage
        // anywhere earlier means the history cannot be trusted.
        if (is_last) break;
        throw ConsistencyError("usage ledger corrupt at line " + std::to_string(lineno) +
                               " of " + ledger_path().string());
    }
    if (valid_end < content.size()) {
        fs::resize_file(ledger_path(), valid_end);
    }
}

void ObjectStore::append_ledger_locked(const StoredObject& obj) {
    int fd = ::open(ledger_path().c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw IoError("open ledger: " + std::string(std::strerror(errno)));
    std::string line = ledger_line(obj).dump() + "\n";
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
        ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            int err = errno;
            ::close(fd);
            throw IoError("append ledger: " + std::string(std::strerror(err)));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
}

std::string ObjectStore::init_upload(const FileManifest& manifest) {
    manifest.validate();
    std::lock_guard lk(mu_);
    auto& u = usage_[manifest.owner];
    if (quota_.hard &&
        u.committed + u.reserved + manifest.total_size > quota_.per_user_limit) {
        throw ApiError(413, wire::code::kQuotaExceeded, "quota exceeded",
                       {{"limit", quota_.per_user_limit},
                        {"committed", u.committed},
                        {"reserved", u.reserved},
                        {"requested", manifest.total_size}});
    }
    u.reserved += manifest.total_size;
    std::string upload_id = core::random_hex(16);
    auto session = std::make_shared<Session>();
    session->manifest = manifest;
    session->spool_dir = data_root_ / ".spool" / upload_id;
    fs::create_directories(session->spool_dir);
    sessions_[upload_id] = session;
    return upload_id;
}

std::shared_ptr<ObjectStore::Session> ObjectStore::find_session(
    const std::string& upload_id) const {
    std::lock_guard lk(mu_);
    auto it = sessions_.find(upload_id);
    if (it == sessions_.end()) {
        throw ApiError(404, wire::code::kUnknownUpload, "unknown upload session",
                       {{"upload_id", upload_id}});
    }
    return it->second;
}

std::string ObjectStore::upload_owner(const std::string& upload_id) const {
    return find_session(upload_id)->manifest.owner;
}

wire::ChunkAckBody ObjectStore::put_chunk(const std::string& upload_id, std::uint64_t index,
                                          const std::string& payload,
                                          const std::string& claimed_digest) {
    auto session = find_session(upload_id);
    std::lock_guard slk(session->mu);
    const auto& manifest = session->manifest;
    if (index >= manifest.chunk_count()) {
        throw ApiError(400, wire::code::kValidationError, "chunk index out of range",
                       {{"index", index}, {"chunk_count", manifest.chunk_count()}});
    }
    const auto& record = manifest.chunks[index];
    ContentDigest received = core::sha256(payload);
    if (!claimed_digest.empty() && claimed_digest != received.value) {
        throw ApiError(422, wire::code::kChunkDigestMismatch,
                       "received bytes do not match the claimed chunk digest",
                       {{"index", index},
                        {"claimed_digest", claimed_digest},
                        {"received_digest", received.value}});
    }

    auto acked_it = session->acked.find(index);
    if (acked_it != session->acked.end()) {
        if (acked_it->second == received.value) {
            return {index, received.value};  // idempotent re-put
        }
        throw ApiError(409, wire::code::kChunkConflict,
                       "chunk already acknowledged with different content", {{"index", index}});
    }
    if (payload.size() != record.length || received.value != record.digest.value) {
        throw ApiError(422, wire::code::kChunkDigestMismatch,
                       "chunk content does not match manifest",
                       {{"index", index},
                        {"expected_length", record.length},
                        {"received_length", payload.size()},
                        {"expected_digest", record.digest.value},
                        {"received_digest", received.value}});
    }

    auto chunk_file = session->spool_dir / (std::to_string(index) + ".chunk");
    auto tmp = session->spool_dir / (std::to_string(index) + ".chunk.tmp");
    write_file_all(tmp, payload);
    fs::rename(tmp, chunk_file);
    session->acked[index] = received.value;
    return {index, received.value};
}

wire::CommitReceipt ObjectStore::complete_upload(const std::string& upload_id) {
    auto session = find_session(upload_id);
    std::lock_guard slk(session->mu);
    const auto& manifest = session->manifest;

    std::set<std::uint64_t> acked_set;
    for (const auto& [index, digest] : session->acked) acked_set.insert(index);
    auto pending = core::pending_indices(manifest.chunk_count(), acked_set);
    if (!pending.empty()) {
        throw ApiError(409, wire::code::kUploadIncomplete, "upload incomplete",
                       {{"pending", pending}});
    }

    // Reassemble into the session spool, hashing as we go.
    auto assembled = session->spool_dir / "assembled.tmp";
    ContentDigest computed;
    {
        int out = ::open(assembled.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (out < 0) throw IoError("open " + assembled.string() + ": " + std::strerror(errno));
        Sha256 hasher;
        std::vector<char> buf(4 * 1024 * 1024);
        bool io_ok = true;
        std::string io_msg;
        for (std::uint64_t i = 0; i < manifest.chunk_count() && io_ok; ++i) {
            auto chunk_file = session->spool_dir / (std::to_string(i) + ".chunk");
            std::ifstream in(chunk_file, std::ios::binary);
            if (!in) {
                io_ok = false;
                io_msg = "spooled chunk missing: " + chunk_file.string();
                break;
            }
            while (in) {
                in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
                std::streamsize n = in.gcount();
                if (n <= 0) break;
                hasher.update(buf.data(), static_cast<std::size_t>(n));
                const char* p = buf.data();
                std::size_t left = static_cast<std::size_t>(n);
                while (left > 0) {
                    ssize_t w = ::write(out, p, left);
                    if (w < 0) {
                        if (errno == EINTR) continue;
                        io_ok = false;
                        io_msg = std::string("write: ") + std::strerror(errno);
                        break;
                    }
                    p += w;
                    left -= static_cast<std::size_t>(w);
                }
                if (!io_ok) break;
            }
        }
        ::fsync(out);
        ::close(out);
        if (!io_ok) throw IoError("reassembly failed: " + io_msg);
        computed = hasher.finish();
    }

    if (!(computed == manifest.whole_digest)) {
        // The session is unsalvageable: spooled bytes passed per-chunk checks
        // but the whole does not match, so void everything.
        {
            std::lock_guard lk(mu_);
            sessions_.erase(upload_id);
            auto& u = usage_[manifest.owner];
            u.reserved -= std::min(u.reserved, manifest.total_size);
        }
        fs::remove_all(session->spool_dir);
        throw ApiError(422, wire::code::kIntegrityFailure,
                       "reassembled content does not match manifest digest",
                       {{"expected", manifest.whole_digest.value}, {"computed", computed.value}});
    }

    PathKey key = key_of(manifest.owner, manifest.relative_path);
    std::lock_guard commit_lk(commit_mutex_for(key));

    // Same path, same digest: idempotent no-op returning the existing object.
    {
        std::optional<StoredObject> existing;
        {
            std::lock_guard lk(mu_);
            auto it = objects_.find(key);
            if (it != objects_.end() && it->second.whole_digest == manifest.whole_digest) {
                existing = it->second;
                sessions_.erase(upload_id);
                auto& u = usage_[manifest.owner];
                u.reserved -= std::min(u.reserved, manifest.total_size);
            }
        }
        if (existing) {
            fs::remove_all(session->spool_dir);
            return {existing->object_id, existing->whole_digest};
        }
    }

    std::uint64_t version = 1;
    {
        std::lock_guard lk(mu_);
        auto vit = versions_.find(key);
        if (vit != versions_.end()) version = vit->second + 1;
    }

    auto final_path = data_root_ / manifest.owner / manifest.relative_path;
    if (version > 1 && fs::exists(final_path)) {
        auto displaced = data_root_ / ".versions" / manifest.owner /
                         (manifest.relative_path + ".v" + std::to_string(version - 1));
        fs::create_directories(displaced.parent_path());
        fs::rename(final_path, displaced);
    }
    fs::create_directories(final_path.parent_path());
    fs::rename(assembled, final_path);

    StoredObject obj;
    obj.object_id = core::new_file_id();
    obj.owner = manifest.owner;
    obj.relative_path = manifest.relative_path;
    obj.category = manifest.category;
    obj.total_size = manifest.total_size;
    obj.whole_digest = manifest.whole_digest;
    obj.committed_at_ms = core::now_ms();
    obj.version = version;
    {
        std::lock_guard lk(mu_);
        objects_[key] = obj;
        versions_[key] = version;
        auto& u = usage_[manifest.owner];
        u.reserved -= std::min(u.reserved, manifest.total_size);
        u.committed += manifest.total_size;
        append_ledger_locked(obj);
        sessions_.erase(upload_id);
    }
    fs::remove_all(session->spool_dir);
    return {obj.object_id, obj.whole_digest};
}

std::optional<StoredObject> ObjectStore::lookup(const std::string& owner,
                                                const std::string& relative_path) const {
    std::lock_guard lk(mu_);
    auto it = objects_.find(key_of(owner, relative_path));
    if (it == objects_.end()) return std::nullopt;
    return it->second;
}

std::mutex& ObjectStore::commit_mutex_for(const PathKey& key) {
    std::lock_guard lk(commit_map_mu_);
    auto& slot = commit_mutexes_[key];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

ObjectRead ObjectStore::open_object(const std::string& owner,
                                    const std::string& relative_path) const {
    PathKey key = key_of(owner, relative_path);
    auto& commit_mu = const_cast<ObjectStore*>(this)->commit_mutex_for(key);

    StoredObject meta;
    int fd = -1;
    {
        // Holding the commit mutex closes the gap between a version
        // displacement and the rename of the replacement into place.
        std::lock_guard commit_lk(commit_mu);
        {
            std::lock_guard lk(mu_);
            auto it = objects_.find(key);
            if (it == objects_.end()) {
                throw ApiError(404, wire::code::kNotFound, "no such object");
            }
            meta = it->second;
        }
        auto path = data_root_ / owner / relative_path;
        fd = ::open(path.c_str(), O_RDONLY);
        if (fd < 0) {
            throw ApiError(500, wire::code::kInternal, "stored object unreadable");
        }
    }

    // Re-verify before serving a single byte; the open fd pins the content
    // even if a new version is committed concurrently.
    ObjectRead handle(fd, meta);
    Sha256 hasher;
    std::vector<char> buf(1024 * 1024);
    std::uint64_t offset = 0;
    for (;;) {
        std::size_t n = handle.read_at(offset, buf.data(), buf.size());
        if (n == 0) break;
        hasher.update(buf.data(), n);
        offset += n;
    }
    auto computed = hasher.finish();
    if (offset != meta.total_size || !(computed == meta.whole_digest)) {
        throw ApiError(500, wire::code::kInternal, "stored object failed verification");
    }
    return handle;
}

UserUsage ObjectStore::usage(const std::string& owner) const {
    std::lock_guard lk(mu_);
    auto it = usage_.find(owner);
    if (it == usage_.end()) return {};
    return it->second;
}

std::uint64_t ObjectStore::committed_object_count() const {
    std::lock_guard lk(mu_);
    return objects_.size();
}

}  // namespace relay::service
