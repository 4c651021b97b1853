#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "relay/core/manifest.hpp"
#include "relay/core/state.hpp"

namespace relay::agent {

// stat() snapshot taken when a manifest is built; a mismatch on restart means
// the staged file changed behind the journal's back.
struct SourceFingerprint {
    std::uint64_t size = 0;
    std::int64_t mtime_ns = 0;

    bool operator==(const SourceFingerprint&) const = default;
};

SourceFingerprint fingerprint_of(const std::filesystem::path& file);

// Everything the journal knows about one file_id after replay.
struct JournalFileState {
    core::FileManifest manifest;
    SourceFingerprint fingerprint;
    std::optional<std::string> upload_id;
    core::TransferState state;
    std::uint64_t last_seq = 0;  // journal position of the newest record, for tie-breaks
};

// Append-only transfer log, one canonical-JSON record per line. Replay feeds
// each record through the transfer state machine, so an impossible sequence
// is rejected rather than guessed at. A torn final line (partial append) is
// truncated away on open; corruption before that refuses to open. Phase and
// session records are fsynced, chunk acks are not: a lost ack only causes an
// idempotent re-send.
class Journal {
public:
    explicit Journal(std::filesystem::path path);
    ~Journal();
    Journal(const Journal&) = delete;
    Journal& operator=(const Journal&) = delete;

    // State reconstructed from disk when the journal was opened.
    const std::map<std::string, JournalFileState>& replayed() const { return replayed_; }

    void record_manifested(const core::FileManifest& manifest, const SourceFingerprint& fp);
    // A new service-side session: previously acked chunks belong to the old
    // session's spool and are forgotten on replay.
    void record_session(const std::string& file_id, const std::string& upload_id);
    void record_ack(const std::string& file_id, std::uint64_t index);
    void record_phase(const std::string& file_id, core::TransferPhase phase,
                      const std::string& error = "");
    void flush();

    const std::filesystem::path& path() const { return path_; }

private:
    void append_line(const nlohmann::json& record, bool sync);
    void replay();
    void apply(const nlohmann::json& record, std::uint64_t seq);

    std::filesystem::path path_;
    int fd_ = -1;
    std::mutex mu_;
    std::map<std::string, JournalFileState> replayed_;
};

}  // namespace relay::agent
