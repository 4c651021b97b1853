#include "relay/agent/journal.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <fstream>

#include "relay/core/errors.hpp"
#include "relay/core/util.hpp"

namespace relay::agent {

namespace {

constexpr const char* kKindManifested = "manifested";
constexpr const char* kKindSession = "session";
constexpr const char* kKindAck = "ack";
constexpr const char* kKindPhase = "phase";

}  // namespace

SourceFingerprint fingerprint_of(const std::filesystem::path& file) {
    struct ::stat st {};
    if (::stat(file.c_str(), &st) != 0) {
        throw IoError("cannot stat " + file.string());
    }
    SourceFingerprint fp;
    fp.size = static_cast<std::uint64_t>(st.st_size);
    fp.mtime_ns = static_cast<std::int64_t>(st.st_mtim.tv_sec) * 1'000'000'000 + st.st_mtim.tv_nsec;
    return fp;
}

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open journal " + path_.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw Error("journal " + path_.string() + " is in use by another process");
    }
    try {
        replay();
    } catch (...) {
        ::close(fd_);
        fd_ = -1;
        throw;
    }
}

Journal::~Journal() {
    if (fd_ >= 0) ::close(fd_);
}

void Journal::replay() {
    std::string content;
    {
        std::ifstream in(path_, std::ios::binary);
        content.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    std::size_t pos = 0;
    std::size_t good_end = 0;
    std::uint64_t seq = 0;
    std::uint64_t line_no = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        if (nl == std::string::npos) break;  // torn tail, no terminator
        line_no += 1;
        std::string line = content.substr(pos, nl - pos);
        nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
        if (record.is_discarded()) {
            if (nl + 1 == content.size()) break;  // unreadable final line, drop it
            throw ConsistencyError("journal " + path_.string() + " is corrupt at line " +
                                   std::to_string(line_no));
        }
        try {
            apply(record, ++seq);
        } catch (const Error& e) {
            throw ConsistencyError("journal " + path_.string() + " is inconsistent at line " +
                                   std::to_string(line_no) + ": " + e.what());
        }
        pos = nl + 1;
        good_end = pos;
    }
    if (good_end < content.size()) {
        if (::ftruncate(fd_, static_cast<off_t>(good_end)) != 0) {
            throw IoError("cannot truncate torn journal tail in " + path_.string());
        }
    }
}

void Journal::apply(const nlohmann::json& record, std::uint64_t seq) {
    const std::string kind = record.at("kind").get<std::string>();
    const std::string file_id = record.at("file_id").get<std::string>();

    if (kind == kKindManifested) {
        if (replayed_.count(file_id)) {
            throw ConsistencyError("duplicate manifest for file " + file_id);
        }
        JournalFileState fs;
        fs.manifest = core::FileManifest::from_json(record.at("manifest"));
        const auto& fp = record.at("fingerprint");
        fs.fingerprint.size = fp.at("size").get<std::uint64_t>();
        fs.fingerprint.mtime_ns = fp.at("mtime_ns").get<std::int64_t>();
        fs.state = core::advance_state(core::TransferState{}, core::StabilityConfirmed{});
        fs.state = core::advance_state(fs.state, core::ManifestBuilt{fs.manifest.chunk_count()});
        fs.last_seq = seq;
        replayed_.emplace(file_id, std::move(fs));
        return;
    }

    auto it = replayed_.find(file_id);
    if (it == replayed_.end()) {
        throw ConsistencyError("record for unknown file " + file_id);
    }
    JournalFileState& fs = it->second;
    fs.last_seq = seq;

    if (kind == kKindSession) {
        if (fs.state.phase == core::TransferPhase::Committed ||
            fs.state.phase == core::TransferPhase::Failed) {
            throw ConsistencyError("session opened for finished file " + file_id);
        }
        fs.upload_id = record.at("upload_id").get<std::string>();
        // Acks recorded under an earlier session point at a spool the service
        // no longer has.
        fs.state.acked_chunks.clear();
        fs.state.phase = core::TransferPhase::Manifested;
    } else if (kind == kKindAck) {
        fs.state = core::advance_state(
            fs.state, core::ChunkAcked{record.at("chunk").get<std::uint64_t>()});
    } else if (kind == kKindPhase) {
        auto phase = core::phase_from_string(record.at("phase").get<std::string>());
        switch (phase) {
            case core::TransferPhase::Verifying:
                // A crash between verify and commit makes the resume record
                // this a second time; not a conflict.
                if (fs.state.phase == core::TransferPhase::Verifying) break;
                fs.state = core::advance_state(fs.state, core::AllChunksAcked{});
                break;
            case core::TransferPhase::Committed:
                fs.state = core::advance_state(fs.state, core::CommitConfirmed{});
                break;
            case core::TransferPhase::Failed:
                fs.state = core::advance_state(fs.state,
                                               core::TransferError{record.value("error", "")});
                break;
            default:
                throw ConsistencyError("unexpected journaled phase for file " + file_id);
        }
    } else {
        throw ConsistencyError("unknown journal record kind \"" + kind + "\"");
    }
}

void Journal::append_line(const nlohmann::json& record, bool sync) {
    std::string line = record.dump();
    line.push_back('\n');
    std::lock_guard lock(mu_);
    std::size_t off = 0;
    while (off < line.size()) {
        ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw IoError("journal write failed for " + path_.string());
        }
        off += static_cast<std::size_t>(n);
    }
    if (sync && ::fsync(fd_) != 0) {
        throw IoError("journal fsync failed for " + path_.string());
    }
}

void Journal::record_manifested(const core::FileManifest& manifest, const SourceFingerprint& fp) {
    append_line({{"file_id", manifest.file_id},
                 {"fingerprint", {{"mtime_ns", fp.mtime_ns}, {"size", fp.size}}},
                 {"kind", kKindManifested},
                 {"manifest", manifest.to_json()},
                 {"ts", core::now_ms()}},
                true);
}

void Journal::record_session(const std::string& file_id, const std::string& upload_id) {
    append_line(
        {{"file_id", file_id}, {"kind", kKindSession}, {"ts", core::now_ms()}, {"upload_id", upload_id}},
        true);
}

void Journal::record_ack(const std::string& file_id, std::uint64_t index) {
    append_line({{"chunk", index}, {"file_id", file_id}, {"kind", kKindAck}, {"ts", core::now_ms()}},
                false);
}

void Journal::record_phase(const std::string& file_id, core::TransferPhase phase,
                           const std::string& error) {
    nlohmann::json record{{"file_id", file_id},
                          {"kind", kKindPhase},
                          {"phase", core::to_string(phase)},
                          {"ts", core::now_ms()}};
    if (!error.empty()) record["error"] = error;
    append_line(record, true);
}

void Journal::flush() {
    std::lock_guard lock(mu_);
    if (::fsync(fd_) != 0) throw IoError("journal fsync failed for " + path_.string());
}

}  // namespace relay::agent
