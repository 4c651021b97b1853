#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "relay/agent/client.hpp"
#include "relay/agent/credential.hpp"
#include "relay/agent/journal.hpp"
#include "relay/agent/scanner.hpp"
#include "relay/agent/uploader.hpp"
#include "relay/core/manifest.hpp"

namespace relay::agent {

struct AgentConfig {
    std::filesystem::path staging_root;
    std::string server_url;
    DeviceCredential credential;
    std::filesystem::path journal_path;  // empty: <staging_root>/.relay-journal
    std::uint64_t chunk_size = core::kDefaultChunkSize;
    std::uint32_t max_active_files = 2;
    std::chrono::milliseconds stability_window{5000};
    std::chrono::milliseconds poll_interval{1000};
    core::Category category = core::Category::uncategorized;
    UploadOptions upload;
    ClientOptions client;
};

struct ReconcileSummary {
    std::uint32_t resumed = 0;   // in-flight transfers picked up where they stopped
    std::uint32_t requeued = 0;  // failed or changed sources returned to the scan path
    std::uint32_t archived = 0;  // committed leftovers moved to the archive area
    std::uint32_t failed = 0;    // journaled transfers whose source is gone or altered
};

struct PassSummary {
    std::uint32_t committed = 0;
    std::uint32_t failed = 0;
    std::uint32_t skipped_unregistered = 0;
};

// The staging-volume daemon: reconciles the journal once, then repeatedly
// scans for stable files and uploads them, at most max_active_files at a
// time with chunk-level parallelism inside each file. Committed sources move
// to <staging>/.archived/<owner>/ rather than being deleted.
class Agent {
public:
    explicit Agent(AgentConfig cfg);

    // Startup pass over the replayed journal; runs automatically before the
    // first scan if not called explicitly.
    ReconcileSummary reconcile();
    PassSummary run_once();
    // Polling loop; returns after stop becomes true and in-flight work has
    // been journaled and requeued.
    void run(const std::atomic<bool>& stop);

    ServiceClient& client() { return client_; }
    Journal& journal() { return journal_; }
    // Unseen routing and skip warnings accumulated since the last call.
    std::vector<std::string> drain_warnings();

private:
    struct WorkItem {
        core::FileManifest manifest;
        std::filesystem::path source;
        SourceFingerprint fingerprint;
        std::optional<std::string> upload_id;
        std::set<std::uint64_t> acked;
    };
    struct Tracked {
        std::string file_id;
        SourceFingerprint fingerprint;
        core::TransferPhase phase;
    };

    std::filesystem::path source_path(const core::FileManifest& m) const;
    void archive_source(const core::FileManifest& m);
    void open_session(WorkItem& item);
    void transfer_one(WorkItem& item);
    void process(std::vector<WorkItem> work, PassSummary& summary);
    void warn_once(const std::string& message);
    static std::filesystem::path default_journal_path(const AgentConfig& cfg);

    AgentConfig cfg_;
    Journal journal_;
    ServiceClient client_;
    bool reconciled_ = false;

    std::mutex state_mu_;
    std::map<std::string, Tracked> tracked_;  // keyed by absolute source path
    std::vector<WorkItem> pending_;           // resumes and requeues for the next pass
    std::set<std::string> warned_;
    std::vector<std::string> fresh_warnings_;
};

}  // namespace relay::agent
