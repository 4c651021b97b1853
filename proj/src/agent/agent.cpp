#include "relay/agent/agent.hpp"

#include <algorithm>
#include <thread>

#include "spdlog/spdlog.h"

namespace relay::agent {

std::filesystem::path Agent::default_journal_path(const AgentConfig& cfg) {
    return cfg.journal_path.empty() ? cfg.staging_root / ".relay-journal" : cfg.journal_path;
}

Agent::Agent(AgentConfig cfg)
    : cfg_(std::move(cfg)),
      journal_(default_journal_path(cfg_)),
      client_(cfg_.server_url, cfg_.credential, cfg_.client) {
    if (!std::filesystem::is_directory(cfg_.staging_root)) {
        throw IoError("staging root " + cfg_.staging_root.string() + " is not a directory");
    }
}

std::filesystem::path Agent::source_path(const core::FileManifest& m) const {
    return cfg_.staging_root / m.owner / std::filesystem::path(m.relative_path);
}

void Agent::warn_once(const std::string& message) {
    std::lock_guard lock(state_mu_);
    if (warned_.insert(message).second) {
        spdlog::warn("{}", message);
        fresh_warnings_.push_back(message);
    }
}

std::vector<std::string> Agent::drain_warnings() {
    std::lock_guard lock(state_mu_);
    return std::exchange(fresh_warnings_, {});
}

void Agent::archive_source(const core::FileManifest& m) {
    auto src = source_path(m);
    auto dst = cfg_.staging_root / ".archived" / m.owner / std::filesystem::path(m.relative_path);
    std::filesystem::create_directories(dst.parent_path());
    // An earlier upload of the same name may already sit there; never clobber.
    auto target = dst;
    for (int k = 1; std::filesystem::exists(target); ++k) {
        target = dst;
        target += "." + std::to_string(k);
    }
    std::filesystem::rename(src, target);
}

ReconcileSummary Agent::reconcile() {
    reconciled_ = true;
    ReconcileSummary summary;

    // Newest journal entry per source path wins; older entries for the same
    // path were superseded by a requeue and stay inert.
    std::map<std::string, const JournalFileState*> newest;
    for (const auto& [file_id, st] : journal_.replayed()) {
        auto key = source_path(st.manifest).string();
        auto it = newest.find(key);
        if (it == newest.end() || st.last_seq > it->second->last_seq) newest[key] = &st;
    }

    for (const auto& [path_str, st] : newest) {
        const std::filesystem::path path(path_str);
        const auto phase = st->state.phase;
        std::optional<SourceFingerprint> current;
        try {
            current = fingerprint_of(path);
        } catch (const IoError&) {
        }

        if (phase == core::TransferPhase::Committed) {
            // Crash between commit and archive leaves the source behind.
            if (current && *current == st->fingerprint) {
                try {
                    archive_source(st->manifest);
                    summary.archived += 1;
                } catch (const std::exception& e) {
                    warn_once("cannot archive committed file " + path_str + ": " + e.what());
                }
            }
            continue;
        }
        if (phase == core::TransferPhase::Failed) {
            // Still present: leave it untracked so the next scan starts over.
            if (current) summary.requeued += 1;
            continue;
        }
        // In flight (manifested, uploading, or verifying).
        if (!current) {
            journal_.record_phase(st->manifest.file_id, core::TransferPhase::Failed,
                                  "source missing at startup");
            summary.failed += 1;
            continue;
        }
        if (*current != st->fingerprint) {
            journal_.record_phase(st->manifest.file_id, core::TransferPhase::Failed,
                                  "source changed while the agent was down");
            summary.failed += 1;
            summary.requeued += 1;  // the changed file re-enters via the scanner
            continue;
        }
        WorkItem item;
        item.manifest = st->manifest;
        item.source = path;
        item.fingerprint = st->fingerprint;
        item.upload_id = st->upload_id;
        item.acked = st->state.acked_chunks;
        {
            std::lock_guard lock(state_mu_);
            tracked_[path_str] = {item.manifest.file_id, item.fingerprint,
                                  core::TransferPhase::Manifested};
            pending_.push_back(std::move(item));
        }
        summary.resumed += 1;
    }
    return summary;
}

void Agent::open_session(WorkItem& item) {
    auto upload_id = client_.init_upload(item.manifest);
    journal_.record_session(item.manifest.file_id, upload_id);
    item.upload_id = upload_id;
    item.acked.clear();
}

void Agent::transfer_one(WorkItem& item) {
    if (!item.upload_id) open_session(item);

    std::mutex acked_mu;
    auto opts = cfg_.upload;
    auto user_hook = opts.on_chunk_acked;
    // Keep the item's ack set current so a requeue after abort resumes
    // precisely.
    opts.on_chunk_acked = [&](std::uint64_t index) {
        {
            std::lock_guard lock(acked_mu);
            item.acked.insert(index);
        }
        if (user_hook) user_hook(index);
    };

    auto run_upload = [&] {
        return upload_file(client_, journal_, item.manifest, item.source, *item.upload_id,
                           item.acked, opts);
    };
    UploadOutcome outcome;
    try {
        outcome = run_upload();
    } catch (const RemoteError& e) {
        if (e.body.code != wire::code::kUnknownUpload) throw;
        // The service no longer knows the session (restart or spool sweep);
        // everything must travel again under a fresh one.
        open_session(item);
        outcome = run_upload();
    }

    {
        std::lock_guard lock(state_mu_);
        tracked_[item.source.string()].phase = core::TransferPhase::Committed;
    }
    spdlog::info("committed {} ({} bytes, {} chunks sent, object {})",
                 item.manifest.owner + "/" + item.manifest.relative_path,
                 item.manifest.total_size, outcome.chunks_sent, outcome.receipt.object_id);
    try {
        archive_source(item.manifest);
        std::lock_guard lock(state_mu_);
        tracked_.erase(item.source.string());
    } catch (const std::exception& e) {
        // Tracked entry stays Committed so the file is not re-sent; the next
        // startup reconcile retries the move.
        warn_once("cannot archive " + item.source.string() + ": " + e.what());
    }
}

void Agent::process(std::vector<WorkItem> work, PassSummary& summary) {
    if (work.empty()) return;
    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> aborting{false};
    std::atomic<std::uint32_t> committed{0};
    std::atomic<std::uint32_t> failed{0};

    auto requeue = [&](WorkItem& item) {
        std::lock_guard lock(state_mu_);
        pending_.push_back(std::move(item));
    };

    auto file_worker = [&] {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= work.size()) return;
            WorkItem& item = work[i];
            if (aborting.load() ||
                (cfg_.upload.should_abort && cfg_.upload.should_abort())) {
                requeue(item);
                continue;
            }
            try {
                transfer_one(item);
                committed.fetch_add(1);
            } catch (const UploadAborted&) {
                aborting.store(true);
                requeue(item);
            } catch (const std::exception& e) {
                failed.fetch_add(1);
                try {
                    journal_.record_phase(item.manifest.file_id, core::TransferPhase::Failed,
                                          e.what());
                } catch (const std::exception& je) {
                    spdlog::error("journal write failed while marking {} failed: {}",
                                  item.manifest.relative_path, je.what());
                }
                {
                    std::lock_guard lock(state_mu_);
                    tracked_[item.source.string()].phase = core::TransferPhase::Failed;
                }
                spdlog::warn("upload of {} failed: {}", item.source.string(), e.what());
            }
        }
    };

    const std::size_t n = std::min<std::size_t>(std::max<std::uint32_t>(cfg_.max_active_files, 1),
                                                work.size());
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (std::size_t i = 0; i < n; ++i) threads.emplace_back(file_worker);
    for (auto& t : threads) t.join();

    summary.committed += committed.load();
    summary.failed += failed.load();
}

PassSummary Agent::run_once() {
    if (!reconciled_) reconcile();
    PassSummary summary;

    // Credential trouble surfaces here, before any file is touched or marked.
    client_.ensure_token();

    std::vector<WorkItem> work;
    {
        std::lock_guard lock(state_mu_);
        work = std::exchange(pending_, {});
    }

    auto scan = scan_staging(cfg_.staging_root, cfg_.stability_window);
    for (const auto& w : scan.warnings) warn_once(w);

    for (const auto& f : scan.stable) {
        if (!cfg_.credential.covers_user(f.owner)) {
            warn_once("no registered user for staged file " + f.absolute_path.string() +
                      " (owner \"" + f.owner + "\")");
            summary.skipped_unregistered += 1;
            continue;
        }
        {
            std::lock_guard lock(state_mu_);
            auto it = tracked_.find(f.absolute_path.string());
            if (it != tracked_.end()) {
                if (it->second.fingerprint == f.fingerprint) continue;
                warn_once("staged file " + f.absolute_path.string() +
                          " changed while a transfer for it is active");
                continue;
            }
        }
        WorkItem item;
        try {
            item.manifest = core::build_manifest(f.absolute_path, f.owner, cfg_.category,
                                                 cfg_.chunk_size);
            item.manifest.relative_path = f.relative_path;
            // Re-stat after hashing; a file still being written settles on a
            // later pass.
            if (fingerprint_of(f.absolute_path) != f.fingerprint) continue;
        } catch (const IoError&) {
            continue;  // vanished mid-scan
        }
        item.source = f.absolute_path;
        item.fingerprint = f.fingerprint;
        journal_.record_manifested(item.manifest, item.fingerprint);
        {
            std::lock_guard lock(state_mu_);
            tracked_[f.absolute_path.string()] = {item.manifest.file_id, f.fingerprint,
                                                  core::TransferPhase::Manifested};
        }
        work.push_back(std::move(item));
    }

    process(std::move(work), summary);
    return summary;
}

void Agent::run(const std::atomic<bool>& stop) {
    std::chrono::milliseconds backoff = cfg_.poll_interval;
    while (!stop.load()) {
        try {
            run_once();
            backoff = cfg_.poll_interval;
        } catch (const std::exception& e) {
            spdlog::warn("pass failed, backing off: {}", e.what());
            backoff = std::min(backoff * 2, std::chrono::milliseconds(60'000));
        }
        auto remaining = backoff;
        while (remaining.count() > 0 && !stop.load()) {
            auto slice = std::min(remaining, std::chrono::milliseconds(50));
            std::this_thread::sleep_for(slice);
            remaining -= slice;
        }
    }
    journal_.flush();
}

}  // namespace relay::agent
