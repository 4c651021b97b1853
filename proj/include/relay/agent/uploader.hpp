#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>

#include "relay/agent/client.hpp"
#include "relay/agent/journal.hpp"
#include "relay/core/manifest.hpp"
#include "relay/wire.hpp"

namespace relay::agent {

// Graceful shutdown interrupted the transfer; journal state is intact and the
// next run resumes where it stopped.
struct UploadAborted : Error {
    UploadAborted() : Error("upload aborted by shutdown request") {}
};

struct UploadOptions {
    std::uint32_t parallelism = 4;
    std::uint32_t max_chunk_attempts = 5;
    std::chrono::milliseconds backoff_base{500};
    double backoff_jitter = 0.2;  // fraction of the delay, both directions
    // Polled between chunks; true stops taking new work and raises UploadAborted.
    std::function<bool()> should_abort;
    // Test hook, called after each chunk ack is journaled.
    std::function<void(std::uint64_t index)> on_chunk_acked;
};

struct UploadOutcome {
    wire::CommitReceipt receipt;
    std::uint64_t chunks_sent = 0;    // transferred in this run, resumes excluded
    std::uint32_t max_in_flight = 0;  // high-water mark of concurrent chunk puts
};

// Transfers every not-yet-acked chunk of an open session with bounded
// parallelism, then completes the upload. Chunk payloads are read back from
// the source at send time and re-verified against the manifest, so a source
// file that changed after manifesting fails here instead of corrupting the
// remote object. Transient errors retry with jittered exponential backoff.
UploadOutcome upload_file(ServiceClient& client, Journal& journal,
                          const core::FileManifest& manifest,
                          const std::filesystem::path& source, const std::string& upload_id,
                          const std::set<std::uint64_t>& already_acked,
                          const UploadOptions& opts);

}  // namespace relay::agent
