#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "relay/agent/journal.hpp"

namespace relay::agent {

// A regular file under <root>/<owner>/ whose size and mtime have been quiet
// for the stability window.
struct StagedFile {
    std::string owner;
    std::string relative_path;  // below the owner directory
    std::filesystem::path absolute_path;
    SourceFingerprint fingerprint;
};

struct ScanResult {
    std::vector<StagedFile> stable;
    // Files that cannot be routed (outside any user directory, or under a
    // name that is not a valid user id). Reported, never uploaded.
    std::vector<std::string> warnings;
};

// Walks the staging tree once. Dot entries at any level are skipped, which
// keeps the journal and the archive area out of the upload path. Files that
// vanish mid-scan are skipped silently.
ScanResult scan_staging(const std::filesystem::path& root,
                        std::chrono::milliseconds stability_window);

}  // namespace relay::agent
