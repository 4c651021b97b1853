#include "relay/agent/scanner.hpp"

#include <system_error>

#include "relay/core/errors.hpp"
#include "relay/core/manifest.hpp"

namespace relay::agent {

namespace {

bool is_dot_entry(const std::filesystem::path& p) {
    auto name = p.filename().string();
    return !name.empty() && name.front() == '.';
}

std::int64_t realtime_now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void collect_user_files(const std::filesystem::path& user_dir, const std::string& owner,
                        std::int64_t stable_before_ns, ScanResult& out) {
    std::error_code ec;
    std::filesystem::recursive_directory_iterator it(
        user_dir, std::filesystem::directory_options::skip_permission_denied, ec);
    if (ec) return;
    for (auto end = std::filesystem::end(it); it != end; it.increment(ec)) {
        if (ec) return;
        const auto& entry = *it;
        if (is_dot_entry(entry.path())) {
            if (entry.is_directory(ec)) it.disable_recursion_pending();
            continue;
        }
        if (entry.is_symlink(ec) || !entry.is_regular_file(ec)) continue;
        SourceFingerprint fp;
        try {
            fp = fingerprint_of(entry.path());
        } catch (const IoError&) {
            continue;  // vanished between listing and stat
        }
        if (fp.mtime_ns > stable_before_ns) continue;  // still settling
        StagedFile f;
        f.owner = owner;
        f.relative_path = entry.path().lexically_relative(user_dir).generic_string();
        f.absolute_path = entry.path();
        f.fingerprint = fp;
        out.stable.push_back(std::move(f));
    }
}

}  // namespace

ScanResult scan_staging(const std::filesystem::path& root,
                        std::chrono::milliseconds stability_window) {
    std::error_code ec;
    std::filesystem::directory_iterator top(root, ec);
    if (ec) throw IoError("cannot read staging root " + root.string());

    const std::int64_t stable_before_ns =
        realtime_now_ns() -
        std::chrono::duration_cast<std::chrono::nanoseconds>(stability_window).count();

    ScanResult result;
    for (auto end = std::filesystem::end(top); top != end; top.increment(ec)) {
        if (ec) break;
        const auto& entry = *top;
        if (is_dot_entry(entry.path())) continue;
        if (entry.is_symlink(ec)) continue;
        if (entry.is_regular_file(ec)) {
            result.warnings.push_back("unroutable file outside any user directory: " +
                                      entry.path().string());
            continue;
        }
        if (!entry.is_directory(ec)) continue;
        auto owner = entry.path().filename().string();
        if (!core::valid_user_id(owner)) {
            result.warnings.push_back("top-level directory \"" + owner +
                                      "\" is not a valid user id, contents skipped");
            continue;
        }
        collect_user_files(entry.path(), owner, stable_before_ns, result);
    }
    return result;
}

}  // namespace relay::agent
