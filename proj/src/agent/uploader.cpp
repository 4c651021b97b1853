#include "relay/agent/uploader.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <random>
#include <thread>
#include <vector>

namespace relay::agent {

namespace {

std::chrono::milliseconds backoff_delay(const UploadOptions& opts, std::uint32_t attempt) {
    double ms = static_cast<double>(opts.backoff_base.count()) *
                std::pow(2.0, static_cast<double>(attempt - 1));
    thread_local std::mt19937_64 rng(std::random_device{}());
    std::uniform_real_distribution<double> jitter(1.0 - opts.backoff_jitter,
                                                  1.0 + opts.backoff_jitter);
    return std::chrono::milliseconds(static_cast<std::int64_t>(ms * jitter(rng)));
}

// Own fd per worker; chunks are read with pread so workers never share a file
// offset.
class SourceReader {
public:
    explicit SourceReader(const std::filesystem::path& path) {
        fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
        if (fd_ < 0) throw IoError("cannot open staged file " + path.string());
        path_ = path;
    }
    ~SourceReader() { ::close(fd_); }
    SourceReader(const SourceReader&) = delete;
    SourceReader& operator=(const SourceReader&) = delete;

    std::string read(std::uint64_t offset, std::uint64_t length) const {
        std::string buf(length, '\0');
        std::size_t got = 0;
        while (got < length) {
            ssize_t n = ::pread(fd_, buf.data() + got, length - got,
                                static_cast<off_t>(offset + got));
            if (n < 0) {
                if (errno == EINTR) continue;
                throw IoError("read failed on staged file " + path_.string());
            }
            if (n == 0) break;
            got += static_cast<std::size_t>(n);
        }
        if (got != length) {
            throw ConsistencyError("staged file " + path_.string() +
                                   " shrank after it was manifested");
        }
        return buf;
    }

private:
    int fd_ = -1;
    std::filesystem::path path_;
};

struct InFlightGuard {
    std::atomic<std::uint32_t>& counter;
    explicit InFlightGuard(std::atomic<std::uint32_t>& c, std::atomic<std::uint32_t>& high) : counter(c) {
        std::uint32_t now = counter.fetch_add(1) + 1;
        std::uint32_t prev = high.load();
        while (now > prev && !high.compare_exchange_weak(prev, now)) {
        }
    }
    ~InFlightGuard() { counter.fetch_sub(1); }
};

}  // namespace

UploadOutcome upload_file(ServiceClient& client, Journal& journal,
                          const core::FileManifest& manifest,
                          const std::filesystem::path& source, const std::string& upload_id,
                          const std::set<std::uint64_t>& already_acked,
                          const UploadOptions& opts) {
    if (opts.parallelism == 0) throw ParamError("parallelism must be at least 1");
    const auto plan = core::plan_resume(manifest, already_acked);

    std::atomic<std::uint64_t> sent{0};
    std::atomic<std::uint32_t> in_flight{0};
    std::atomic<std::uint32_t> high_water{0};

    if (!plan.empty()) {
        std::atomic<std::size_t> cursor{0};
        std::atomic<bool> stopping{false};
        std::mutex err_mu;
        std::exception_ptr first_error;

        auto worker = [&] {
            try {
                SourceReader reader(source);
                for (;;) {
                    if (stopping.load()) return;
                    if (opts.should_abort && opts.should_abort()) throw UploadAborted{};
                    const std::size_t slot = cursor.fetch_add(1);
                    if (slot >= plan.size()) return;
                    const auto& record = manifest.chunks[plan[slot]];
                    for (std::uint32_t attempt = 1;; ++attempt) {
                        auto payload = reader.read(record.offset, record.length);
                        if (!core::verify_chunk(payload, record)) {
                            throw ConsistencyError("staged file " + source.string() +
                                                   " changed since it was manifested");
                        }
                        try {
                            InFlightGuard guard(in_flight, high_water);
                            client.put_chunk(upload_id, record.index, payload,
                                             record.digest.value);
                        } catch (const RemoteError& e) {
                            // A mismatch report means the bytes arrived wrong;
                            // re-read and re-send. Anything else structured is
                            // a terminal answer.
                            const bool transient =
                                e.body.code == wire::code::kChunkDigestMismatch ||
                                e.http_status >= 500;
                            if (!transient || attempt >= opts.max_chunk_attempts) throw;
                            std::this_thread::sleep_for(backoff_delay(opts, attempt));
                            continue;
                        } catch (const NetworkError&) {
                            if (attempt >= opts.max_chunk_attempts) throw;
                            std::this_thread::sleep_for(backoff_delay(opts, attempt));
                            continue;
                        }
                        journal.record_ack(manifest.file_id, record.index);
                        sent.fetch_add(1);
                        if (opts.on_chunk_acked) opts.on_chunk_acked(record.index);
                        break;
                    }
                }
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                stopping.store(true);
            }
        };

        const std::size_t n_workers =
            std::min<std::size_t>(opts.parallelism, plan.size());
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    if (opts.should_abort && opts.should_abort()) throw UploadAborted{};

    journal.record_phase(manifest.file_id, core::TransferPhase::Verifying);
    auto receipt = client.complete_upload(upload_id);
    if (!(receipt.whole_digest == manifest.whole_digest)) {
        throw ConsistencyError("commit receipt digest does not match the manifest for " +
                               manifest.relative_path);
    }
    journal.record_phase(manifest.file_id, core::TransferPhase::Committed);

    UploadOutcome outcome;
    outcome.receipt = std::move(receipt);
    outcome.chunks_sent = sent.load();
    outcome.max_in_flight = high_water.load();
    return outcome;
}

}  // namespace relay::agent
