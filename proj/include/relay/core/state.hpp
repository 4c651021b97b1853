#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <variant>

#include "relay/core/errors.hpp"

namespace relay::core {

enum class TransferPhase { Discovered, Stable, Manifested, Uploading, Verifying, Committed, Failed };

const char* to_string(TransferPhase p);
TransferPhase phase_from_string(const std::string& s);

struct StabilityConfirmed {};
struct ManifestBuilt {
    std::uint64_t chunk_count = 0;
};
struct ChunkAcked {
    std::uint64_t index = 0;
};
struct AllChunksAcked {};
struct CommitConfirmed {};
struct TransferError {
    std::string message;
};

using TransferEvent = std::variant<StabilityConfirmed, ManifestBuilt, ChunkAcked, AllChunksAcked,
                                   CommitConfirmed, TransferError>;

std::string event_name(const TransferEvent& ev);

struct TransferState {
    TransferPhase phase = TransferPhase::Discovered;
    std::uint64_t chunk_count = 0;  // known once Manifested
    std::set<std::uint64_t> acked_chunks;
    std::uint32_t attempt_count = 0;
    std::optional<std::string> last_error;

    bool all_acked() const { return acked_chunks.size() == chunk_count; }
};

struct StateViolation : Error {
    TransferPhase phase;
    std::string event;
    StateViolation(TransferPhase p, std::string ev);
};

// Pure transition function; illegal (phase, event) pairs throw StateViolation.
TransferState advance_state(const TransferState& state, const TransferEvent& event);

}  // namespace relay::core
