#include "relay/core/state.hpp"

namespace relay::core {

const char* to_string(TransferPhase p) {
    switch (p) {
        case TransferPhase::Discovered: return "discovered";
        case TransferPhase::Stable: return "stable";
        case TransferPhase::Manifested: return "manifested";
        case TransferPhase::Uploading: return "uploading";
        case TransferPhase::Verifying: return "verifying";
        case TransferPhase::Committed: return "committed";
        case TransferPhase::Failed: return "failed";
    }
    return "?";
}

TransferPhase phase_from_string(const std::string& s) {
    if (s == "discovered") return TransferPhase::Discovered;
    if (s == "stable") return TransferPhase::Stable;
    if (s == "manifested") return TransferPhase::Manifested;
    if (s == "uploading") return TransferPhase::Uploading;
    if (s == "verifying") return TransferPhase::Verifying;
    if (s == "committed") return TransferPhase::Committed;
    if (s == "failed") return TransferPhase::Failed;
    throw ValidationError("unknown transfer phase \"" + s + "\"");
}

std::string event_name(const TransferEvent& ev) {
    struct Namer {
        std::string operator()(const StabilityConfirmed&) { return "StabilityConfirmed"; }
        std::string operator()(const ManifestBuilt&) { return "ManifestBuilt"; }
        std::string operator()(const ChunkAcked& e) {
            return "ChunkAcked(" + std::to_string(e.index) + ")";
        }
        std::string operator()(const AllChunksAcked&) { return "AllChunksAcked"; }
        std::string operator()(const CommitConfirmed&) { return "CommitConfirmed"; }
        std::string operator()(const TransferError&) { return "Error"; }
    };
    return std::visit(Namer{}, ev);
}

StateViolation::StateViolation(TransferPhase p, std::string ev)
    : Error("illegal transition: event " + ev + " in phase " + to_string(p)),
      phase(p),
      event(std::move(ev)) {}

TransferState advance_state(const TransferState& state, const TransferEvent& event) {
    TransferState next = state;
    const TransferPhase p = state.phase;
    auto reject = [&]() -> TransferState { throw StateViolation(p, event_name(event)); };

    return std::visit(
        [&](const auto& ev) -> TransferState {
            using E = std::decay_t<decltype(ev)>;
            if constexpr (std::is_same_v<E, StabilityConfirmed>) {
                if (p != TransferPhase::Discovered) return reject();
                next.phase = TransferPhase::Stable;
                return next;
            } else if constexpr (std::is_same_v<E, ManifestBuilt>) {
                if (p != TransferPhase::Stable) return reject();
                next.phase = TransferPhase::Manifested;
                next.chunk_count = ev.chunk_count;
                next.acked_chunks.clear();
                return next;
            } else if constexpr (std::is_same_v<E, ChunkAcked>) {
                if (p != TransferPhase::Manifested && p != TransferPhase::Uploading &&
                    p != TransferPhase::Failed) {
                    return reject();
                }
                if (ev.index >= state.chunk_count) return reject();
                next.phase = TransferPhase::Uploading;
                next.acked_chunks.insert(ev.index);
                return next;
            } else if constexpr (std::is_same_v<E, AllChunksAcked>) {
                // Manifested is legal only for the zero-chunk case or a resume
                // where every chunk was acked before the restart.
                if (p != TransferPhase::Uploading && p != TransferPhase::Manifested) return reject();
                if (!state.all_acked()) return reject();
                next.phase = TransferPhase::Verifying;
                return next;
            } else if constexpr (std::is_same_v<E, CommitConfirmed>) {
                if (p != TransferPhase::Verifying) return reject();
                next.phase = TransferPhase::Committed;
                return next;
            } else if constexpr (std::is_same_v<E, TransferError>) {
                if (p != TransferPhase::Manifested && p != TransferPhase::Uploading &&
                    p != TransferPhase::Verifying) {
                    return reject();
                }
                next.phase = TransferPhase::Failed;
                next.attempt_count = state.attempt_count + 1;
                next.last_error = ev.message;
                return next;
            }
        },
        event);
}

}  // namespace relay::core
