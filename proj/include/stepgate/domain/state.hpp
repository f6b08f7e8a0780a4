#pragma once

#include <cstdint>
#include <span>

#include "stepgate/domain/types.hpp"

namespace stepgate {

// Applies one event to a session projection. The projection is a left fold
// over the event stream; this is the only place SessionState changes.
// Throws Error(out_of_order_event) on seq gaps and Error(session_closed) for
// events after session_closed.
void apply_event(SessionState& state, const SessionEvent& event);

inline SessionState fold(SessionState state, const SessionEvent& event) {
  apply_event(state, event);
  return state;
}

SessionState replay(std::span<const SessionEvent> events);

// Hash over screen_id, control ids and values, chat-window message ids and the
// control holder. Snapshot sequence numbers are deliberately excluded so that
// a re-rendered identical screen hashes the same (loop detection relies on it).
std::uint64_t state_hash(const SessionState& state) noexcept;

// Structural digest of the whole projection, used for replay/recovery checks.
std::uint64_t full_state_digest(const SessionState& state);

}  // namespace stepgate
