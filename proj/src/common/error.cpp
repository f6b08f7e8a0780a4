#include "stepgate/common/error.hpp"

namespace stepgate {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::malformed_action: return "MalformedAction";
    case ErrorCode::malformed_event: return "MalformedEvent";
    case ErrorCode::malformed_markup: return "MalformedMarkup";
    case ErrorCode::unknown_element: return "UnknownElement";
    case ErrorCode::duplicate_seq: return "DuplicateSeq";
    case ErrorCode::out_of_order_event: return "OutOfOrderEvent";
    case ErrorCode::no_actions: return "NoActions";
    case ErrorCode::suffix_overflow: return "SuffixOverflow";
    case ErrorCode::insufficient_data: return "InsufficientData";
    case ErrorCode::missing_correction: return "MissingCorrection";
    case ErrorCode::no_action: return "NoAction";
    case ErrorCode::empty_input: return "EmptyInput";
    case ErrorCode::session_closed: return "SessionClosed";
    case ErrorCode::not_policy_turn: return "NotPolicyTurn";
    case ErrorCode::not_operator_turn: return "NotOperatorTurn";
    case ErrorCode::no_pending_proposal: return "NoPendingProposal";
    case ErrorCode::handback_without_deferral: return "HandbackWithoutDeferral";
    case ErrorCode::illegal_transition: return "IllegalTransition";
    case ErrorCode::empty_feedback: return "EmptyFeedback";
    case ErrorCode::window_too_small: return "WindowTooSmall";
    case ErrorCode::insufficient_feedback: return "InsufficientFeedback";
    case ErrorCode::clock_skew: return "ClockSkew";
    case ErrorCode::group_overlap: return "GroupOverlap";
    case ErrorCode::config_invalid: return "ConfigInvalid";
    case ErrorCode::stale_decision: return "StaleDecision";
    case ErrorCode::unauthorized: return "Unauthorized";
    case ErrorCode::cursor_too_old: return "CursorTooOld";
    case ErrorCode::not_found: return "NotFound";
    case ErrorCode::io_error: return "IoError";
    case ErrorCode::protocol_error: return "ProtocolError";
    case ErrorCode::version_conflict: return "VersionConflict";
  }
  return "Unknown";
}

}  // namespace stepgate
