#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stepgate {

// Every failure the library reports carries one of these codes. Names follow
// the error vocabulary used in the operator API and CLI output.
enum class ErrorCode {
  malformed_action,
  malformed_event,
  malformed_markup,
  unknown_element,
  duplicate_seq,
  out_of_order_event,
  no_actions,
  suffix_overflow,
  insufficient_data,
  missing_correction,
  no_action,
  empty_input,
  session_closed,
  not_policy_turn,
  not_operator_turn,
  no_pending_proposal,
  handback_without_deferral,
  illegal_transition,
  empty_feedback,
  window_too_small,
  insufficient_feedback,
  clock_skew,
  group_overlap,
  config_invalid,
  stale_decision,
  unauthorized,
  cursor_too_old,
  not_found,
  io_error,
  protocol_error,
  version_conflict,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stepgate
