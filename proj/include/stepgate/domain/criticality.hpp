#pragma once

#include <array>

#include "stepgate/domain/types.hpp"

namespace stepgate {

enum class Criticality { non_critical, critical, finalizing };

// Per-action-type criticality flags. Deployments may tighten the default map
// (for example gating click_control) but finalizing types must stay critical.
class CriticalityMap {
 public:
  // send_text_to_chat, close_chat, transfer_chat critical; close/transfer finalizing.
  static CriticalityMap defaults();

  bool is_critical(ActionType t) const noexcept { return critical_[index_of(t)]; }
  bool is_finalizing(ActionType t) const noexcept { return finalizing_[index_of(t)]; }

  // Throws Error(config_invalid) if un-flagging a finalizing type.
  CriticalityMap& set_critical(ActionType t, bool critical);
  CriticalityMap& set_finalizing(ActionType t, bool finalizing);

  Criticality classify(ActionType t) const noexcept;

  bool operator==(const CriticalityMap&) const = default;

 private:
  std::array<bool, 9> critical_{};
  std::array<bool, 9> finalizing_{};
};

Criticality classify_criticality(const ActionRecord& action, const CriticalityMap& map);

}  // namespace stepgate
