#include "stepgate/domain/criticality.hpp"

#include <string>

#include "stepgate/common/error.hpp"
#include "stepgate/domain/names.hpp"

namespace stepgate {

CriticalityMap CriticalityMap::defaults() {
  CriticalityMap m;
  m.critical_[index_of(ActionType::send_text_to_chat)] = true;
  m.critical_[index_of(ActionType::close_chat)] = true;
  m.critical_[index_of(ActionType::transfer_chat)] = true;
  m.finalizing_[index_of(ActionType::close_chat)] = true;
  m.finalizing_[index_of(ActionType::transfer_chat)] = true;
  return m;
}

CriticalityMap& CriticalityMap::set_critical(ActionType t, bool critical) {
  if (!critical && finalizing_[index_of(t)])
    throw Error(ErrorCode::config_invalid,
                "finalizing action " + std::string(to_string(t)) + " cannot be non-critical");
  critical_[index_of(t)] = critical;
  return *this;
}

CriticalityMap& CriticalityMap::set_finalizing(ActionType t, bool finalizing) {
  finalizing_[index_of(t)] = finalizing;
  if (finalizing) critical_[index_of(t)] = true;
  return *this;
}

Criticality CriticalityMap::classify(ActionType t) const noexcept {
  if (finalizing_[index_of(t)]) return Criticality::finalizing;
  return critical_[index_of(t)] ? Criticality::critical : Criticality::non_critical;
}

Criticality classify_criticality(const ActionRecord& action, const CriticalityMap& map) {
  return map.classify(action.action_type);
}

}  // namespace stepgate
