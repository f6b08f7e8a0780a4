#pragma once

// Canonical JSON encoding of the domain types. Field names are the snake_case
// names used across the ingest, dataset, metrics and service layers; optional
// fields are omitted when absent. Decoding is strict: unknown enum names and
// kind/body mismatches throw Error(malformed_event).

#include <string>

#include "json.hpp"
#include "stepgate/domain/types.hpp"

namespace stepgate {

using Json = nlohmann::json;

void to_json(Json& j, const ChatMessage& v);
void from_json(const Json& j, ChatMessage& v);
void to_json(Json& j, const UiControl& v);
void from_json(const Json& j, UiControl& v);
void to_json(Json& j, const UiSnapshot& v);
void from_json(const Json& j, UiSnapshot& v);
void to_json(Json& j, const ActionRecord& v);
void from_json(const Json& j, ActionRecord& v);
void to_json(Json& j, const FeedbackRecord& v);
void from_json(const Json& j, FeedbackRecord& v);
void to_json(Json& j, const PolicyProposal& v);
void from_json(const Json& j, PolicyProposal& v);
void to_json(Json& j, const CriticScore& v);
void from_json(const Json& j, CriticScore& v);
void to_json(Json& j, const SessionEvent& v);
void from_json(const Json& j, SessionEvent& v);
void to_json(Json& j, const PendingProposal& v);
void from_json(const Json& j, PendingProposal& v);
void to_json(Json& j, const SessionState& v);
void from_json(const Json& j, SessionState& v);

// Enum <-> string with strict decoding.
template <typename Enum>
Enum enum_from_json(const Json& j, const char* field);

std::string to_jsonl(const SessionEvent& event);
SessionEvent event_from_jsonl(const std::string& line);

}  // namespace stepgate
