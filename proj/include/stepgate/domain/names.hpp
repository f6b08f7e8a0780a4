#pragma once

#include <optional>
#include <string_view>

#include "stepgate/domain/types.hpp"

namespace stepgate {

std::string_view to_string(Author v);
std::string_view to_string(ControlKind v);
std::string_view to_string(ActionType v);
std::string_view to_string(ActionCategory v);
std::string_view to_string(Actor v);
std::string_view to_string(Verdict v);
std::string_view to_string(Stage v);
std::string_view to_string(ControlHolder v);
std::string_view to_string(ScoreSource v);
std::string_view to_string(DeferralReason v);
std::string_view to_string(HandbackCause v);
std::string_view to_string(ClosedBy v);
std::string_view to_string(EventKind v);
std::string_view to_string(Provenance v);

// Strict parsers: unknown names yield nullopt rather than a default value.
template <typename Enum>
std::optional<Enum> parse_enum(std::string_view name);

template <> std::optional<Author> parse_enum<Author>(std::string_view name);
template <> std::optional<ControlKind> parse_enum<ControlKind>(std::string_view name);
template <> std::optional<ActionType> parse_enum<ActionType>(std::string_view name);
template <> std::optional<ActionCategory> parse_enum<ActionCategory>(std::string_view name);
template <> std::optional<Actor> parse_enum<Actor>(std::string_view name);
template <> std::optional<Verdict> parse_enum<Verdict>(std::string_view name);
template <> std::optional<Stage> parse_enum<Stage>(std::string_view name);
template <> std::optional<ControlHolder> parse_enum<ControlHolder>(std::string_view name);
template <> std::optional<ScoreSource> parse_enum<ScoreSource>(std::string_view name);
template <> std::optional<DeferralReason> parse_enum<DeferralReason>(std::string_view name);
template <> std::optional<HandbackCause> parse_enum<HandbackCause>(std::string_view name);
template <> std::optional<ClosedBy> parse_enum<ClosedBy>(std::string_view name);
template <> std::optional<EventKind> parse_enum<EventKind>(std::string_view name);
template <> std::optional<Provenance> parse_enum<Provenance>(std::string_view name);

}  // namespace stepgate
