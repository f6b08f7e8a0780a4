#pragma once

// Parser for the snapshot mini-markup. Seven element kinds are recognised:
// screen, control, option, chat, announcement, profile and field. The grammar
// is documented in docs/markup-grammar.md.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "stepgate/common/error.hpp"
#include "stepgate/domain/types.hpp"

namespace stepgate::ingest {

// Malformed input or an unregistered tag, with the byte offset where the
// problem was found. code() is malformed_markup or unknown_element.
class MarkupError : public Error {
 public:
  MarkupError(ErrorCode code, std::size_t position, std::string reason, std::string tag = "");

  std::size_t position() const noexcept { return position_; }
  const std::string& reason() const noexcept { return reason_; }
  // Tag name for unknown_element, empty otherwise.
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::size_t position_;
  std::string reason_;
  std::string tag_;
};

struct ParsedMarkup {
  UiSnapshot snapshot;  // snapshot_seq is left at -1
  // Chat messages visible in the rendered panel. The session chat window is
  // built from message events, so these are informational.
  std::vector<ChatMessage> visible_chat;
};

ParsedMarkup parse_markup(std::string_view text);

// Inverse of parse_markup for the snapshot part; used by the simulator and the
// corpus tools. parse_markup(render_markup(s)).snapshot == s up to snapshot_seq.
std::string render_markup(const UiSnapshot& snapshot, const std::vector<ChatMessage>& visible_chat = {});

}  // namespace stepgate::ingest
