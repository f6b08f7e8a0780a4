#pragma once

// Masking of personal data in session events. Detected entities become
// <STEM_X> placeholders whose letter suffix is assigned per session in order
// of first occurrence; removal fields are dropped from snapshots entirely.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stepgate/domain/codec.hpp"
#include "stepgate/domain/types.hpp"

namespace stepgate::anon {

struct Match {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Match&) const = default;
};

// Pluggable entity detector. Implementations append candidate spans of text;
// overlaps between detectors are resolved by the masker.
class EntityDetector {
 public:
  virtual ~EntityDetector() = default;
  virtual void find(std::string_view text, std::vector<Match>& out) const = 0;
};

// ECMAScript regex; zero-length matches are ignored.
std::shared_ptr<const EntityDetector> regex_detector(const std::string& pattern, bool case_insensitive = false);
// Whole-word term list. Bytes >= 0x80 count as word characters.
std::shared_ptr<const EntityDetector> term_detector(std::vector<std::string> terms, bool case_insensitive = false);

struct DetectorSpec {
  std::string entity_type;
  std::string stem;
  std::optional<std::string> pattern;
  std::vector<std::string> terms;
  bool case_insensitive = false;
};

struct MaskingDictionary {
  std::vector<DetectorSpec> detectors;
  // "customer_profile.<key>" or "controls.<control_id>".
  std::vector<std::string> removal_fields;
};

// Throws Error(config_invalid) on duplicate stems, bad stems or bad patterns.
MaskingDictionary dictionary_from_json(const Json& j);
Json to_json(const MaskingDictionary& dict);

// Email, phone, card number and IBAN patterns plus a short first-name list.
MaskingDictionary default_dictionary();

// Single letters A..Z, then two letters AA, AB, ...; index 676 and beyond
// throws Error(suffix_overflow).
std::string suffix_for(std::size_t index);
inline constexpr std::size_t kMaxSuffixes = 26 * 26;

struct LedgerEntry {
  std::string entity_type;
  std::size_t occurrences = 0;
};

// What was masked, without the surface forms.
struct MaskingLedger {
  std::string session_id;
  std::map<std::string, LedgerEntry> placeholders;
  std::size_t removed_fields = 0;
};

Json to_json(const MaskingLedger& ledger);

struct MaskResult {
  std::vector<SessionEvent> events;
  MaskingLedger ledger;
};

struct Detection {
  Match span;
  std::size_t detector = 0;
};

class Masker {
 public:
  explicit Masker(const MaskingDictionary& dict);

  void add_detector(std::string entity_type, std::string stem, std::shared_ptr<const EntityDetector> detector);

  // Resolved detections outside existing placeholders, ordered by position.
  // Longest match wins; ties go to the leftmost, then to the earlier detector.
  std::vector<Detection> detect(std::string_view text) const;

  // Masks the events of one session. Counters continue from placeholders
  // already present, so masking is idempotent.
  MaskResult mask_session(std::span<const SessionEvent> events) const;

  const std::string& stem(std::size_t detector) const { return entries_[detector].stem; }
  const std::string& entity_type(std::size_t detector) const { return entries_[detector].entity_type; }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::string entity_type;
    std::string stem;
    std::shared_ptr<const EntityDetector> detector;
  };
  std::vector<Entry> entries_;
  std::vector<std::string> removal_fields_;
  std::set<std::string, std::less<>> stems_;
};

MaskResult mask_session(std::span<const SessionEvent> events, const MaskingDictionary& dict);

// Every free-text field the masker rewrites, in traversal order.
std::vector<std::string> text_fields(const SessionEvent& event);

}  // namespace stepgate::anon
