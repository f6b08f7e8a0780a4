#include "stepgate/ingest/markup.hpp"

#include <cctype>
#include <map>
#include <optional>

#include "stepgate/domain/names.hpp"

namespace stepgate::ingest {

MarkupError::MarkupError(ErrorCode code, std::size_t position, std::string reason, std::string tag)
    : Error(code, reason + " at offset " + std::to_string(position)),
      position_(position),
      reason_(std::move(reason)),
      tag_(std::move(tag)) {}

namespace {

enum class Tag { screen, control, option, chat, announcement, profile, field };

std::optional<Tag> tag_of(std::string_view name) {
  static const std::map<std::string_view, Tag> kTags = {
      {"screen", Tag::screen},   {"control", Tag::control},           {"option", Tag::option},
      {"chat", Tag::chat},       {"announcement", Tag::announcement}, {"profile", Tag::profile},
      {"field", Tag::field}};
  auto it = kTags.find(name);
  if (it == kTags.end()) return std::nullopt;
  return it->second;
}

struct Attrs {
  std::map<std::string, std::string> values;
  std::size_t position = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  ParsedMarkup run() {
    skip_ws();
    ParsedMarkup out;
    const std::size_t at = pos_;
    auto [name, attrs, self_closing] = open_tag();
    if (*tag_of(name) != Tag::screen) fail(at, "root element must be <screen>, got <" + name + ">");
    screen(out, attrs, self_closing);
    skip_ws();
    if (pos_ != s_.size()) fail(pos_, "trailing content after </screen>");
    return out;
  }

 private:
  [[noreturn]] void fail(std::size_t at, const std::string& why) const {
    throw MarkupError(ErrorCode::malformed_markup, at, why);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }
  bool starts_with(std::string_view p) const { return s_.substr(pos_, p.size()) == p; }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  void expect(char c) {
    if (peek() != c) fail(pos_, std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string name() {
    const std::size_t start = pos_;
    auto ok = [](char c, bool first) {
      return c == '_' || std::islower(static_cast<unsigned char>(c)) ||
             (!first && (std::isdigit(static_cast<unsigned char>(c)) || c == '-'));
    };
    if (eof() || !ok(s_[pos_], true)) fail(pos_, "expected a name");
    while (!eof() && ok(s_[pos_], false)) ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }

  // Decodes one entity starting at '&'.
  void entity(std::string& out) {
    const std::size_t at = pos_;
    const auto semi = s_.find(';', pos_);
    if (semi == std::string_view::npos || semi - pos_ > 10) fail(at, "unterminated entity");
    const std::string_view body = s_.substr(pos_ + 1, semi - pos_ - 1);
    pos_ = semi + 1;
    if (body == "amp") out += '&';
    else if (body == "lt") out += '<';
    else if (body == "gt") out += '>';
    else if (body == "quot") out += '"';
    else if (body == "apos") out += '\'';
    else if (body.size() > 1 && body[0] == '#') {
      unsigned long cp = 0;
      try {
        cp = body[1] == 'x' ? std::stoul(std::string(body.substr(2)), nullptr, 16)
                            : std::stoul(std::string(body.substr(1)), nullptr, 10);
      } catch (const std::exception&) {
        fail(at, "bad character reference");
      }
      if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) fail(at, "bad character reference");
      if (cp < 0x80) {
        out += static_cast<char>(cp);
      } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
      } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
      } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
      }
    } else {
      fail(at, "unknown entity &" + std::string(body) + ";");
    }
  }

  std::string quoted() {
    expect('"');
    std::string out;
    while (true) {
      if (eof()) fail(pos_, "unterminated attribute value");
      const char c = s_[pos_];
      if (c == '"') break;
      if (c == '<') fail(pos_, "'<' in attribute value");
      if (c == '&') entity(out);
      else out += s_[pos_++];
    }
    ++pos_;
    return out;
  }

  struct Open {
    std::string name;
    Attrs attrs;
    bool self_closing = false;
  };

  // Parses "<name attr="v" ...>" or ".../>"; the tag must be registered.
  Open open_tag() {
    const std::size_t at = pos_;
    expect('<');
    Open o;
    o.name = name();
    if (!tag_of(o.name)) throw MarkupError(ErrorCode::unknown_element, at, "unknown element <" + o.name + ">", o.name);
    o.attrs.position = at;
    while (true) {
      const std::size_t before = pos_;
      skip_ws();
      if (starts_with("/>")) {
        pos_ += 2;
        o.self_closing = true;
        return o;
      }
      if (peek() == '>') {
        ++pos_;
        return o;
      }
      if (before == pos_) fail(pos_, "expected whitespace, '>' or '/>'");
      const std::size_t attr_at = pos_;
      std::string key = name();
      skip_ws();
      expect('=');
      skip_ws();
      std::string value = quoted();
      if (!o.attrs.values.emplace(key, std::move(value)).second) fail(attr_at, "duplicate attribute " + key);
    }
  }

  void close_tag(const std::string& expected) {
    const std::size_t at = pos_;
    if (!starts_with("</")) fail(at, "expected </" + expected + ">");
    pos_ += 2;
    const std::string got = name();
    if (got != expected) fail(at, "mismatched </" + got + ">, expected </" + expected + ">");
    skip_ws();
    expect('>');
  }

  void check_attrs(const std::string& tag, const Attrs& a, std::initializer_list<std::string_view> required,
                   std::initializer_list<std::string_view> optional) {
    for (auto r : required)
      if (!a.values.count(std::string(r))) fail(a.position, "<" + tag + "> requires attribute " + std::string(r));
    for (const auto& [k, v] : a.values) {
      bool known = false;
      for (auto r : required) known |= (k == r);
      for (auto o : optional) known |= (k == o);
      if (!known) fail(a.position, "<" + tag + "> has unknown attribute " + k);
    }
  }

  // Text-only content up to the closing tag.
  std::string text_content(const std::string& tag) {
    std::string out;
    while (true) {
      if (eof()) fail(pos_, "unterminated <" + tag + ">");
      if (peek() == '<') {
        if (starts_with("</")) break;
        const std::size_t at = pos_;
        ++pos_;
        const std::string inner = name();
        if (!tag_of(inner)) throw MarkupError(ErrorCode::unknown_element, at, "unknown element <" + inner + ">", inner);
        fail(at, "<" + inner + "> not allowed inside <" + tag + ">");
      }
      if (peek() == '&') entity(out);
      else out += s_[pos_++];
    }
    close_tag(tag);
    return out;
  }

  // Calls child(open) for each nested element; rejects non-blank text.
  template <typename F>
  void children(const std::string& tag, F&& child) {
    while (true) {
      skip_ws();
      if (eof()) fail(pos_, "unterminated <" + tag + ">");
      if (starts_with("</")) break;
      if (peek() != '<') fail(pos_, "text not allowed inside <" + tag + ">");
      const std::size_t at = pos_;
      Open o = open_tag();
      child(at, std::move(o));
    }
    close_tag(tag);
  }

  std::string leaf_text(const std::string& tag, bool self_closing) {
    return self_closing ? std::string() : text_content(tag);
  }

  void screen(ParsedMarkup& out, const Attrs& a, bool self_closing) {
    check_attrs("screen", a, {"id"}, {"scenario"});
    auto& snap = out.snapshot;
    snap.screen_id = a.values.at("id");
    if (snap.screen_id.empty()) fail(a.position, "<screen> id must not be empty");
    if (auto it = a.values.find("scenario"); it != a.values.end()) snap.active_scenario = it->second;
    if (self_closing) return;
    children("screen", [&](std::size_t at, Open o) {
      switch (*tag_of(o.name)) {
        case Tag::control: snap.controls.push_back(control(o)); break;
        case Tag::chat: out.visible_chat.push_back(chat(o)); break;
        case Tag::announcement: snap.global_announcements.push_back(leaf_text("announcement", o.self_closing)); break;
        case Tag::profile: profile(snap, o); break;
        default: fail(at, "<" + o.name + "> not allowed inside <screen>");
      }
    });
    for (std::size_t i = 0; i < snap.controls.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (snap.controls[i].control_id == snap.controls[j].control_id)
          fail(a.position, "duplicate control id " + snap.controls[i].control_id);
  }

  UiControl control(const Open& o) {
    check_attrs("control", o.attrs, {"id", "kind"}, {"label", "value"});
    UiControl c;
    c.control_id = o.attrs.values.at("id");
    if (c.control_id.empty()) fail(o.attrs.position, "<control> id must not be empty");
    auto kind = parse_enum<ControlKind>(o.attrs.values.at("kind"));
    if (!kind) fail(o.attrs.position, "unknown control kind " + o.attrs.values.at("kind"));
    c.kind = *kind;
    if (auto it = o.attrs.values.find("label"); it != o.attrs.values.end()) c.label = it->second;
    if (auto it = o.attrs.values.find("value"); it != o.attrs.values.end()) c.value = it->second;
    if (has_options(c.kind)) c.options.emplace();
    if (o.self_closing) return c;
    children("control", [&](std::size_t at, Open child) {
      if (*tag_of(child.name) != Tag::option) fail(at, "<" + child.name + "> not allowed inside <control>");
      if (!has_options(c.kind)) fail(at, "<option> inside a " + std::string(to_string(c.kind)) + " control");
      check_attrs("option", child.attrs, {}, {});
      c.options->push_back(leaf_text("option", child.self_closing));
    });
    return c;
  }

  ChatMessage chat(const Open& o) {
    check_attrs("chat", o.attrs, {"author", "id"}, {"ts"});
    ChatMessage m;
    auto author = parse_enum<Author>(o.attrs.values.at("author"));
    if (!author) fail(o.attrs.position, "unknown chat author " + o.attrs.values.at("author"));
    m.author = *author;
    m.message_id = o.attrs.values.at("id");
    if (auto it = o.attrs.values.find("ts"); it != o.attrs.values.end()) {
      try {
        std::size_t used = 0;
        m.timestamp = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("ts");
      } catch (const std::exception&) {
        fail(o.attrs.position, "<chat> ts is not an integer");
      }
    }
    m.text = leaf_text("chat", o.self_closing);
    return m;
  }

  void profile(UiSnapshot& snap, const Open& o) {
    check_attrs("profile", o.attrs, {}, {});
    if (o.self_closing) return;
    children("profile", [&](std::size_t at, Open child) {
      if (*tag_of(child.name) != Tag::field) fail(at, "<" + child.name + "> not allowed inside <profile>");
      check_attrs("field", child.attrs, {"name"}, {});
      const std::string key = child.attrs.values.at("name");
      if (snap.customer_profile.count(key)) fail(at, "duplicate profile field " + key);
      snap.customer_profile[key] = leaf_text("field", child.self_closing);
    });
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

ParsedMarkup parse_markup(std::string_view text) { return Parser(text).run(); }

std::string render_markup(const UiSnapshot& snapshot, const std::vector<ChatMessage>& visible_chat) {
  std::string out = "<screen id=\"" + escape(snapshot.screen_id) + "\"";
  if (snapshot.active_scenario) out += " scenario=\"" + escape(*snapshot.active_scenario) + "\"";
  out += ">";
  for (const auto& c : snapshot.controls) {
    out += "<control id=\"" + escape(c.control_id) + "\" kind=\"" + std::string(to_string(c.kind)) + "\"";
    if (!c.label.empty()) out += " label=\"" + escape(c.label) + "\"";
    if (c.value) out += " value=\"" + escape(*c.value) + "\"";
    if (c.options && !c.options->empty()) {
      out += ">";
      for (const auto& o : *c.options) out += "<option>" + escape(o) + "</option>";
      out += "</control>";
    } else {
      out += "/>";
    }
  }
  for (const auto& m : visible_chat)
    out += "<chat author=\"" + std::string(to_string(m.author)) + "\" id=\"" + escape(m.message_id) + "\" ts=\"" +
           std::to_string(m.timestamp) + "\">" + escape(m.text) + "</chat>";
  for (const auto& a : snapshot.global_announcements) out += "<announcement>" + escape(a) + "</announcement>";
  if (!snapshot.customer_profile.empty()) {
    out += "<profile>";
    for (const auto& [k, v] : snapshot.customer_profile)
      out += "<field name=\"" + escape(k) + "\">" + escape(v) + "</field>";
    out += "</profile>";
  }
  out += "</screen>";
  return out;
}

}  // namespace stepgate::ingest
