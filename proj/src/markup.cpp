#include "sama/markup.hpp"

#include <cctype>

namespace sama {

namespace {

bool id_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-' || c == '.';
}

// Matches `<head>` or `<head>:id<tail>` style tags at `pos`. `head` excludes
// the closing delimiter; returns the tag length or 0.
std::size_t match_tag(std::string_view text, std::size_t pos, std::string_view head, char close,
                      std::optional<std::string>& id) {
  if (text.substr(pos, head.size()) != head) return 0;
  std::size_t i = pos + head.size();
  if (i < text.size() && text[i] == close) return i + 1 - pos;
  if (i >= text.size() || text[i] != ':') return 0;
  const std::size_t id_start = ++i;
  while (i < text.size() && id_char(text[i])) ++i;
  if (i == id_start || i >= text.size() || text[i] != close) return 0;
  id = std::string(text.substr(id_start, i - id_start));
  return i + 1 - pos;
}

}  // namespace

std::vector<MarkupToken> lex_markup(std::string_view text) {
  std::vector<MarkupToken> out;
  std::size_t text_start = 0;
  auto flush = [&](std::size_t end) {
    if (end > text_start) {
      out.push_back({MarkupKind::text, text_start, end - text_start, std::string(text.substr(text_start, end - text_start)), {}});
    }
  };
  std::size_t i = 0;
  while (i < text.size()) {
    MarkupToken tok;
    std::optional<std::string> id;
    std::size_t len = 0;
    if (text[i] == '<') {
      if (text.substr(i, kPhraseOpen.size()) == kPhraseOpen) {
        tok.kind = MarkupKind::phrase_open;
        len = kPhraseOpen.size();
      } else if (text.substr(i, kPhraseClose.size()) == kPhraseClose) {
        tok.kind = MarkupKind::phrase_close;
        len = kPhraseClose.size();
      } else if ((len = match_tag(text, i, "<region", '>', id)) != 0) {
        tok.kind = MarkupKind::region;
      }
    } else if (text[i] == '[') {
      if ((len = match_tag(text, i, "[SEG", ']', id)) != 0) tok.kind = MarkupKind::seg;
    }
    if (len == 0) {
      ++i;
      continue;
    }
    flush(i);
    tok.offset = i;
    tok.length = len;
    tok.text = std::string(text.substr(i, len));
    tok.object_id = std::move(id);
    out.push_back(std::move(tok));
    i += len;
    text_start = i;
  }
  flush(text.size());
  return out;
}

std::string strip_object_ids(std::string_view text) {
  std::string out;
  for (const MarkupToken& t : lex_markup(text)) {
    switch (t.kind) {
      case MarkupKind::seg: out += kSegToken; break;
      case MarkupKind::region: out += kRegionToken; break;
      default: out += t.text; break;
    }
  }
  return out;
}

std::string markup_to_plain(std::string_view text) {
  std::string joined;
  for (const MarkupToken& t : lex_markup(text)) {
    if (t.kind == MarkupKind::text) {
      joined += t.text;
    } else {
      joined += ' ';
    }
  }
  std::string out;
  bool space = false;
  for (char c : joined) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

}  // namespace sama
