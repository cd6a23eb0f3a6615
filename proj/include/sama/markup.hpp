#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sama {

// Literal placeholder tokens shared by the tokenizer, the data format and the
// grounding parser.
inline constexpr std::string_view kRegionToken = "<region>";
inline constexpr std::string_view kSegToken = "[SEG]";
inline constexpr std::string_view kPhraseOpen = "<p>";
inline constexpr std::string_view kPhraseClose = "</p>";

enum class MarkupKind { text, phrase_open, phrase_close, seg, region };

struct MarkupToken {
  MarkupKind kind = MarkupKind::text;
  std::size_t offset = 0;  // byte offset into the scanned text
  std::size_t length = 0;
  std::string text;                     // literal bytes
  std::optional<std::string> object_id; // `[SEG:id]` / `<region:id>`
};

/// Splits text into markup tags and plain-text runs. Recognised tags are
/// `<p>`, `</p>`, `[SEG]`, `[SEG:id]`, `<region>` and `<region:id>` where id
/// is [A-Za-z0-9_.-]+; anything else is plain text.
std::vector<MarkupToken> lex_markup(std::string_view text);

/// `[SEG:id]` -> `[SEG]`, `<region:id>` -> `<region>`.
std::string strip_object_ids(std::string_view text);

/// Plain text with every markup tag removed and whitespace collapsed.
std::string markup_to_plain(std::string_view text);

}  // namespace sama
