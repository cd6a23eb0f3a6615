#include <algorithm>
#include <cctype>
#include <set>

#include "sama/datagen.hpp"
#include "sama/markup.hpp"

namespace sama {

std::string_view to_string(MarkupErrorKind kind) {
  switch (kind) {
    case MarkupErrorKind::unclosed_tag: return "unclosed_tag";
    case MarkupErrorKind::unexpected_close: return "unexpected_close";
    case MarkupErrorKind::nested_tag: return "nested_tag";
    case MarkupErrorKind::missing_object_ref: return "missing_object_ref";
    case MarkupErrorKind::unknown_object: return "unknown_object";
    case MarkupErrorKind::missing_seg: return "missing_seg";
    case MarkupErrorKind::dangling_seg: return "dangling_seg";
    case MarkupErrorKind::misplaced_region: return "misplaced_region";
    case MarkupErrorKind::malformed_turn: return "malformed_turn";
    case MarkupErrorKind::empty_conversation: return "empty_conversation";
    case MarkupErrorKind::no_grounding: return "no_grounding";
  }
  return "unknown";
}

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

void check_reference(const MarkupToken& t, const std::set<std::string>& ids, std::size_t base,
                     std::vector<MarkupError>& errors) {
  if (!t.object_id) {
    errors.push_back({MarkupErrorKind::missing_object_ref, base + t.offset, "'" + t.text + "' lacks an object id"});
  } else if (!ids.count(*t.object_id)) {
    errors.push_back({MarkupErrorKind::unknown_object, base + t.offset, "unknown object id '" + *t.object_id + "'"});
  }
}

}  // namespace

void validate_turn(const Turn& turn, const std::vector<std::string>& object_ids, std::size_t base,
                   std::vector<MarkupError>& errors) {
  const std::set<std::string> ids(object_ids.begin(), object_ids.end());
  if (blank(turn.text)) {
    errors.push_back({MarkupErrorKind::malformed_turn, base, "empty " + turn.role + " turn"});
    return;
  }
  const bool assistant = turn.role == "assistant";
  constexpr std::size_t kNone = std::string::npos;
  std::size_t open = kNone;
  std::size_t awaiting_seg = kNone;  // offset of a closed phrase still needing [SEG]
  bool after_close = false;
  for (const MarkupToken& t : lex_markup(turn.text)) {
    const std::size_t at = base + t.offset;
    if (!assistant) {
      if (t.kind == MarkupKind::region) {
        check_reference(t, ids, base, errors);
      } else if (t.kind != MarkupKind::text) {
        errors.push_back({MarkupErrorKind::malformed_turn, at, "grounding markup '" + t.text + "' in a user turn"});
      }
      continue;
    }
    if (t.kind == MarkupKind::text && blank(t.text)) continue;
    if (awaiting_seg != kNone && t.kind != MarkupKind::seg) {
      errors.push_back({MarkupErrorKind::missing_seg, awaiting_seg, "phrase is not followed by [SEG:id]"});
      awaiting_seg = kNone;
    }
    switch (t.kind) {
      case MarkupKind::text: break;
      case MarkupKind::region:
        errors.push_back({MarkupErrorKind::misplaced_region, at, "<region> inside an assistant turn"});
        break;
      case MarkupKind::phrase_open:
        if (open != kNone) {
          errors.push_back({MarkupErrorKind::nested_tag, at, "<p> opened inside another phrase"});
        } else {
          open = at;
        }
        break;
      case MarkupKind::phrase_close:
        if (open == kNone) {
          errors.push_back({MarkupErrorKind::unexpected_close, at, "</p> without an open phrase"});
        } else {
          awaiting_seg = open;
          open = kNone;
        }
        break;
      case MarkupKind::seg:
        if (open != kNone) {
          errors.push_back({MarkupErrorKind::unclosed_tag, open, "[SEG] inside an open phrase"});
          open = kNone;
        } else if (!after_close) {
          errors.push_back({MarkupErrorKind::dangling_seg, at, "[SEG] without a preceding phrase"});
        }
        awaiting_seg = kNone;
        check_reference(t, ids, base, errors);
        break;
    }
    after_close = t.kind == MarkupKind::phrase_close;
  }
  if (open != kNone) errors.push_back({MarkupErrorKind::unclosed_tag, open, "<p> never closed"});
  if (awaiting_seg != kNone) errors.push_back({MarkupErrorKind::missing_seg, awaiting_seg, "phrase is not followed by [SEG:id]"});
}

namespace {

bool has_grounding(const Turn& t) {
  if (t.role != "assistant") return false;
  for (const MarkupToken& m : lex_markup(t.text)) {
    if (m.kind == MarkupKind::seg) return true;
  }
  return false;
}

void check_structure(const std::vector<Turn>& turns, const std::vector<std::size_t>& offsets,
                     std::vector<MarkupError>& errors) {
  if (turns.empty()) {
    errors.push_back({MarkupErrorKind::empty_conversation, 0, "no turns"});
    return;
  }
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const char* want = i % 2 == 0 ? "user" : "assistant";
    if (turns[i].role != want) {
      errors.push_back({MarkupErrorKind::malformed_turn, offsets[i], "expected a " + std::string(want) + " turn"});
    }
  }
  if (turns.back().role != "assistant") {
    errors.push_back({MarkupErrorKind::malformed_turn, offsets.back(), "conversation ends without an answer"});
  }
  if (std::none_of(turns.begin(), turns.end(), has_grounding)) {
    errors.push_back({MarkupErrorKind::no_grounding, 0, "no assistant turn carries [SEG]"});
  }
}

}  // namespace

ValidationResult parse_and_validate(std::string_view raw, const std::vector<std::string>& object_ids) {
  ValidationResult r;
  std::vector<std::size_t> offsets;       // start of each turn's text
  std::vector<std::size_t> line_offsets;  // start of each turn's prefix line
  std::size_t text_end = 0;
  auto close_turn = [&](std::size_t end) {
    if (r.turns.empty()) return;
    std::size_t a = offsets.back(), b = std::max(a, end);
    while (b > a && std::isspace(static_cast<unsigned char>(raw[b - 1]))) --b;
    r.turns.back().text = std::string(raw.substr(a, b - a));
  };
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t end = raw.find('\n', pos);
    if (end == std::string_view::npos) end = raw.size();
    const std::string_view line = raw.substr(pos, end - pos);
    std::size_t lead = 0;
    while (lead < line.size() && (line[lead] == ' ' || line[lead] == '\t')) ++lead;
    const std::string_view body = line.substr(lead);
    std::optional<std::string> role;
    std::size_t prefix = 0;
    if (body.rfind("USER:", 0) == 0) {
      role = "user";
      prefix = 5;
    } else if (body.rfind("ASSISTANT:", 0) == 0) {
      role = "assistant";
      prefix = 10;
    }
    if (role) {
      close_turn(pos);
      std::size_t start = pos + lead + prefix;
      while (start < end && (raw[start] == ' ' || raw[start] == '\t')) ++start;
      r.turns.push_back({*role, ""});
      offsets.push_back(start);
      line_offsets.push_back(pos + lead);
    } else if (r.turns.empty() && !blank(line)) {
      r.errors.push_back({MarkupErrorKind::malformed_turn, pos + lead, "text before the first USER:/ASSISTANT: line"});
    }
    text_end = end;
    pos = end + 1;
  }
  close_turn(text_end);
  check_structure(r.turns, line_offsets, r.errors);
  for (std::size_t i = 0; i < r.turns.size(); ++i) validate_turn(r.turns[i], object_ids, offsets[i], r.errors);
  std::stable_sort(r.errors.begin(), r.errors.end(), [](const MarkupError& a, const MarkupError& b) { return a.offset < b.offset; });
  return r;
}

ValidationResult validate_conversation(const std::vector<Turn>& turns, const std::vector<std::string>& object_ids) {
  ValidationResult r;
  r.turns = turns;
  check_structure(turns, std::vector<std::size_t>(turns.size(), 0), r.errors);
  for (const Turn& t : turns) validate_turn(t, object_ids, 0, r.errors);
  return r;
}

bool color_bijection(const GroundedDialogueRecord& record) {
  std::set<std::string> colors, ids;
  for (const RecordObject& o : record.objects) {
    if (o.color_tag.empty() || !colors.insert(o.color_tag).second || !ids.insert(o.object_id).second) return false;
  }
  return colors.size() == record.objects.size();
}

}  // namespace sama
