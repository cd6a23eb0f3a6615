#include "sama/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "sama/errors.hpp"
#include "sama/markup.hpp"

namespace sama {

namespace {

const char* const kSpecialNames[SpecialTokens::count] = {"<pad>",  "<unk>",      "<bos>", "<eos>", "<user>",
                                                         "<assistant>", "<region>", "[SEG]", "<p>", "</p>"};

bool word_char(unsigned char c) { return std::isalnum(c) || c == '\'' || c >= 0x80; }

}  // namespace

Tokenizer::Tokenizer() {
  for (const char* s : kSpecialNames) add(s);
}

Tokenizer::Tokenizer(const std::vector<std::string>& words) : Tokenizer() {
  for (const std::string& w : words) {
    if (!index_.count(w)) add(w);
  }
}

void Tokenizer::add(const std::string& token) {
  index_.emplace(token, static_cast<int>(vocab_.size()));
  vocab_.push_back(token);
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts) {
  std::set<std::string> words;
  for (const std::string& t : texts) {
    for (std::string& w : split_words(markup_to_plain(t))) words.insert(std::move(w));
  }
  return Tokenizer(std::vector<std::string>(words.begin(), words.end()));
}

std::vector<std::string> Tokenizer::split_words(std::string_view plain) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < plain.size()) {
    const auto c = static_cast<unsigned char>(plain[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (word_char(c)) {
      std::string w;
      while (i < plain.size() && word_char(static_cast<unsigned char>(plain[i]))) {
        w += static_cast<char>(std::tolower(static_cast<unsigned char>(plain[i])));
        ++i;
      }
      out.push_back(std::move(w));
    } else {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    }
  }
  return out;
}

int Tokenizer::id(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? SpecialTokens::unk : it->second;
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || id >= size()) throw InputError("token id " + std::to_string(id) + " outside vocabulary");
  return vocab_[static_cast<std::size_t>(id)];
}

TokenizedText Tokenizer::encode(std::string_view marked_up) const {
  TokenizedText out;
  for (const MarkupToken& t : lex_markup(marked_up)) {
    switch (t.kind) {
      case MarkupKind::text:
        for (const std::string& w : split_words(t.text)) out.ids.push_back(id(w));
        break;
      case MarkupKind::phrase_open: out.ids.push_back(SpecialTokens::phrase_open); break;
      case MarkupKind::phrase_close: out.ids.push_back(SpecialTokens::phrase_close); break;
      case MarkupKind::seg:
        out.ids.push_back(SpecialTokens::seg);
        out.seg_objects.push_back(t.object_id);
        break;
      case MarkupKind::region: out.regions.push_back({static_cast<int>(out.ids.size()), t.object_id}); break;
    }
  }
  return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  bool glue_next = true;  // no space before the first token
  int prev = -1;
  for (int i : ids) {
    if (i == SpecialTokens::pad || i == SpecialTokens::bos || i == SpecialTokens::eos || i == SpecialTokens::user ||
        i == SpecialTokens::assistant) {
      continue;
    }
    const std::string& tok = token(i);
    const bool is_punct = tok.size() == 1 && std::ispunct(static_cast<unsigned char>(tok[0])) && tok != "'";
    const bool glue = glue_next || is_punct || i == SpecialTokens::phrase_close ||
                      (i == SpecialTokens::seg && prev == SpecialTokens::phrase_close);
    if (!glue) out += ' ';
    out += tok;
    glue_next = i == SpecialTokens::phrase_open;
    prev = i;
  }
  return out;
}

}  // namespace sama
