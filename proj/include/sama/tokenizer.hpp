#pragma once

// Word-level tokenizer with the reserved markup tokens. Words are lowercased
// runs of letters, digits and apostrophes; every other printable character
// is its own token.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sama {

struct SpecialTokens {
  static constexpr int pad = 0;
  static constexpr int unk = 1;
  static constexpr int bos = 2;
  static constexpr int eos = 3;
  static constexpr int user = 4;
  static constexpr int assistant = 5;
  static constexpr int region = 6;
  static constexpr int seg = 7;
  static constexpr int phrase_open = 8;
  static constexpr int phrase_close = 9;
  static constexpr int count = 10;
};

/// Result of tokenizing marked-up text. `<region:id>` markers do not become
/// tokens; they are recorded as insertion points for object embeddings.
struct TokenizedText {
  std::vector<int> ids;
  std::vector<std::optional<std::string>> seg_objects;  // one per [SEG] id, in order
  struct RegionRef {
    int position = 0;  // index into `ids` before which the object is spliced
    std::optional<std::string> object_id;
  };
  std::vector<RegionRef> regions;
};

class Tokenizer {
 public:
  Tokenizer();
  /// Specials followed by `words` (deduplicated, in the given order).
  explicit Tokenizer(const std::vector<std::string>& words);

  /// Specials followed by the sorted word set of `texts`.
  static Tokenizer build(const std::vector<std::string>& texts);

  static std::vector<std::string> split_words(std::string_view plain);

  TokenizedText encode(std::string_view marked_up) const;
  /// Joins tokens back into text. Specials other than markup are dropped.
  std::string decode(const std::vector<int>& ids) const;

  int size() const { return static_cast<int>(vocab_.size()); }
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& vocab() const { return vocab_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> vocab_;
  std::map<std::string, int, std::less<>> index_;
};

}  // namespace sama
