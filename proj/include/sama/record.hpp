#pragma once

// In-memory form of one line of the grounded-dialogue JSONL corpus and its
// (de)serialization. The same schema carries model predictions for
// evaluation under the optional "prediction" key.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sama/mask.hpp"

namespace sama {

using OrderedJson = nlohmann::ordered_json;

struct RecordObject {
  std::string object_id;
  std::string color_tag;        // "#rrggbb" of the set-of-mark rectangle
  std::vector<RleMask> masks;   // one per sampled frame
  std::optional<std::string> category;

  friend bool operator==(const RecordObject&, const RecordObject&) = default;
};

struct DescriptionEntry {
  std::string object_id;
  std::string text;
  friend bool operator==(const DescriptionEntry&, const DescriptionEntry&) = default;
};

struct Turn {
  std::string role;  // "user" or "assistant"
  std::string text;
  friend bool operator==(const Turn&, const Turn&) = default;
};

struct PredictedTrack {
  std::string phrase;
  std::vector<RleMask> masks;
  friend bool operator==(const PredictedTrack&, const PredictedTrack&) = default;
};

struct Prediction {
  std::string text;
  std::vector<PredictedTrack> tracks;
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct GroundedDialogueRecord {
  std::string video_id;
  std::optional<std::string> source;
  std::vector<std::string> sampled_frames;
  std::vector<RecordObject> objects;
  std::vector<DescriptionEntry> descriptions;
  std::vector<Turn> conversation;
  std::optional<Prediction> prediction;

  const RecordObject* find_object(std::string_view id) const;
  /// Decoded mask track of one object; throws DataError for an unknown id.
  MaskTrack track(std::string_view object_id) const;
  int frame_width() const;
  int frame_height() const;

  /// Structural checks: nonempty frames, unique object ids, one mask per
  /// frame at a common resolution, color-object bijection, known roles.
  /// Throws DataError.
  void validate() const;

  friend bool operator==(const GroundedDialogueRecord&, const GroundedDialogueRecord&) = default;
};

OrderedJson rle_to_json(const RleMask& rle);
RleMask rle_from_json(const OrderedJson& j);

OrderedJson record_to_json(const GroundedDialogueRecord& record);
/// Throws DataError on a missing or mistyped field.
GroundedDialogueRecord record_from_json(const OrderedJson& j);

/// One compact JSON object per line, keys in schema order.
std::string record_to_line(const GroundedDialogueRecord& record);

void emit_jsonl(const std::vector<GroundedDialogueRecord>& records, const std::filesystem::path& path);
/// Throws DataError naming the 1-based line number of a malformed line.
std::vector<GroundedDialogueRecord> load_jsonl(const std::filesystem::path& path);
std::vector<GroundedDialogueRecord> parse_jsonl(std::string_view text);

}  // namespace sama
