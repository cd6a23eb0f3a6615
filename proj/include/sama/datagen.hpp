#pragma once

// Corpus construction: source adapters, box-to-mask pseudo-labelling,
// single-object filtering, set-of-mark rendering, annotation-client dialogue
// synthesis with validation and re-prompting, and a synthetic moving-shapes
// corpus.

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sama/annotation_client.hpp"
#include "sama/image.hpp"
#include "sama/mask.hpp"
#include "sama/record.hpp"

namespace sama {

// ------------------------------------------------------------------ sources

struct SourceObject {
  std::string object_id;
  std::optional<std::string> category;
  std::optional<std::string> expression;
  std::vector<BinaryMask> masks;         // per frame; empty when only boxes are known
  std::vector<std::optional<Box>> boxes; // per frame; empty when masks are known
};

struct SourceAnnotation {
  std::string video_id;
  std::string source;  // adapter label, e.g. "mask_index" or "box_csv"
  int width = 0;
  int height = 0;
  std::vector<std::string> frames;  // temporally ordered frame references
  std::vector<SourceObject> objects;

  bool has_masks() const;
  /// Throws DataError: needs >= 1 object, frames, per-frame annotations at
  /// the declared resolution.
  void validate() const;
};

/// JSON index: {"videos": [{"video_id", "source"?, "width", "height",
/// "frames": [...], "objects": [{"object_id", "category"?, "expression"?,
/// "masks": [rle-object | "file.pgm" | null, ...]}]}]}. PGM paths are relative
/// to the index file. A null mask is an empty frame.
std::vector<SourceAnnotation> load_mask_index(const std::filesystem::path& index);

/// CSV with header video_id,frame,frame_ref,width,height,object_id,category,x0,y0,x1,y1
/// (half-open boxes); rows of one video may come in any order.
std::vector<SourceAnnotation> load_box_csv(const std::filesystem::path& csv);

/// Box-prompted segmenter seam.
class PromptableSegmenter {
 public:
  virtual ~PromptableSegmenter() = default;
  /// nullopt signals failure on this frame.
  virtual std::optional<BinaryMask> segment(const std::string& frame_ref, const Box& box, int width, int height) = 0;
};

/// Fills the box.
class BoxFillSegmenter final : public PromptableSegmenter {
 public:
  std::optional<BinaryMask> segment(const std::string& frame_ref, const Box& box, int width, int height) override;
};

struct PseudomaskReport {
  int frames = 0;           // sampled frames processed
  int fallback_frames = 0;  // segmenter failed, box filled instead
  int clipped_frames = 0;   // segmenter mask extended past the box margin
};

/// Keeps frames 0, interval, 2*interval, ...; converts each box to a mask
/// via `segmenter`, clipped to the box dilated by 10% of its size per side.
SourceAnnotation boxes_to_pseudomasks(const SourceAnnotation& source, PromptableSegmenter& segmenter, int interval = 4,
                                      PseudomaskReport* report = nullptr);

/// Loads every configured source (either path may be empty) in mask-index,
/// then box-CSV order. Box-only videos go through boxes_to_pseudomasks with
/// `segmenter`; reports are accumulated into `report`.
std::vector<SourceAnnotation> load_sources(const std::filesystem::path& mask_index, const std::filesystem::path& box_csv,
                                           PromptableSegmenter& segmenter, int box_interval = 4,
                                           PseudomaskReport* report = nullptr);

/// Drops videos with fewer than two objects.
std::vector<SourceAnnotation> filter_sources(std::vector<SourceAnnotation> sources);

// -------------------------------------------------------------- set-of-mark

/// Channel triples from {0,128,255} without black, white and mid gray, first 20.
std::vector<Rgb> base_palette();
/// `count` colors: the base palette, extended by golden-ratio hue stepping
/// with rejection until every pair differs by >= 64 in some channel.
std::vector<Rgb> make_palette(std::size_t count, std::vector<Rgb> base = base_palette());
/// JSON list of "#rrggbb" strings.
std::vector<Rgb> load_palette(const std::filesystem::path& path);
int chebyshev(const Rgb& a, const Rgb& b);
std::string to_hex(const Rgb& c);
std::optional<Rgb> from_hex(std::string_view hex);
/// Nearest basic color word, for prompts.
std::string color_word(const Rgb& c);

/// floor((i + 0.5) * num_frames / count) for i in [0, count).
std::vector<int> uniform_sample(int num_frames, int count);

struct SomFrames {
  std::vector<int> frame_indices;
  std::vector<Image> frames;
  std::map<std::string, Rgb> colors;  // object_id -> rectangle color
};

/// Uniformly samples `count` frames and draws a 3-px rectangle around each
/// object's mask bounds in its palette color (nothing where it is absent).
/// `images` are the full-length source frames.
SomFrames render_som_frames(const SourceAnnotation& source, const std::vector<Image>& images,
                            const std::vector<Rgb>& palette, int count = 16);

// --------------------------------------------------------------- validation

enum class MarkupErrorKind {
  unclosed_tag,
  unexpected_close,
  nested_tag,
  missing_object_ref,
  unknown_object,
  missing_seg,
  dangling_seg,
  misplaced_region,
  malformed_turn,
  empty_conversation,
  no_grounding,
};
std::string_view to_string(MarkupErrorKind kind);

struct MarkupError {
  MarkupErrorKind kind;
  std::size_t offset = 0;  // byte offset into the validated text
  std::string message;
};

struct ValidationResult {
  std::vector<Turn> turns;
  std::vector<MarkupError> errors;
  bool ok() const { return errors.empty(); }
};

/// Checks one turn: phrases balanced and unnested, every phrase followed by
/// `[SEG:id]`, no bare `[SEG]`, ids declared, `<region:id>` only in user
/// turns, phrase markup only in assistant turns. Offsets are shifted by
/// `base_offset`.
void validate_turn(const Turn& turn, const std::vector<std::string>& object_ids, std::size_t base_offset,
                   std::vector<MarkupError>& errors);

/// Parses "USER: ..." / "ASSISTANT: ..." lines (continuation lines extend the
/// current turn) into alternating turns starting with the user, then
/// validates every turn and requires at least one grounded answer.
ValidationResult parse_and_validate(std::string_view raw, const std::vector<std::string>& object_ids);

/// Same checks over an already structured conversation.
ValidationResult validate_conversation(const std::vector<Turn>& turns, const std::vector<std::string>& object_ids);

/// Every object has a distinct color tag and every color belongs to one object.
bool color_bijection(const GroundedDialogueRecord& record);

// ---------------------------------------------------------------- dialogue

struct PromptTemplates {
  std::string description;  // placeholders: {video_id} {object_id} {color} {category}
  std::string dialogue;     // placeholders: {video_id} {object_list}
  std::string reprompt;     // placeholders: {errors}
  static PromptTemplates load(const std::filesystem::path& dir);
};

/// Replaces every "{name}" with its value.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

struct DialogueResult {
  std::vector<DescriptionEntry> descriptions;
  std::vector<Turn> conversation;
  bool accepted = false;
  int attempts = 0;
  std::vector<MarkupError> last_errors;
};

/// Asks `client` for one description per object and a grounded conversation;
/// the conversation is re-requested up to `reprompts` times with the
/// validator's errors appended, then given up.
DialogueResult synthesize_dialogue(const SourceAnnotation& source, const SomFrames& som,
                                   const std::vector<std::string>& image_refs, CompletionClient& client,
                                   const PromptTemplates& templates, int reprompts = 2);

// ----------------------------------------------------------------- pipeline

struct LedgerRow {
  int clips = 0;
  int qa_pairs = 0;
  int descriptions = 0;
  int dropped = 0;
};

struct CorpusLedger {
  std::map<std::string, LedgerRow> per_source;
  LedgerRow total() const;
  std::string table() const;
  OrderedJson to_json() const;
};

void add_to_ledger(CorpusLedger& ledger, const GroundedDialogueRecord& record);

struct PipelineOptions {
  std::filesystem::path frame_dir;  // base for frame references
  std::filesystem::path out_dir;    // rendered set-of-mark frames go to out_dir/som
  std::vector<Rgb> palette = base_palette();
  PromptTemplates templates;
  int sampled_frames = 16;
  int reprompts = 2;
  bool filter_single_object = true;
};

struct PipelineResult {
  std::vector<GroundedDialogueRecord> records;
  CorpusLedger ledger;
  std::vector<std::string> log;  // one line per dropped video or warning
};

/// Sources must already carry masks. Renders set-of-mark frames, asks the
/// client for annotations, validates and assembles one record per accepted
/// video.
PipelineResult run_annotation_pipeline(const std::vector<SourceAnnotation>& sources, CompletionClient& client,
                                       const PipelineOptions& options);

// ---------------------------------------------------------------- synthetic

struct SyntheticOptions {
  int frames = 8;
  int size = 32;
  int min_objects = 2;
  int max_objects = 4;
};

/// Moving colored squares and circles on a plain background with template
/// two-turn dialogues; masks are the visible pixels of each shape.
std::vector<GroundedDialogueRecord> generate_synthetic_corpus(int n_videos, std::uint64_t seed,
                                                              const SyntheticOptions& options = {});

}  // namespace sama
