#pragma once

// Evaluation: spatio-temporal IoU with greedy track matching, METEOR,
// CIDEr-D and an LLM-judge caption score.

#include <optional>
#include <string>
#include <vector>

#include "sama/annotation_client.hpp"
#include "sama/config.hpp"
#include "sama/mask.hpp"
#include "sama/record.hpp"

namespace sama {

struct EvalTrack {
  std::string phrase;
  MaskTrack track;
};

struct EvalPair {
  std::string sample_id;
  std::vector<EvalTrack> predicted;
  std::vector<EvalTrack> reference;
  std::string pred_text;
  std::string ref_text;

  /// Every track shares one frame count and resolution. Throws InputError.
  void validate() const;
};

/// Intersections and unions pooled over frames; two empty tracks score 1.
/// Throws InputError on a frame-count or resolution mismatch.
double st_iou(const MaskTrack& pred, const MaskTrack& gt);

struct TrackMatch {
  int reference = 0;
  int predicted = -1;  // -1 when unmatched
  double iou = 0.0;
};

/// One-to-one matching by descending IoU (ties by reference, then prediction
/// index). Pairs with zero IoU are never matched. One entry per reference.
std::vector<TrackMatch> match_tracks(const std::vector<EvalTrack>& predicted, const std::vector<EvalTrack>& reference);

struct GroundingScores {
  double miou = 0.0;
  double recall = 0.0;
  int samples = 0;  // samples with at least one reference object
};

/// Per sample: mean matched IoU over its reference objects and the fraction
/// matched at >= threshold. The corpus values are means over samples that
/// have reference objects.
GroundingScores grounding_scores(const std::vector<EvalPair>& pairs, double iou_threshold = 0.5);

/// Lowercase word tokens with markup and punctuation removed.
std::vector<std::string> metric_tokens(std::string_view text);

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

/// Exact, then Porter-stem unigram alignment; best score over references.
double meteor(const std::vector<std::string>& candidate, const std::vector<std::vector<std::string>>& references,
              const MeteorParams& params = {});
double meteor(std::string_view candidate, const std::vector<std::string>& references, const MeteorParams& params = {});

struct CiderScores {
  std::vector<double> per_sample;
  double corpus = 0.0;  // mean of per_sample
};

/// CIDEr-D over a corpus: document frequencies come from the reference sets,
/// n = 1..4, Gaussian length penalty with `sigma`, scaled by 10. Throws
/// ConfigError for an empty corpus or a sample without references.
CiderScores cider(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references,
                  double sigma = 6.0);

/// First integer in the reply, divided by 100, when it lies in [0, 100].
std::optional<double> parse_judge_score(std::string_view reply);

struct ClairResult {
  std::optional<double> score;
  int attempts = 0;
};

/// Asks the judge up to `attempts` times (request key "clair/<key>") and
/// gives up with a null score when no reply parses.
ClairResult clair_judge(std::string_view candidate, std::string_view reference, CompletionClient& judge,
                        const std::string& key, int attempts = 3);

struct SampleMetrics {
  std::string sample_id;
  int references = 0;
  int predictions = 0;
  std::optional<double> miou;    // null without reference objects
  std::optional<double> recall;
  double meteor = 0.0;
  double cider = 0.0;
  std::optional<double> clair;
  bool clair_failed = false;
};

struct MetricReport {
  std::vector<SampleMetrics> samples;
  GroundingScores grounding;
  double meteor = 0.0;
  double cider = 0.0;
  std::optional<double> clair;  // mean over non-null judge scores
  int clair_failed = 0;

  OrderedJson to_json() const;
  std::string table() const;
};

/// The judge is only consulted when `cfg.clair` is set.
MetricReport evaluate(const std::vector<EvalPair>& pairs, const MetricsConfig& cfg, CompletionClient* judge = nullptr,
                      int judge_attempts = 3);

/// Reference: the final assistant turn and the tracks of its grounded
/// objects. Prediction: the record's `prediction`. Throws DataError when the
/// record has no prediction.
EvalPair eval_pair_from_record(const GroundedDialogueRecord& record);

}  // namespace sama
