#pragma once

// The four command-line workflows as library calls. Every function writes
// its artifacts below `out_dir` and logs progress to `log`.

#include <filesystem>
#include <ostream>
#include <string>

#include <memory>

#include "sama/config.hpp"
#include "sama/datagen.hpp"
#include "sama/metrics.hpp"
#include "sama/sama_model.hpp"

namespace sama {

struct DatagenSummary {
  int records = 0;
  CorpusLedger ledger;
  std::filesystem::path corpus;  // out_dir/corpus.jsonl
};

/// Throws ConfigError when a non-synthetic run lacks sources or names a
/// path that does not exist.
void check_datagen_inputs(const RunConfig& cfg, bool synthetic);

/// Synthetic moving shapes (`synthetic`) or the annotation pipeline over the
/// configured sources. Writes corpus.jsonl, ledger.json and ledger.txt.
DatagenSummary run_datagen(const RunConfig& cfg, const std::filesystem::path& out_dir, bool synthetic,
                           std::ostream& log);

struct TrainSummary {
  TrainResult result;
  std::filesystem::path checkpoint;  // out_dir/model.ckpt
  std::filesystem::path heldout;     // out_dir/heldout.jsonl, empty when not synthetic
  double seconds = 0.0;
};

/// Trains on data.train_jsonl, or on a fresh synthetic corpus whose last
/// data.heldout records are saved for evaluation. Writes model.ckpt,
/// loss.csv and train_summary.json.
TrainSummary run_train(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

struct EvalSummary {
  MetricReport report;
  int generations = 0;
  int with_seg = 0;  // generations containing at least one [SEG]
  int markup_errors = 0;
};

/// Generates an answer for the final assistant turn of every record, then
/// scores it. With an empty `checkpoint` the predictions stored in the file
/// are scored instead. Writes predictions.jsonl, metrics.json and metrics.txt.
EvalSummary run_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& eval_jsonl, const std::filesystem::path& out_dir, std::ostream& log);

/// Annotation client chosen by `client.mode`; `fixture_file` feeds fixture mode.
std::unique_ptr<CompletionClient> make_client(const ClientConfig& cfg, const std::string& fixture_file);

/// Word list of a corpus: every turn and description.
Tokenizer tokenizer_for_corpus(const std::vector<GroundedDialogueRecord>& records);

}  // namespace sama
