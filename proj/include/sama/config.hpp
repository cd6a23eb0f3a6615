#pragma once

// Declarative run configuration. Every section maps one-to-one onto a JSON
// object; unknown keys and mistyped values are rejected with ConfigError.

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "sama/sama_model.hpp"

namespace sama {

struct DataConfig {
  int synthetic_videos = 200;
  int synthetic_frames = 8;
  int synthetic_size = 32;
  int heldout = 20;               // synthetic records reserved for evaluation
  std::string train_jsonl;        // train on this corpus instead of a synthetic one
  std::string eval_jsonl;
  std::string frame_dir;          // base directory for relative frame paths
  std::string mask_source_index;  // JSON index of mask-track sources
  std::string box_source_csv;     // box-track CSV source
  std::string fixture_file;       // annotation replies for fixture mode
  std::string template_dir = "assets/prompts/v1";
  std::string palette_file;
  bool filter_single_object = true;
  int box_interval = 4;
  int sampled_frames = 16;
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct MetricsConfig {
  double iou_threshold = 0.5;
  double meteor_alpha = 0.9;
  double meteor_beta = 3.0;
  double meteor_gamma = 0.5;
  double cider_sigma = 6.0;
  bool clair = false;
  std::string judge_fixture_file;
  friend bool operator==(const MetricsConfig&, const MetricsConfig&) = default;
};

struct ClientConfig {
  std::string mode = "fixture";  // fixture | http
  std::string endpoint;          // http(s)://host[:port]/path
  std::string api_key_env = "SAMA_API_KEY";
  int reprompts = 2;
  int judge_attempts = 3;
  double requests_per_second = 2.0;
  int max_concurrency = 1;
  double timeout_seconds = 30.0;
  int max_backoff_retries = 4;
  friend bool operator==(const ClientConfig&, const ClientConfig&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  MetricsConfig metrics;
  ClientConfig client;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

using Json = nlohmann::json;

Json to_json(const AggregatorConfig& c);
Json to_json(const EncoderConfig& c);
Json to_json(const LmConfig& c);
Json to_json(const ModelConfig& c);  // the "model" section only
Json to_json(const TrainConfig& c);
Json to_json(const DataConfig& c);
Json to_json(const MetricsConfig& c);
Json to_json(const ClientConfig& c);
Json to_json(const RunConfig& c);

/// Each reader starts from the current value of `out` and overwrites only
/// the keys present in `j`.
void from_json_strict(const Json& j, AggregatorConfig& out);
void from_json_strict(const Json& j, EncoderConfig& out);
void from_json_strict(const Json& j, LmConfig& out);
void from_json_strict(const Json& j, ModelConfig& out);
void from_json_strict(const Json& j, TrainConfig& out);
void from_json_strict(const Json& j, DataConfig& out);
void from_json_strict(const Json& j, MetricsConfig& out);
void from_json_strict(const Json& j, ClientConfig& out);
void from_json_strict(const Json& j, RunConfig& out);

/// Sections: seed, aggregator, encoder, lm, model, train, data, metrics, client.
RunConfig load_run_config(const std::filesystem::path& path);

/// ModelConfig + TrainConfig as stored in checkpoint headers.
Json model_bundle_to_json(const ModelConfig& model, const TrainConfig& train);
void model_bundle_from_json(const Json& j, ModelConfig& model, TrainConfig& train);

}  // namespace sama
