#include "sama/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "sama/errors.hpp"

namespace sama {

namespace {

// Binds JSON keys of one section to struct members.
class Section {
 public:
  explicit Section(std::string name) : name_(std::move(name)) {}

  template <class T>
  Section& field(const char* key, T& ref) {
    T* p = &ref;
    const std::string where = name_ + "." + key;
    fields_.push_back({key, [p] { return Json(*p); }, [p, where](const Json& v) {
                         try {
                           if constexpr (std::is_same_v<T, bool>) {
                             if (!v.is_boolean()) throw ConfigError(where + " must be a boolean");
                           } else if constexpr (std::is_integral_v<T>) {
                             if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
                             if constexpr (std::is_unsigned_v<T>) {
                               if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
                                 throw ConfigError(where + " must be non-negative");
                               }
                             }
                           } else if constexpr (std::is_floating_point_v<T>) {
                             if (!v.is_number()) throw ConfigError(where + " must be a number");
                           } else {
                             if (!v.is_string()) throw ConfigError(where + " must be a string");
                           }
                           *p = v.get<T>();
                         } catch (const nlohmann::json::exception& e) {
                           throw ConfigError(where + ": " + e.what());
                         }
                       }});
    return *this;
  }

  Section& custom(const char* key, std::function<Json()> get, std::function<void(const Json&)> set) {
    fields_.push_back({key, std::move(get), std::move(set)});
    return *this;
  }

  Json write() const {
    Json j = Json::object();
    for (const Field& f : fields_) j[f.key] = f.get();
    return j;
  }

  void read(const Json& j) const {
    if (!j.is_object()) throw ConfigError("section '" + name_ + "' must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      const Field* f = nullptr;
      for (const Field& c : fields_) {
        if (c.key == key) f = &c;
      }
      if (f == nullptr) throw ConfigError("unknown key '" + key + "' in section '" + name_ + "'");
      f->set(value);
    }
  }

 private:
  struct Field {
    std::string key;
    std::function<Json()> get;
    std::function<void(const Json&)> set;
  };
  std::string name_;
  std::vector<Field> fields_;
};

Section bind(AggregatorConfig& c) {
  Section s("aggregator");
  s.field("spatial_queries", c.spatial_queries)
      .field("temporal_queries", c.temporal_queries)
      .field("window", c.window)
      .field("stride", c.stride)
      .field("heads", c.heads)
      .field("context_heads", c.context_heads)
      .field("visual_dim", c.visual_dim)
      .field("llm_dim", c.llm_dim)
      .field("ffn_mult", c.ffn_mult)
      .field("long_frame_step", c.long_frame_step)
      .field("enabled", c.enabled);
  return s;
}

Section bind(EncoderConfig& c) {
  Section s("encoder");
  s.field("image_size", c.image_size).field("grid", c.grid).field("visual_dim", c.visual_dim);
  return s;
}

Section bind(LmConfig& c) {
  Section s("lm");
  s.field("layers", c.layers).field("heads", c.heads).field("dim", c.dim).field("ffn_mult", c.ffn_mult).field("max_seq_len", c.max_seq_len);
  return s;
}

Section bind(ModelConfig& c) {
  Section s("model");
  s.field("keyframes", c.keyframes)
      .custom(
          "prompt_kind", [&c] { return Json(std::string(to_string(c.prompt_kind))); },
          [&c](const Json& v) {
            if (!v.is_string()) throw ConfigError("model.prompt_kind must be a string");
            c.prompt_kind = prompt_kind_from_string(v.get<std::string>());
          })
      .field("point_radius", c.point_radius)
      .field("min_patch_coverage", c.min_patch_coverage)
      .field("max_new_tokens", c.max_new_tokens);
  return s;
}

Section bind(TrainConfig& c) {
  Section s("train");
  s.field("lr", c.lr)
      .field("steps", c.steps)
      .field("batch_size", c.batch_size)
      .field("text_loss_weight", c.text_loss_weight)
      .field("bce_weight", c.bce_weight)
      .field("dice_weight", c.dice_weight)
      .field("grad_clip", c.grad_clip)
      .field("warmup_steps", c.warmup_steps)
      .field("cosine_decay", c.cosine_decay)
      .field("seed", c.seed)
      .field("ablate_stc", c.ablate_stc)
      .field("freeze_lm", c.freeze_lm)
      .field("smooth_window", c.smooth_window);
  return s;
}

Section bind(DataConfig& c) {
  Section s("data");
  s.field("synthetic_videos", c.synthetic_videos)
      .field("synthetic_frames", c.synthetic_frames)
      .field("synthetic_size", c.synthetic_size)
      .field("heldout", c.heldout)
      .field("train_jsonl", c.train_jsonl)
      .field("eval_jsonl", c.eval_jsonl)
      .field("frame_dir", c.frame_dir)
      .field("mask_source_index", c.mask_source_index)
      .field("box_source_csv", c.box_source_csv)
      .field("fixture_file", c.fixture_file)
      .field("template_dir", c.template_dir)
      .field("palette_file", c.palette_file)
      .field("filter_single_object", c.filter_single_object)
      .field("box_interval", c.box_interval)
      .field("sampled_frames", c.sampled_frames);
  return s;
}

Section bind(MetricsConfig& c) {
  Section s("metrics");
  s.field("iou_threshold", c.iou_threshold)
      .field("meteor_alpha", c.meteor_alpha)
      .field("meteor_beta", c.meteor_beta)
      .field("meteor_gamma", c.meteor_gamma)
      .field("cider_sigma", c.cider_sigma)
      .field("clair", c.clair)
      .field("judge_fixture_file", c.judge_fixture_file);
  return s;
}

Section bind(ClientConfig& c) {
  Section s("client");
  s.field("mode", c.mode)
      .field("endpoint", c.endpoint)
      .field("api_key_env", c.api_key_env)
      .field("reprompts", c.reprompts)
      .field("judge_attempts", c.judge_attempts)
      .field("requests_per_second", c.requests_per_second)
      .field("max_concurrency", c.max_concurrency)
      .field("timeout_seconds", c.timeout_seconds)
      .field("max_backoff_retries", c.max_backoff_retries);
  return s;
}

template <class T>
Json write_copy(T c) {
  return bind(c).write();
}

}  // namespace

Json to_json(const AggregatorConfig& c) { return write_copy(c); }
Json to_json(const EncoderConfig& c) { return write_copy(c); }
Json to_json(const LmConfig& c) { return write_copy(c); }
Json to_json(const ModelConfig& c) { return write_copy(c); }
Json to_json(const TrainConfig& c) { return write_copy(c); }
Json to_json(const DataConfig& c) { return write_copy(c); }
Json to_json(const MetricsConfig& c) { return write_copy(c); }
Json to_json(const ClientConfig& c) { return write_copy(c); }

void from_json_strict(const Json& j, AggregatorConfig& out) { bind(out).read(j); }
void from_json_strict(const Json& j, EncoderConfig& out) { bind(out).read(j); }
void from_json_strict(const Json& j, LmConfig& out) { bind(out).read(j); }
void from_json_strict(const Json& j, ModelConfig& out) { bind(out).read(j); }
void from_json_strict(const Json& j, TrainConfig& out) { bind(out).read(j); }
void from_json_strict(const Json& j, DataConfig& out) { bind(out).read(j); }
void from_json_strict(const Json& j, MetricsConfig& out) { bind(out).read(j); }
void from_json_strict(const Json& j, ClientConfig& out) { bind(out).read(j); }

Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["aggregator"] = to_json(c.model.aggregator);
  j["encoder"] = to_json(c.model.encoder);
  j["lm"] = to_json(c.model.lm);
  j["model"] = to_json(c.model);
  j["train"] = to_json(c.train);
  j["data"] = to_json(c.data);
  j["metrics"] = to_json(c.metrics);
  j["client"] = to_json(c.client);
  return j;
}

void from_json_strict(const Json& j, RunConfig& out) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
      out.seed = value.get<std::uint64_t>();
    } else if (key == "aggregator") {
      from_json_strict(value, out.model.aggregator);
    } else if (key == "encoder") {
      from_json_strict(value, out.model.encoder);
    } else if (key == "lm") {
      from_json_strict(value, out.model.lm);
    } else if (key == "model") {
      from_json_strict(value, out.model);
    } else if (key == "train") {
      from_json_strict(value, out.train);
    } else if (key == "data") {
      from_json_strict(value, out.data);
    } else if (key == "metrics") {
      from_json_strict(value, out.metrics);
    } else if (key == "client") {
      from_json_strict(value, out.client);
    } else {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (data.synthetic_videos < 1 || data.synthetic_frames < 1 || data.synthetic_size < 8) {
    throw ConfigError("data: synthetic corpus needs >= 1 video, >= 1 frame and size >= 8");
  }
  if (data.heldout < 0) throw ConfigError("data.heldout must be non-negative");
  if (data.box_interval < 1 || data.sampled_frames < 1) throw ConfigError("data: box_interval and sampled_frames must be positive");
  if (metrics.iou_threshold < 0.0 || metrics.iou_threshold > 1.0) throw ConfigError("metrics.iou_threshold must lie in [0,1]");
  if (client.mode != "fixture" && client.mode != "http") throw ConfigError("client.mode must be 'fixture' or 'http'");
  if (client.reprompts < 0 || client.judge_attempts < 1 || client.max_concurrency < 1 || !(client.requests_per_second > 0.0)) {
    throw ConfigError("client: invalid retry or rate settings");
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  RunConfig c;
  from_json_strict(j, c);
  return c;
}

Json model_bundle_to_json(const ModelConfig& model, const TrainConfig& train) {
  Json j;
  j["aggregator"] = to_json(model.aggregator);
  j["encoder"] = to_json(model.encoder);
  j["lm"] = to_json(model.lm);
  j["model"] = to_json(model);
  j["train"] = to_json(train);
  return j;
}

void model_bundle_from_json(const Json& j, ModelConfig& model, TrainConfig& train) {
  from_json_strict(j.at("aggregator"), model.aggregator);
  from_json_strict(j.at("encoder"), model.encoder);
  from_json_strict(j.at("lm"), model.lm);
  from_json_strict(j.at("model"), model);
  from_json_strict(j.at("train"), train);
}

}  // namespace sama
