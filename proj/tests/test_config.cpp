#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "sama/config.hpp"
#include "sama/errors.hpp"

using namespace sama;

namespace {

const std::filesystem::path kRoot = std::filesystem::path(SAMA_TEST_DATA_DIR) / ".." / "..";

RunConfig parse(const std::string& text) {
  RunConfig c;
  from_json_strict(Json::parse(text), c);
  return c;
}

}  // namespace

TEST_CASE("defaults survive a JSON round trip") {
  RunConfig c;
  c.seed = 9;
  c.train.lr = 1e-3;
  c.model.prompt_kind = PromptKind::mask;
  c.data.train_jsonl = "x.jsonl";
  RunConfig back;
  from_json_strict(to_json(c), back);
  CHECK(back == c);
}

TEST_CASE("sections override only the keys they name") {
  const RunConfig c = parse(R"({"train": {"steps": 7}, "lm": {"layers": 1}})");
  CHECK(c.train.steps == 7);
  CHECK(c.train.lr == TrainConfig{}.lr);
  CHECK(c.model.lm.layers == 1);
  CHECK(c.model.lm.dim == 128);
}

TEST_CASE("unknown keys and wrong types are configuration errors") {
  CHECK_THROWS_AS(parse(R"({"trian": {}})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"train": {"learning_rate": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"train": {"steps": "many"}})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"model": {"prompt_kind": "scribble"}})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"seed": -1})"), ConfigError);
  CHECK_THROWS_AS(parse("[]"), ConfigError);
}

TEST_CASE("validation cross-checks component widths and ranges") {
  CHECK_NOTHROW(RunConfig{}.validate());
  CHECK_THROWS_AS(parse(R"({"lm": {"dim": 64}})").validate(), ConfigError);
  CHECK_NOTHROW(parse(R"({"lm": {"dim": 64}, "aggregator": {"llm_dim": 64}})").validate());
  CHECK_THROWS_AS(parse(R"({"train": {"lr": -1}})").validate(), ConfigError);
  CHECK_THROWS_AS(parse(R"({"client": {"mode": "carrier-pigeon"}})").validate(), ConfigError);
  CHECK_THROWS_AS(parse(R"({"metrics": {"iou_threshold": 2}})").validate(), ConfigError);
}

TEST_CASE("shipped configs load and validate") {
  for (const char* name : {"default.json", "fixture_datagen.json"}) {
    INFO(name);
    const RunConfig c = load_run_config(kRoot / "configs" / name);
    CHECK_NOTHROW(c.validate());
  }
  CHECK(load_run_config(kRoot / "configs" / "default.json") == RunConfig{});
  CHECK_THROWS_AS(load_run_config("/nonexistent.json"), ConfigError);
  const auto bad = std::filesystem::temp_directory_path() / "sama_bad_config.json";
  std::ofstream(bad) << "{ not json";
  CHECK_THROWS_AS(load_run_config(bad), ConfigError);
  std::filesystem::remove(bad);
}

TEST_CASE("model bundle round-trips through the checkpoint header form") {
  ModelConfig m;
  m.keyframes = 3;
  m.aggregator.enabled = false;
  TrainConfig t;
  t.text_loss_weight = 1.5;
  ModelConfig m2;
  TrainConfig t2;
  model_bundle_from_json(model_bundle_to_json(m, t), m2, t2);
  CHECK(m2 == m);
  CHECK(t2 == t);
}
