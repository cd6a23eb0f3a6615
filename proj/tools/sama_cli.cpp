// sama: data generation, toy training, evaluation and self-checks.
//
// Exit status: 0 on success, 1 for invalid configuration or input data,
// 2 for runtime failures (client errors, divergence, failed self-checks).

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "sama/acceptance.hpp"
#include "sama/app.hpp"
#include "sama/errors.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run config; omitted keys keep their defaults")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Overrides the config seed");
  cmd->add_option("--out", c.out, "Output directory (default runs/<command>-<timestamp>)");
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return s.str();
}

sama::RunConfig base_config(const Common& c) {
  sama::RunConfig cfg = c.config.empty() ? sama::RunConfig{} : sama::load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

// Validates the effective config, creates the run directory and echoes the
// config both to stdout and to config.json inside it.
fs::path start_run(const std::string& command, const Common& c, const sama::RunConfig& cfg) {
  cfg.validate();
  const fs::path out = c.out.empty() ? fs::path("runs") / (command + "-" + timestamp()) : fs::path(c.out);
  fs::create_directories(out);
  const std::string text = sama::to_json(cfg).dump(2);
  std::ofstream(out / "config.json") << text << "\n";
  std::cout << "effective config:\n" << text << "\noutput directory: " << out.string() << "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grounded video dialogue toolkit: datagen, train, eval, selfcheck"};
  app.require_subcommand(1);

  Common dg_common, tr_common, ev_common;

  auto* datagen = app.add_subcommand("datagen", "Build a grounded-dialogue JSONL corpus and its ledger");
  add_common(datagen, dg_common);
  std::optional<int> dg_synthetic;
  std::optional<bool> dg_filter;
  std::string dg_mask_index, dg_box_csv, dg_fixture, dg_frames, dg_palette, dg_templates;
  datagen->add_option("--synthetic", dg_synthetic, "Generate N synthetic moving-shape videos instead")->check(CLI::PositiveNumber);
  datagen->add_flag("--filter-single-object,!--keep-single-object", dg_filter, "Drop videos with fewer than two objects");
  datagen->add_option("--mask-index", dg_mask_index, "JSON index of mask-track sources");
  datagen->add_option("--box-csv", dg_box_csv, "CSV of box-track sources");
  datagen->add_option("--fixture-file", dg_fixture, "Annotation replies for fixture mode");
  datagen->add_option("--frame-dir", dg_frames, "Base directory of the frame images");
  datagen->add_option("--palette", dg_palette, "Palette file, one #rrggbb per line");
  datagen->add_option("--templates", dg_templates, "Prompt template directory");

  auto* trainc = app.add_subcommand("train", "Train the toy model on a JSONL corpus or synthetic data");
  add_common(trainc, tr_common);
  std::optional<int> tr_synthetic, tr_steps;
  std::optional<double> tr_lambda, tr_lr;
  std::string tr_jsonl;
  bool tr_ablate = false, tr_freeze = false;
  trainc->add_option("--synthetic", tr_synthetic, "Train on N synthetic videos (plus data.heldout for evaluation)")
      ->check(CLI::PositiveNumber);
  trainc->add_option("--train-jsonl", tr_jsonl, "Training corpus")->check(CLI::ExistingFile);
  trainc->add_option("--steps", tr_steps, "Optimizer steps")->check(CLI::NonNegativeNumber);
  trainc->add_option("--lr", tr_lr, "Adam learning rate");
  trainc->add_option("--text-loss-weight", tr_lambda, "Weight of the text cross-entropy term");
  trainc->add_flag("--ablate-stc", tr_ablate, "Disable the spatial-temporal-context aggregator");
  trainc->add_flag("--freeze-lm", tr_freeze, "Keep the language model fixed");

  auto* evalc = app.add_subcommand("eval", "Generate answers and score grounding and text metrics");
  add_common(evalc, ev_common);
  std::string ev_checkpoint, ev_jsonl, ev_judge;
  bool ev_clair = false;
  evalc->add_option("--checkpoint", ev_checkpoint, "Model checkpoint; omit to score predictions stored in the file")
      ->check(CLI::ExistingFile);
  evalc->add_option("--eval-jsonl", ev_jsonl, "Records to evaluate (default data.eval_jsonl)");
  evalc->add_flag("--clair", ev_clair, "Ask the judge client for CLAIR scores");
  evalc->add_option("--judge-fixture", ev_judge, "Judge replies for fixture mode");

  auto* selfcheck = app.add_subcommand("selfcheck", "Oracle, gradient and codec self-checks");
  bool sc_full = false;
  selfcheck->add_flag("--full", sc_full, "Include the toy training run (about a minute)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*datagen) {
      sama::RunConfig cfg = base_config(dg_common);
      auto& d = cfg.data;
      if (dg_synthetic) d.synthetic_videos = *dg_synthetic;
      if (dg_filter) d.filter_single_object = *dg_filter;
      if (!dg_mask_index.empty()) d.mask_source_index = dg_mask_index;
      if (!dg_box_csv.empty()) d.box_source_csv = dg_box_csv;
      if (!dg_fixture.empty()) d.fixture_file = dg_fixture;
      if (!dg_frames.empty()) d.frame_dir = dg_frames;
      if (!dg_palette.empty()) d.palette_file = dg_palette;
      if (!dg_templates.empty()) d.template_dir = dg_templates;
      sama::check_datagen_inputs(cfg, dg_synthetic.has_value());
      const fs::path out = start_run("datagen", dg_common, cfg);
      std::ofstream log(out / "datagen.log");
      std::ostringstream buffer;
      const sama::DatagenSummary s = sama::run_datagen(cfg, out, dg_synthetic.has_value(), buffer);
      log << buffer.str();
      std::cout << buffer.str();
      if (s.records == 0) std::cout << "warning: no records were emitted\n";
      std::cout << "wrote " << s.records << " records to " << s.corpus.string() << "\n";
    } else if (*trainc) {
      sama::RunConfig cfg = base_config(tr_common);
      if (tr_synthetic) {
        cfg.data.synthetic_videos = *tr_synthetic;
        cfg.data.train_jsonl.clear();
      }
      if (!tr_jsonl.empty()) cfg.data.train_jsonl = tr_jsonl;
      if (tr_steps) cfg.train.steps = *tr_steps;
      if (tr_lr) cfg.train.lr = *tr_lr;
      if (tr_lambda) cfg.train.text_loss_weight = *tr_lambda;
      if (tr_ablate) cfg.train.ablate_stc = true;
      if (tr_freeze) cfg.train.freeze_lm = true;
      const fs::path out = start_run("train", tr_common, cfg);
      const sama::TrainSummary s = sama::run_train(cfg, out, std::cout);
      std::cout << "checkpoint: " << s.checkpoint.string() << "\n";
      if (!s.heldout.empty()) std::cout << "held-out records: " << s.heldout.string() << "\n";
    } else if (*evalc) {
      sama::RunConfig cfg = base_config(ev_common);
      if (!ev_jsonl.empty()) cfg.data.eval_jsonl = ev_jsonl;
      if (ev_clair) cfg.metrics.clair = true;
      if (!ev_judge.empty()) cfg.metrics.judge_fixture_file = ev_judge;
      if (cfg.data.eval_jsonl.empty()) throw sama::ConfigError("eval needs --eval-jsonl or data.eval_jsonl");
      const fs::path out = start_run("eval", ev_common, cfg);
      sama::run_eval(cfg, ev_checkpoint, cfg.data.eval_jsonl, out, std::cout);
    } else if (*selfcheck) {
      int failures = 0;
      if (sc_full) {
        for (const auto& r : sama::run_acceptance(sama::AcceptanceOptions::from_source_tree(), std::cout)) {
          failures += r.pass ? 0 : 1;
        }
      } else {
        failures = sama::run_selfcheck(std::cout);
      }
      std::cout << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed") << "\n";
      return failures == 0 ? 0 : 2;
    }
  } catch (const sama::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const sama::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const sama::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 1;
  } catch (const sama::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const sama::DivergenceError& e) {
    std::cerr << "training diverged at step " << e.step() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
