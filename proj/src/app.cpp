#include "sama/app.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>

#include "sama/errors.hpp"

namespace sama {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::unique_ptr<CompletionClient> make_client(const ClientConfig& cfg, const std::string& fixture_file) {
  if (cfg.mode == "fixture") {
    if (fixture_file.empty()) throw ConfigError("fixture client mode needs a fixture file");
    return std::make_unique<FixtureClient>(FixtureClient::from_file(fixture_file));
  }
  if (cfg.mode != "http") throw ConfigError("client.mode must be 'fixture' or 'http'");
  HttpClientOptions o;
  o.endpoint = cfg.endpoint;
  o.api_key = env_or_empty(cfg.api_key_env);
  o.requests_per_second = cfg.requests_per_second;
  o.max_concurrency = cfg.max_concurrency;
  o.timeout_seconds = cfg.timeout_seconds;
  o.max_retries = cfg.max_backoff_retries;
  return std::make_unique<HttpCompletionClient>(o);
}

Tokenizer tokenizer_for_corpus(const std::vector<GroundedDialogueRecord>& records) {
  std::vector<std::string> texts;
  for (const auto& r : records) {
    for (const auto& t : r.conversation) texts.push_back(t.text);
    for (const auto& d : r.descriptions) texts.push_back(d.text);
  }
  return Tokenizer::build(texts);
}

void check_datagen_inputs(const RunConfig& cfg, bool synthetic) {
  if (synthetic) return;
  const DataConfig& d = cfg.data;
  if (d.mask_source_index.empty() && d.box_source_csv.empty()) {
    throw ConfigError("datagen needs data.mask_source_index or data.box_source_csv (or --synthetic)");
  }
  const std::pair<const char*, const std::string*> paths[] = {{"data.mask_source_index", &d.mask_source_index},
                                                               {"data.box_source_csv", &d.box_source_csv},
                                                               {"data.fixture_file", &d.fixture_file},
                                                               {"data.palette_file", &d.palette_file},
                                                               {"data.template_dir", &d.template_dir}};
  for (const auto& [key, value] : paths) {
    if (!value->empty() && !std::filesystem::exists(*value)) {
      throw ConfigError(std::string(key) + " does not exist: " + *value);
    }
  }
  if (cfg.client.mode == "fixture" && d.fixture_file.empty()) throw ConfigError("fixture client mode needs data.fixture_file");
}

DatagenSummary run_datagen(const RunConfig& cfg, const std::filesystem::path& out_dir, bool synthetic,
                           std::ostream& log) {
  std::filesystem::create_directories(out_dir);
  DatagenSummary sum;
  std::vector<GroundedDialogueRecord> records;
  if (synthetic) {
    SyntheticOptions so;
    so.frames = cfg.data.synthetic_frames;
    so.size = cfg.data.synthetic_size;
    records = generate_synthetic_corpus(cfg.data.synthetic_videos, cfg.seed, so);
    for (const auto& r : records) add_to_ledger(sum.ledger, r);
    log << "generated " << records.size() << " synthetic records\n";
  } else {
    check_datagen_inputs(cfg, false);
    const DataConfig& d = cfg.data;
    BoxFillSegmenter segmenter;
    PseudomaskReport rep;
    std::vector<SourceAnnotation> sources =
        load_sources(d.mask_source_index, d.box_source_csv, segmenter, d.box_interval, &rep);
    log << "loaded " << sources.size() << " source videos";
    if (rep.frames > 0) log << " (" << rep.frames << " box frames, " << rep.fallback_frames << " box fallbacks)";
    log << "\n";

    PipelineOptions opts;
    opts.frame_dir = d.frame_dir;
    opts.out_dir = out_dir;
    opts.templates = PromptTemplates::load(d.template_dir);
    if (!d.palette_file.empty()) opts.palette = load_palette(d.palette_file);
    opts.sampled_frames = d.sampled_frames;
    opts.reprompts = cfg.client.reprompts;
    opts.filter_single_object = d.filter_single_object;
    auto client = make_client(cfg.client, d.fixture_file);
    PipelineResult res = run_annotation_pipeline(sources, *client, opts);
    for (const std::string& line : res.log) log << line << "\n";
    records = std::move(res.records);
    sum.ledger = std::move(res.ledger);
  }
  sum.records = static_cast<int>(records.size());
  sum.corpus = out_dir / "corpus.jsonl";
  emit_jsonl(records, sum.corpus);
  write_text(out_dir / "ledger.json", sum.ledger.to_json().dump(2) + "\n");
  write_text(out_dir / "ledger.txt", sum.ledger.table());
  log << sum.ledger.table();
  return sum;
}

TrainSummary run_train(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  TrainSummary sum;
  std::vector<GroundedDialogueRecord> records;
  if (!cfg.data.train_jsonl.empty()) {
    records = load_jsonl(cfg.data.train_jsonl);
  } else {
    SyntheticOptions so;
    so.frames = cfg.data.synthetic_frames;
    so.size = cfg.data.synthetic_size;
    records = generate_synthetic_corpus(cfg.data.synthetic_videos + cfg.data.heldout, cfg.seed, so);
    const std::vector<GroundedDialogueRecord> heldout(records.end() - cfg.data.heldout, records.end());
    records.resize(static_cast<std::size_t>(cfg.data.synthetic_videos));
    sum.heldout = out_dir / "heldout.jsonl";
    emit_jsonl(heldout, sum.heldout);
  }
  if (records.empty()) throw DataError("no training records");

  const ModelConfig mc = effective_model_config(cfg.model, cfg.train);
  SamaModel model(mc, tokenizer_for_corpus(records));
  ParamStore params = model.init_params(cfg.seed);
  std::vector<PreparedSample> data;
  for (const auto& r : records) data.push_back(model.prepare(r, params, cfg.data.frame_dir));
  log << "training on " << data.size() << " records, vocabulary " << model.tokenizer().size() << ", "
      << params.scalar_count() << " parameters\n";

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  sum.result = train(model, params, data, tc, [&](const LossPoint& p) {
    if (p.step % 50 == 0 || p.step + 1 == tc.steps) {
      log << "step " << std::setw(5) << p.step << "  total " << std::fixed << std::setprecision(4) << p.total
          << "  ce " << p.ce << "  bce " << p.bce << "  dice " << p.dice << std::defaultfloat << "\n";
    }
  });
  sum.checkpoint = out_dir / "model.ckpt";
  save_checkpoint(sum.checkpoint, {mc, tc, model.tokenizer().vocab(), params});
  write_loss_csv(out_dir / "loss.csv", sum.result.curve);
  sum.seconds = seconds_since(t0);

  OrderedJson j;
  j["steps"] = tc.steps;
  j["initial_smoothed_loss"] = sum.result.initial_smoothed;
  j["final_smoothed_loss"] = sum.result.final_smoothed;
  j["ratio"] = sum.result.initial_smoothed > 0 ? sum.result.final_smoothed / sum.result.initial_smoothed : 0.0;
  j["seconds"] = sum.seconds;
  write_text(out_dir / "train_summary.json", j.dump(2) + "\n");
  log << "smoothed loss " << sum.result.initial_smoothed << " -> " << sum.result.final_smoothed << " in "
      << sum.seconds << " s\n";
  return sum;
}

EvalSummary run_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& eval_jsonl, const std::filesystem::path& out_dir, std::ostream& log) {
  std::filesystem::create_directories(out_dir);
  std::vector<GroundedDialogueRecord> records = load_jsonl(eval_jsonl);
  if (records.empty()) throw DataError("evaluation file " + eval_jsonl.string() + " is empty");

  EvalSummary sum;
  std::vector<EvalPair> pairs;
  if (checkpoint.empty()) {
    // Score the predictions already stored in the file.
    for (const GroundedDialogueRecord& r : records) {
      pairs.push_back(eval_pair_from_record(r));
      ++sum.generations;
      sum.with_seg += r.prediction->text.find("[SEG") != std::string::npos ? 1 : 0;
    }
    log << "scoring " << records.size() << " stored predictions\n";
  } else {
    const Checkpoint ck = load_checkpoint(checkpoint);
    const SamaModel model(
        ck.model, Tokenizer(std::vector<std::string>(ck.vocab.begin() + SpecialTokens::count, ck.vocab.end())));
    if (model.tokenizer().vocab() != ck.vocab) {
      throw DataError("checkpoint vocabulary does not start with the reserved tokens");
    }
    for (GroundedDialogueRecord& r : records) {
      const PreparedSample s = model.prepare(r, ck.params, cfg.data.frame_dir);
      const Generation g = model.generate(ck.params, s);
      Prediction pred;
      pred.text = g.text;
      for (const GroundedPhrase& p : g.phrases) {
        PredictedTrack t;
        t.phrase = p.phrase;
        for (const BinaryMask& m : p.track.masks) t.masks.push_back(rle_encode(m));
        pred.tracks.push_back(std::move(t));
      }
      ++sum.generations;
      sum.with_seg += std::count(g.response_ids.begin(), g.response_ids.end(), SpecialTokens::seg) > 0 ? 1 : 0;
      sum.markup_errors += g.markup_error ? 1 : 0;
      r.prediction = std::move(pred);
      pairs.push_back(eval_pair_from_record(r));
    }
    log << "generated " << sum.generations << " answers\n";
  }
  emit_jsonl(records, out_dir / "predictions.jsonl");

  std::unique_ptr<CompletionClient> judge;
  if (cfg.metrics.clair) judge = make_client(cfg.client, cfg.metrics.judge_fixture_file);
  sum.report = evaluate(pairs, cfg.metrics, judge.get(), cfg.client.judge_attempts);

  OrderedJson j = sum.report.to_json();
  j["generation"] = {{"count", sum.generations}, {"with_seg", sum.with_seg}, {"markup_errors", sum.markup_errors}};
  write_text(out_dir / "metrics.json", j.dump(2) + "\n");
  std::ostringstream table;
  table << sum.report.table() << "[SEG] rate        " << sum.with_seg << "/" << sum.generations << "\n";
  write_text(out_dir / "metrics.txt", table.str());
  log << table.str();
  return sum;
}

}  // namespace sama
