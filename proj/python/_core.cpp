// Python bindings for the sama core library. Arrays cross the boundary as
// NumPy arrays; records and configs cross as JSON text.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "sama/acceptance.hpp"
#include "sama/app.hpp"
#include "sama/config.hpp"
#include "sama/datagen.hpp"
#include "sama/errors.hpp"
#include "sama/metrics.hpp"
#include "sama/referring_prompts.hpp"
#include "sama/stc_aggregator.hpp"

namespace py = pybind11;
using namespace sama;

namespace {

using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

BinaryMask to_mask(const MaskArray& a) {
  if (a.ndim() != 2) throw InputError("mask must be a 2-D array");
  BinaryMask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  auto bits = m.bits();
  const std::uint8_t* src = a.data();
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = src[i] != 0 ? 1 : 0;
  return m;
}

py::array_t<std::uint8_t> from_mask(const BinaryMask& m) {
  py::array_t<std::uint8_t> out({m.height(), m.width()});
  auto bits = m.bits();
  std::copy(bits.begin(), bits.end(), out.mutable_data());
  return out;
}

// A track is a [frames, height, width] array.
MaskTrack to_track(const MaskArray& a) {
  if (a.ndim() != 3) throw InputError("track must be a 3-D array [frames, height, width]");
  MaskTrack t;
  const auto h = a.shape(1), w = a.shape(2);
  for (py::ssize_t f = 0; f < a.shape(0); ++f) {
    BinaryMask m(static_cast<int>(w), static_cast<int>(h));
    auto bits = m.bits();
    const std::uint8_t* src = a.data(f, 0, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = src[i] != 0 ? 1 : 0;
    t.masks.push_back(std::move(m));
  }
  return t;
}

RunConfig config_from_text(const std::string& json_text) {
  RunConfig cfg;
  if (!json_text.empty()) from_json_strict(Json::parse(json_text), cfg);
  cfg.validate();
  return cfg;
}

AggregatorConfig aggregator_from_text(const std::string& json_text) {
  AggregatorConfig cfg;
  if (!json_text.empty()) from_json_strict(Json::parse(json_text), cfg);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the sama toolkit";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ClientError>(m, "ClientError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParseError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("default_config_json", [] { return to_json(RunConfig{}).dump(); });
  m.def("validate_config_json", [](const std::string& text) { return to_json(config_from_text(text)).dump(); },
        py::arg("config_json"));

  // ---------------------------------------------------------- aggregator
  m.def("enumerate_windows",
        [](int n, int window, int stride) {
          std::vector<std::pair<int, int>> out;
          for (const WindowSpan& w : enumerate_windows(n, window, stride)) out.emplace_back(w.start, w.end);
          return out;
        },
        py::arg("num_frames"), py::arg("window"), py::arg("stride"));

  m.def("aggregate",
        [](const std::vector<Matrix>& frames, const Matrix& question, const std::optional<Matrix>& objects,
           const std::string& config_json, std::uint64_t seed) {
          const AggregatorConfig cfg = aggregator_from_text(config_json);
          ParamStore params;
          Rng rng(seed);
          StcAggregator(cfg).init_params(params, rng);
          return aggregate(VideoFeatures::from_frames(frames), question, objects, cfg, params).data;
        },
        py::arg("frames"), py::arg("question"), py::arg("objects") = std::nullopt, py::arg("config_json") = "",
        py::arg("seed") = 0);

  m.def("context_attention",
        [](const std::vector<Matrix>& frames, const Matrix& temporal, const Matrix& wq, const Matrix& wk,
           const Matrix& wv, const Matrix& wp) {
          AggregatorConfig cfg;
          cfg.visual_dim = static_cast<int>(wq.rows());
          cfg.llm_dim = static_cast<int>(wp.cols());
          cfg.heads = 1;
          cfg.context_heads = 1;
          cfg.spatial_queries = 1;
          cfg.temporal_queries = 1;
          cfg.window = 1;
          cfg.stride = 1;
          ParamStore params;
          Rng rng(0);
          StcAggregator(cfg).init_params(params, rng);
          params.get_mut("aggregator.context.wq") = wq;
          params.get_mut("aggregator.context.wk") = wk;
          params.get_mut("aggregator.context.wv") = wv;
          params.get_mut("aggregator.context.wp") = wp;
          return context_aggregate(VideoFeatures::from_frames(frames), TemporalTokens{temporal, {}}, cfg, params).data;
        },
        py::arg("frames"), py::arg("temporal"), py::arg("wq"), py::arg("wk"), py::arg("wv"), py::arg("wp"));

  // ------------------------------------------------------------- prompts
  m.def("box_to_mask",
        [](int x0, int y0, int x1, int y1, int width, int height) {
          ObjectPrompt p;
          p.kind = PromptKind::box;
          p.box = {x0, y0, x1, y1};
          return from_mask(prompt_to_mask(p, width, height));
        },
        py::arg("x0"), py::arg("y0"), py::arg("x1"), py::arg("y1"), py::arg("width"), py::arg("height"));

  m.def("points_to_mask",
        [](const std::vector<std::pair<int, int>>& points, int width, int height, int radius) {
          ObjectPrompt p;
          p.kind = PromptKind::points;
          for (const auto& [x, y] : points) p.points.push_back({x, y});
          return from_mask(prompt_to_mask(p, width, height, radius));
        },
        py::arg("points"), py::arg("width"), py::arg("height"), py::arg("radius") = 1);

  m.def("mask_pool",
        [](const Matrix& features, const MaskArray& mask, int grid_rows, int grid_cols, const Matrix& projection,
           double min_coverage) {
          const ObjectEmbedding e = mask_pool(features, to_mask(mask), {grid_rows, grid_cols}, projection, min_coverage);
          return e.data;
        },
        py::arg("features"), py::arg("mask"), py::arg("grid_rows"), py::arg("grid_cols"), py::arg("projection"),
        py::arg("min_coverage") = 0.05);

  // ---------------------------------------------------------------- masks
  m.def("rle_encode",
        [](const MaskArray& mask) {
          const RleMask r = rle_encode(to_mask(mask));
          return py::make_tuple(r.height, r.width, r.counts);
        },
        py::arg("mask"), "Returns (height, width, counts) with runs starting at a zero run.");
  m.def("rle_decode",
        [](int height, int width, const std::vector<std::int64_t>& counts) {
          return from_mask(rle_decode(RleMask{width, height, counts}));
        },
        py::arg("height"), py::arg("width"), py::arg("counts"));

  // -------------------------------------------------------------- metrics
  m.def("st_iou", [](const MaskArray& pred, const MaskArray& gt) { return st_iou(to_track(pred), to_track(gt)); },
        py::arg("pred"), py::arg("gt"));
  m.def("meteor",
        [](const std::string& candidate, const std::vector<std::string>& references, double alpha, double beta,
           double gamma) { return meteor(candidate, references, MeteorParams{alpha, beta, gamma}); },
        py::arg("candidate"), py::arg("references"), py::arg("alpha") = 0.9, py::arg("beta") = 3.0,
        py::arg("gamma") = 0.5);
  m.def("cider",
        [](const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references,
           double sigma) {
          const CiderScores s = cider(candidates, references, sigma);
          return py::make_tuple(s.per_sample, s.corpus);
        },
        py::arg("candidates"), py::arg("references"), py::arg("sigma") = 6.0);
  m.def("parse_judge_score", [](const std::string& reply) { return parse_judge_score(reply); }, py::arg("reply"));

  // -------------------------------------------------------------- records
  m.def("validate_conversation",
        [](const std::string& raw, const std::vector<std::string>& object_ids) {
          const ValidationResult r = parse_and_validate(raw, object_ids);
          std::vector<std::pair<std::string, std::string>> turns;
          for (const Turn& t : r.turns) turns.emplace_back(t.role, t.text);
          std::vector<py::tuple> errors;
          for (const MarkupError& e : r.errors) {
            errors.push_back(py::make_tuple(std::string(to_string(e.kind)), e.offset, e.message));
          }
          return py::make_tuple(turns, errors);
        },
        py::arg("raw"), py::arg("object_ids"),
        "Parses USER:/ASSISTANT: text. Returns (turns, errors) with errors as (kind, offset, message).");

  m.def("synthetic_corpus_lines",
        [](int n, std::uint64_t seed, int frames, int size) {
          std::vector<std::string> lines;
          for (const auto& r : generate_synthetic_corpus(n, seed, {frames, size, 2, 4})) lines.push_back(record_to_line(r));
          return lines;
        },
        py::arg("n"), py::arg("seed") = 0, py::arg("frames") = 8, py::arg("size") = 32);

  m.def("normalize_record_line",
        [](const std::string& line) { return record_to_line(record_from_json(OrderedJson::parse(line))); },
        py::arg("line"), "Parses, validates and re-serializes one JSONL record.");

  // ------------------------------------------------------------ workflows
  m.def("run_datagen",
        [](const std::string& config_json, const std::filesystem::path& out_dir, bool synthetic) {
          const RunConfig cfg = config_from_text(config_json);
          std::ostringstream log;
          std::optional<DatagenSummary> s;
          {
            py::gil_scoped_release release;
            s = run_datagen(cfg, out_dir, synthetic, log);
          }
          return py::make_tuple(s->records, s->corpus, log.str());
        },
        py::arg("config_json"), py::arg("out_dir"), py::arg("synthetic") = false);

  m.def("run_train",
        [](const std::string& config_json, const std::filesystem::path& out_dir) {
          const RunConfig cfg = config_from_text(config_json);
          std::ostringstream log;
          std::optional<TrainSummary> s;
          {
            py::gil_scoped_release release;
            s = run_train(cfg, out_dir, log);
          }
          return py::make_tuple(s->result.initial_smoothed, s->result.final_smoothed, s->checkpoint, s->heldout, log.str());
        },
        py::arg("config_json"), py::arg("out_dir"));

  m.def("run_eval",
        [](const std::string& config_json, const std::filesystem::path& checkpoint,
           const std::filesystem::path& eval_jsonl, const std::filesystem::path& out_dir) {
          const RunConfig cfg = config_from_text(config_json);
          std::ostringstream log;
          std::optional<EvalSummary> s;
          {
            py::gil_scoped_release release;
            s = run_eval(cfg, checkpoint, eval_jsonl, out_dir, log);
          }
          return py::make_tuple(s->report.to_json().dump(), s->with_seg, s->generations, log.str());
        },
        py::arg("config_json"), py::arg("checkpoint"), py::arg("eval_jsonl"), py::arg("out_dir"));

  m.def("run_selfcheck",
        [] {
          std::ostringstream log;
          int failures = 0;
          {
            py::gil_scoped_release release;
            failures = run_selfcheck(log);
          }
          return py::make_tuple(failures, log.str());
        });
}
