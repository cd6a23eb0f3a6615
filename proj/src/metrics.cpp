#include "sama/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "sama/errors.hpp"
#include "sama/grounding_head.hpp"
#include "sama/markup.hpp"
#include "sama/porter.hpp"
#include "sama/tokenizer.hpp"

namespace sama {

void EvalPair::validate() const {
  const MaskTrack* first = nullptr;
  auto check = [&](const EvalTrack& t) {
    t.track.validate();
    if (first == nullptr) {
      first = &t.track;
      return;
    }
    if (t.track.frames() != first->frames() ||
        (t.track.frames() > 0 && !t.track.masks[0].same_shape(first->masks[0]))) {
      throw InputError("sample " + sample_id + ": tracks differ in frame count or resolution");
    }
  };
  for (const auto& t : predicted) check(t);
  for (const auto& t : reference) check(t);
}

double st_iou(const MaskTrack& pred, const MaskTrack& gt) {
  if (pred.frames() != gt.frames()) throw InputError("st_iou: frame counts differ");
  long inter = 0, uni = 0;
  for (std::size_t t = 0; t < pred.frames(); ++t) {
    const BinaryMask& a = pred.masks[t];
    const BinaryMask& b = gt.masks[t];
    if (!a.same_shape(b)) throw InputError("st_iou: mask resolutions differ");
    const auto pa = a.bits(), pb = b.bits();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      inter += (pa[i] & pb[i]) ? 1 : 0;
      uni += (pa[i] | pb[i]) ? 1 : 0;
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<TrackMatch> match_tracks(const std::vector<EvalTrack>& predicted, const std::vector<EvalTrack>& reference) {
  struct Cand {
    double iou;
    int r, p;
  };
  std::vector<Cand> cands;
  for (int r = 0; r < static_cast<int>(reference.size()); ++r) {
    for (int p = 0; p < static_cast<int>(predicted.size()); ++p) {
      const double iou = st_iou(predicted[static_cast<std::size_t>(p)].track, reference[static_cast<std::size_t>(r)].track);
      if (iou > 0.0) cands.push_back({iou, r, p});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.iou > b.iou; });
  std::vector<TrackMatch> out(reference.size());
  for (std::size_t r = 0; r < out.size(); ++r) out[r].reference = static_cast<int>(r);
  std::vector<bool> used(predicted.size(), false);
  for (const Cand& c : cands) {
    TrackMatch& m = out[static_cast<std::size_t>(c.r)];
    if (m.predicted >= 0 || used[static_cast<std::size_t>(c.p)]) continue;
    m.predicted = c.p;
    m.iou = c.iou;
    used[static_cast<std::size_t>(c.p)] = true;
  }
  return out;
}

namespace {

std::pair<double, double> sample_grounding(const EvalPair& pair, double thr) {
  const auto matches = match_tracks(pair.predicted, pair.reference);
  double sum = 0.0, hits = 0.0;
  for (const TrackMatch& m : matches) {
    sum += m.iou;
    hits += m.iou >= thr ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(matches.size());
  return {sum / n, hits / n};
}

}  // namespace

GroundingScores grounding_scores(const std::vector<EvalPair>& pairs, double thr) {
  GroundingScores g;
  for (const EvalPair& p : pairs) {
    if (p.reference.empty()) continue;
    const auto [miou, recall] = sample_grounding(p, thr);
    g.miou += miou;
    g.recall += recall;
    ++g.samples;
  }
  if (g.samples > 0) {
    g.miou /= g.samples;
    g.recall /= g.samples;
  }
  return g;
}

std::vector<std::string> metric_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (std::string& w : Tokenizer::split_words(markup_to_plain(text))) {
    if (std::any_of(w.begin(), w.end(), [](unsigned char c) { return std::isalnum(c); })) out.push_back(std::move(w));
  }
  return out;
}

namespace {

double meteor_single(const std::vector<std::string>& cand, const std::vector<std::string>& ref, const MeteorParams& p) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::vector<int> align(cand.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);
  auto stage = [&](auto&& key) {
    std::vector<std::string> ck, rk;
    for (const auto& w : cand) ck.push_back(key(w));
    for (const auto& w : ref) rk.push_back(key(w));
    int last = -1;  // reference position of the most recent aligned candidate
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (align[i] >= 0) {
        last = align[i];
        continue;
      }
      int pick = -1;
      // Continuing the current chunk beats everything; otherwise prefer the
      // first free position after the last alignment, then the first overall.
      const int next = last + 1;
      if (i > 0 && align[i - 1] >= 0 && next < static_cast<int>(ref.size()) && !ref_used[static_cast<std::size_t>(next)] &&
          rk[static_cast<std::size_t>(next)] == ck[i]) {
        pick = next;
      }
      for (int pass = 0; pass < 2 && pick < 0; ++pass) {
        for (int j = pass == 0 ? last + 1 : 0; j < static_cast<int>(ref.size()); ++j) {
          if (!ref_used[static_cast<std::size_t>(j)] && rk[static_cast<std::size_t>(j)] == ck[i]) {
            pick = j;
            break;
          }
        }
      }
      if (pick >= 0) {
        align[i] = pick;
        ref_used[static_cast<std::size_t>(pick)] = true;
        last = pick;
      }
    }
  };
  stage([](const std::string& w) { return w; });
  stage([](const std::string& w) { return porter_stem(w); });

  int matches = 0, chunks = 0;
  int prev_i = -2, prev_j = -2;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (align[i] < 0) continue;
    ++matches;
    if (!(static_cast<int>(i) == prev_i + 1 && align[i] == prev_j + 1)) ++chunks;
    prev_i = static_cast<int>(i);
    prev_j = align[i];
  }
  if (matches == 0) return 0.0;
  const double prec = static_cast<double>(matches) / static_cast<double>(cand.size());
  const double rec = static_cast<double>(matches) / static_cast<double>(ref.size());
  const double fmean = prec * rec / (p.alpha * prec + (1.0 - p.alpha) * rec);
  const double penalty = p.gamma * std::pow(static_cast<double>(chunks) / matches, p.beta);
  return fmean * (1.0 - penalty);
}

}  // namespace

double meteor(const std::vector<std::string>& candidate, const std::vector<std::vector<std::string>>& references,
              const MeteorParams& params) {
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, meteor_single(candidate, r, params));
  return best;
}

double meteor(std::string_view candidate, const std::vector<std::string>& references, const MeteorParams& params) {
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(metric_tokens(r));
  return meteor(metric_tokens(candidate), refs, params);
}

namespace {

using NgramCounts = std::array<std::map<std::string, double>, 4>;

NgramCounts ngrams(const std::vector<std::string>& words) {
  NgramCounts out;
  for (std::size_t n = 1; n <= 4; ++n) {
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string g = words[i];
      for (std::size_t k = 1; k < n; ++k) g += ' ' + words[i + k];
      out[n - 1][g] += 1.0;
    }
  }
  return out;
}

struct TfIdf {
  std::array<std::map<std::string, double>, 4> vec;
  std::array<double, 4> norm{};
  double length = 0.0;
};

TfIdf weigh(const NgramCounts& counts, const std::map<std::string, double>& df, double log_docs, double length) {
  TfIdf v;
  v.length = length;
  for (std::size_t n = 0; n < 4; ++n) {
    for (const auto& [g, tf] : counts[n]) {
      const auto it = df.find(g);
      const double w = tf * (log_docs - std::log(std::max(1.0, it == df.end() ? 0.0 : it->second)));
      v.vec[n][g] = w;
      v.norm[n] += w * w;
    }
    v.norm[n] = std::sqrt(v.norm[n]);
  }
  return v;
}

double cider_sim(const TfIdf& hyp, const TfIdf& ref, double sigma) {
  const double delta = hyp.length - ref.length;
  double total = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double val = 0.0;
    for (const auto& [g, w] : hyp.vec[n]) {
      const auto it = ref.vec[n].find(g);
      if (it != ref.vec[n].end()) val += std::min(w, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val /= hyp.norm[n] * ref.norm[n];
    total += val * std::exp(-(delta * delta) / (2.0 * sigma * sigma));
  }
  return total / 4.0;
}

}  // namespace

CiderScores cider(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references,
                  double sigma) {
  if (candidates.empty()) throw ConfigError("cider: empty corpus");
  if (candidates.size() != references.size()) throw ConfigError("cider: one reference set per candidate is required");
  std::vector<std::vector<NgramCounts>> ref_counts(references.size());
  std::vector<std::vector<double>> ref_lengths(references.size());
  std::map<std::string, double> df;
  for (std::size_t i = 0; i < references.size(); ++i) {
    if (references[i].empty()) throw ConfigError("cider: sample without references");
    std::set<std::string> seen;
    for (const std::string& r : references[i]) {
      const auto words = metric_tokens(r);
      ref_counts[i].push_back(ngrams(words));
      ref_lengths[i].push_back(static_cast<double>(words.size()));
      for (const auto& level : ref_counts[i].back()) {
        for (const auto& [g, _] : level) seen.insert(g);
      }
    }
    for (const std::string& g : seen) df[g] += 1.0;
  }
  const double log_docs = std::log(static_cast<double>(references.size()));
  CiderScores out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto words = metric_tokens(candidates[i]);
    const TfIdf hyp = weigh(ngrams(words), df, log_docs, static_cast<double>(words.size()));
    double score = 0.0;
    for (std::size_t k = 0; k < ref_counts[i].size(); ++k) {
      score += cider_sim(hyp, weigh(ref_counts[i][k], df, log_docs, ref_lengths[i][k]), sigma);
    }
    out.per_sample.push_back(10.0 * score / static_cast<double>(ref_counts[i].size()));
  }
  for (double s : out.per_sample) out.corpus += s;
  out.corpus /= static_cast<double>(out.per_sample.size());
  return out;
}

std::optional<double> parse_judge_score(std::string_view reply) {
  static const std::regex number(R"((\d+))");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(reply.begin(), reply.end(), m, number)) return std::nullopt;
  if (m.length(1) > 3) return std::nullopt;
  const int v = std::stoi(m.str(1));
  if (v > 100) return std::nullopt;
  return v / 100.0;
}

ClairResult clair_judge(std::string_view candidate, std::string_view reference, CompletionClient& judge,
                        const std::string& key, int attempts) {
  const std::string prompt =
      "You are judging whether two descriptions of the same video say the same thing.\n"
      "Candidate: " + markup_to_plain(candidate) + "\nReference: " + markup_to_plain(reference) +
      "\nOn a scale from 0 to 100, how likely is it that both describe the same events? "
      "Reply in the form \"Score: N\" followed by a one-sentence reason.";
  ClairResult r;
  for (int a = 0; a < attempts; ++a) {
    r.attempts = a + 1;
    try {
      if (auto s = parse_judge_score(judge.complete({"clair/" + key, prompt, {}, a}))) {
        r.score = s;
        return r;
      }
    } catch (const ClientError&) {
      // counted as a failed attempt
    }
  }
  return r;
}

MetricReport evaluate(const std::vector<EvalPair>& pairs, const MetricsConfig& cfg, CompletionClient* judge,
                      int judge_attempts) {
  if (pairs.empty()) throw ConfigError("evaluate: no samples");
  if (cfg.clair && judge == nullptr) throw ConfigError("evaluate: CLAIR requested without a judge client");
  const MeteorParams mp{cfg.meteor_alpha, cfg.meteor_beta, cfg.meteor_gamma};
  std::vector<std::string> cands;
  std::vector<std::vector<std::string>> refs;
  for (const EvalPair& p : pairs) {
    p.validate();
    cands.push_back(p.pred_text);
    refs.push_back({p.ref_text});
  }
  const CiderScores cs = cider(cands, refs, cfg.cider_sigma);

  MetricReport rep;
  rep.grounding = grounding_scores(pairs, cfg.iou_threshold);
  double clair_sum = 0.0;
  int clair_n = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const EvalPair& p = pairs[i];
    SampleMetrics s;
    s.sample_id = p.sample_id;
    s.references = static_cast<int>(p.reference.size());
    s.predictions = static_cast<int>(p.predicted.size());
    if (!p.reference.empty()) {
      const auto [miou, recall] = sample_grounding(p, cfg.iou_threshold);
      s.miou = miou;
      s.recall = recall;
    }
    s.meteor = meteor(p.pred_text, {p.ref_text}, mp);
    s.cider = cs.per_sample[i];
    if (cfg.clair) {
      const ClairResult c = clair_judge(p.pred_text, p.ref_text, *judge, p.sample_id, judge_attempts);
      s.clair = c.score;
      s.clair_failed = !c.score.has_value();
      if (c.score) {
        clair_sum += *c.score;
        ++clair_n;
      } else {
        ++rep.clair_failed;
      }
    }
    rep.meteor += s.meteor;
    rep.samples.push_back(std::move(s));
  }
  rep.meteor /= static_cast<double>(pairs.size());
  rep.cider = cs.corpus;
  if (clair_n > 0) rep.clair = clair_sum / clair_n;
  return rep;
}

OrderedJson MetricReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? OrderedJson(*v) : OrderedJson(nullptr); };
  OrderedJson j;
  OrderedJson agg;
  agg["miou"] = grounding.samples > 0 ? OrderedJson(grounding.miou) : OrderedJson(nullptr);
  agg["recall"] = grounding.samples > 0 ? OrderedJson(grounding.recall) : OrderedJson(nullptr);
  agg["meteor"] = meteor;
  agg["cider"] = cider;
  agg["clair"] = opt(clair);
  j["aggregate"] = agg;
  OrderedJson counts;
  int refs = 0, preds = 0;
  for (const auto& s : samples) {
    refs += s.references;
    preds += s.predictions;
  }
  counts["samples"] = samples.size();
  counts["grounded_samples"] = grounding.samples;
  counts["reference_objects"] = refs;
  counts["predicted_tracks"] = preds;
  counts["clair_failed"] = clair_failed;
  j["counts"] = counts;
  j["samples"] = OrderedJson::array();
  for (const auto& s : samples) {
    OrderedJson o;
    o["sample_id"] = s.sample_id;
    o["references"] = s.references;
    o["predictions"] = s.predictions;
    o["miou"] = opt(s.miou);
    o["recall"] = opt(s.recall);
    o["meteor"] = s.meteor;
    o["cider"] = s.cider;
    o["clair"] = opt(s.clair);
    o["clair_failed"] = s.clair_failed;
    j["samples"].push_back(o);
  }
  return j;
}

std::string MetricReport::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "samples           " << samples.size() << "\n";
  os << "grounded samples  " << grounding.samples << "\n";
  os << "mIoU              " << grounding.miou << "\n";
  os << "Recall            " << grounding.recall << "\n";
  os << "METEOR            " << meteor << "\n";
  os << "CIDEr             " << cider << "\n";
  os << "CLAIR             ";
  if (clair) {
    os << *clair;
  } else {
    os << "n/a";
  }
  if (clair_failed > 0) os << "  (" << clair_failed << " unparsed)";
  os << "\n";
  return os.str();
}

EvalPair eval_pair_from_record(const GroundedDialogueRecord& record) {
  if (!record.prediction) throw DataError(record.video_id + ": record has no prediction");
  EvalPair p;
  p.sample_id = record.video_id;
  const auto last = std::find_if(record.conversation.rbegin(), record.conversation.rend(),
                                 [](const Turn& t) { return t.role == "assistant"; });
  if (last == record.conversation.rend()) throw DataError(record.video_id + ": no assistant turn to evaluate against");
  p.ref_text = last->text;
  std::set<std::string> seen;
  for (const PhraseSpan& s : parse_grounded_phrases(last->text)) {
    if (!s.object_id || !seen.insert(*s.object_id).second) continue;
    p.reference.push_back({s.phrase, record.track(*s.object_id)});
  }
  p.pred_text = record.prediction->text;
  for (const PredictedTrack& t : record.prediction->tracks) {
    MaskTrack track;
    for (const RleMask& m : t.masks) track.masks.push_back(rle_decode(m));
    p.predicted.push_back({t.phrase, std::move(track)});
  }
  return p;
}

}  // namespace sama
