#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "sama/config.hpp"
#include "sama/errors.hpp"
#include "sama/sama_model.hpp"

namespace sama {

void apply_trainability(ParamStore& params, const TrainConfig& cfg) {
  params.set_trainable_prefix("encoder.", false);
  if (cfg.freeze_lm) params.set_trainable_prefix("lm.", false);
}

namespace {

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParamStore& params, const std::map<std::string, Matrix>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    for (const auto& [name, g] : grads) {
      auto [it, fresh] = state_.try_emplace(name);
      if (fresh) {
        it->second.m = Matrix::Zero(g.rows(), g.cols());
        it->second.v = Matrix::Zero(g.rows(), g.cols());
      }
      Moments& s = it->second;
      s.m = b1_ * s.m + (1.0 - b1_) * g;
      s.v = b2_ * s.v + (1.0 - b2_) * g.cwiseProduct(g);
      const Matrix update = (s.m / c1).array() / ((s.v / c2).array().sqrt() + eps_);
      params.get_mut(name) -= lr * update;
    }
  }

 private:
  struct Moments {
    Matrix m, v;
  };
  double b1_, b2_, eps_;
  int t_ = 0;
  std::map<std::string, Moments> state_;
};

double scheduled_lr(const TrainConfig& cfg, int step) {
  double lr = cfg.lr;
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) lr *= static_cast<double>(step + 1) / cfg.warmup_steps;
  if (cfg.cosine_decay && cfg.steps > cfg.warmup_steps) {
    const double progress = static_cast<double>(std::max(0, step - cfg.warmup_steps)) / (cfg.steps - cfg.warmup_steps);
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
  }
  return lr;
}

double window_mean(const std::vector<LossPoint>& curve, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += curve[i].total;
  return end > begin ? s / static_cast<double>(end - begin) : 0.0;
}

}  // namespace

TrainResult train(const SamaModel& model, ParamStore& params, const std::vector<PreparedSample>& data,
                  const TrainConfig& cfg, const std::function<void(const LossPoint&)>& on_step) {
  cfg.validate();
  if (data.empty()) throw DataError("training set is empty");
  apply_trainability(params, cfg);

  Adam adam;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  TrainResult result;
  for (int step = 0; step < cfg.steps; ++step) {
    std::map<std::string, Matrix> grads;
    LossPoint point;
    point.step = step;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const PreparedSample& sample = data[order[cursor++]];
      ad::Tape tape;
      const ForwardOutput out = model.forward(tape, params, sample);
      const LossBreakdown loss = model.loss(tape, out, cfg);
      if (!std::isfinite(loss.total)) throw DivergenceError("non-finite loss in sample " + sample.video_id, step);
      tape.backward(loss.total_var);
      for (auto& [name, g] : tape.param_grads()) {
        auto [it, fresh] = grads.try_emplace(name, g);
        if (!fresh) it->second += g;
      }
      point.total += loss.total / cfg.batch_size;
      point.ce += loss.ce / cfg.batch_size;
      point.bce += loss.bce / cfg.batch_size;
      point.dice += loss.dice / cfg.batch_size;
    }
    double norm2 = 0.0;
    for (auto& [name, g] : grads) {
      g /= static_cast<double>(cfg.batch_size);
      norm2 += g.squaredNorm();
    }
    if (!std::isfinite(norm2)) throw DivergenceError("non-finite gradient", step);
    if (cfg.grad_clip > 0.0 && std::sqrt(norm2) > cfg.grad_clip) {
      const double s = cfg.grad_clip / std::sqrt(norm2);
      for (auto& [name, g] : grads) g *= s;
    }
    adam.step(params, grads, scheduled_lr(cfg, step));
    result.curve.push_back(point);
    if (on_step) on_step(point);
  }
  const std::size_t n = result.curve.size(), w = std::min<std::size_t>(static_cast<std::size_t>(cfg.smooth_window), n);
  result.initial_smoothed = window_mean(result.curve, 0, w);
  result.final_smoothed = window_mean(result.curve, n - w, n);
  return result;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'S', 'A', 'M', 'A', 'C', 'K', 'P', 'T'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Json header;
  header["format"] = 1;
  header["config"] = model_bundle_to_json(ckpt.model, ckpt.train);
  header["vocab"] = ckpt.vocab;
  header["tensors"] = Json::array();
  std::uint64_t offset = 0;
  for (const std::string& name : ckpt.params.names()) {
    const Matrix& m = ckpt.params.get(name);
    header["tensors"].push_back({{"name", name},
                                 {"rows", m.rows()},
                                 {"cols", m.cols()},
                                 {"trainable", ckpt.params.trainable(name)},
                                 {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size());
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const std::string& name : ckpt.params.names()) {
    const Matrix& m = ckpt.params.get(name);
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError("not a checkpoint: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());
  Checkpoint ckpt;
  try {
    const Json header = Json::parse(text);
    model_bundle_from_json(header.at("config"), ckpt.model, ckpt.train);
    ckpt.vocab = header.at("vocab").get<std::vector<std::string>>();
    for (const auto& t : header.at("tensors")) {
      Matrix m(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
      if (!in) throw DataError("truncated checkpoint tensor data: " + path.string());
      ckpt.params.add(t.at("name").get<std::string>(), std::move(m), t.at("trainable").get<bool>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header: " + std::string(e.what()));
  }
  return ckpt;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  out << "step,total,ce,bce,dice\n";
  for (const LossPoint& p : curve) out << p.step << ',' << p.total << ',' << p.ce << ',' << p.bce << ',' << p.dice << '\n';
}

}  // namespace sama
