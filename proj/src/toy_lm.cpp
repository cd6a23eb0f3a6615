#include "sama/toy_lm.hpp"

#include "sama/errors.hpp"

namespace sama {

void LmConfig::validate() const {
  if (layers < 1 || heads < 1 || dim < 1 || ffn_mult < 1 || max_seq_len < 1) {
    throw ConfigError("lm: layers, heads, dim, ffn_mult and max_seq_len must be positive");
  }
  if (dim % heads != 0) throw ConfigError("lm: dim must be divisible by heads");
}

ToyCausalLM::ToyCausalLM(LmConfig cfg, int vocab_size, std::string prefix)
    : cfg_(cfg), vocab_size_(vocab_size), prefix_(std::move(prefix)) {
  cfg_.validate();
  if (vocab_size < 1) throw ConfigError("lm: empty vocabulary");
}

std::string ToyCausalLM::name(int layer, const std::string& leaf) const {
  return prefix_ + ".layers." + std::to_string(layer) + "." + leaf;
}

void ToyCausalLM::init_params(ParamStore& params, Rng& rng) const {
  const int d = cfg_.dim, h = cfg_.dim * cfg_.ffn_mult;
  params.add(embedding_name(), normal_init(vocab_size_, d, 0.1, rng));
  params.add(prefix_ + ".pos_emb", normal_init(cfg_.max_seq_len, d, 0.02, rng));
  for (int l = 0; l < cfg_.layers; ++l) {
    params.add(name(l, "ln1.g"), Matrix::Ones(1, d));
    params.add(name(l, "ln1.b"), Matrix::Zero(1, d));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) params.add(name(l, w), xavier_uniform(d, d, rng));
    params.add(name(l, "ln2.g"), Matrix::Ones(1, d));
    params.add(name(l, "ln2.b"), Matrix::Zero(1, d));
    params.add(name(l, "ffn.w1"), xavier_uniform(d, h, rng));
    params.add(name(l, "ffn.b1"), Matrix::Zero(1, h));
    params.add(name(l, "ffn.w2"), xavier_uniform(h, d, rng));
    params.add(name(l, "ffn.b2"), Matrix::Zero(1, d));
  }
  params.add(prefix_ + ".ln_f.g", Matrix::Ones(1, d));
  params.add(prefix_ + ".ln_f.b", Matrix::Zero(1, d));
}

ad::Var ToyCausalLM::embedding_table(ad::Tape& tape, const ParamStore& params) const {
  return tape.param(params, embedding_name());
}

ad::Var ToyCausalLM::hidden(ad::Tape& tape, const ParamStore& params, ad::Var embeddings, int visual_prefix) const {
  const int n = static_cast<int>(embeddings.rows());
  if (n > cfg_.max_seq_len) {
    throw InputError("sequence of " + std::to_string(n) + " tokens exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
  }
  if (embeddings.cols() != cfg_.dim) throw ConfigError("lm: embedding width mismatch");
  Matrix allowed(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) allowed(i, j) = (j < visual_prefix || j <= i) ? 1.0 : 0.0;
  }
  auto p = [&](const std::string& s) { return tape.param(params, s); };
  ad::Var x = tape.add(embeddings, tape.slice_rows(p(prefix_ + ".pos_emb"), 0, n));
  for (int l = 0; l < cfg_.layers; ++l) {
    ad::Var a = tape.layer_norm(x, p(name(l, "ln1.g")), p(name(l, "ln1.b")));
    ad::Var att = ad::multi_head_attend(tape, tape.matmul(a, p(name(l, "attn.wq"))), tape.matmul(a, p(name(l, "attn.wk"))),
                                        tape.matmul(a, p(name(l, "attn.wv"))), cfg_.heads, &allowed);
    x = tape.add(x, tape.matmul(att, p(name(l, "attn.wo"))));
    ad::Var f = tape.layer_norm(x, p(name(l, "ln2.g")), p(name(l, "ln2.b")));
    f = tape.gelu(tape.add_row(tape.matmul(f, p(name(l, "ffn.w1"))), p(name(l, "ffn.b1"))));
    x = tape.add(x, tape.add_row(tape.matmul(f, p(name(l, "ffn.w2"))), p(name(l, "ffn.b2"))));
  }
  return tape.layer_norm(x, p(prefix_ + ".ln_f.g"), p(prefix_ + ".ln_f.b"));
}

ad::Var ToyCausalLM::logits(ad::Tape& tape, const ParamStore& params, ad::Var hidden_rows) const {
  return tape.matmul_nt(hidden_rows, embedding_table(tape, params));
}

}  // namespace sama
