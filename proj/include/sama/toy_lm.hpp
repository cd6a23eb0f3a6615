#pragma once

// Small pre-LayerNorm causal transformer with learned absolute positions and
// an output head tied to the token embedding table.

#include <span>
#include <string>

#include "sama/autograd.hpp"

namespace sama {

struct LmConfig {
  int layers = 2;
  int heads = 4;
  int dim = 128;  // D_llm
  int ffn_mult = 4;
  int max_seq_len = 512;

  void validate() const;
  friend bool operator==(const LmConfig&, const LmConfig&) = default;
};

class ToyCausalLM {
 public:
  ToyCausalLM(LmConfig cfg, int vocab_size, std::string prefix = "lm");

  const LmConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }
  std::string embedding_name() const { return prefix_ + ".tok_emb"; }

  void init_params(ParamStore& params, Rng& rng) const;

  ad::Var embedding_table(ad::Tape& tape, const ParamStore& params) const;

  /// Final (layer-normed) hidden states [L, D] of an embedded sequence. Every
  /// position attends to the first `visual_prefix` positions and causally to
  /// itself and earlier positions. Throws InputError past max_seq_len.
  ad::Var hidden(ad::Tape& tape, const ParamStore& params, ad::Var embeddings, int visual_prefix) const;

  /// Tied-head logits [rows, V] for the given hidden rows.
  ad::Var logits(ad::Tape& tape, const ParamStore& params, ad::Var hidden_rows) const;

 private:
  std::string name(int layer, const std::string& leaf) const;

  LmConfig cfg_;
  int vocab_size_;
  std::string prefix_;
};

}  // namespace sama
