#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "raft/numerics/graph.hpp"
#include "raft/numerics/ops.hpp"

namespace raft::encoder {

using numerics::Graph;
using numerics::ParameterSet;
using numerics::Tensor;
using numerics::Var;

struct EncoderConfig {
  std::size_t vocab_size = 0;
  // Maximum word tokens per sequence; <cls> takes one extra leading position.
  std::size_t max_len = 128;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 128;
  double dropout_rate = 0.1;
  bool use_positional = true;

  // Throws ContractError on inconsistent settings.
  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

// Padded batch of id sequences laid out row-major as [batch x length].
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> mask;  // 1 for real tokens

  // Pads every sequence with <pad> to the longest one (or to `pad_to`).
  static TokenBatch pack(std::span<const std::vector<std::size_t>> sequences, std::size_t pad_to = 0);
  std::size_t real_length(std::size_t b) const;
};

template <typename T>
struct EncoderOutput {
  Var<T> lhs;     // [batch*length x d_model]
  Var<T> pooled;  // [batch x d_model], tanh(affine(<cls> row))
};

// Materialized encoder output for a single sequence.
template <typename T>
struct HiddenStates {
  Tensor<T> lhs;
  Tensor<T> pooled;
  std::vector<std::uint8_t> mask;
};

// Parameters of one multi-head attention block: {prefix}{wq,wk,wv,wo}.{w,b}.
template <typename T>
void init_attention(ParameterSet<T>& params, const std::string& prefix, std::size_t d_model, Rng& rng);

// Projects query/key/value, runs masked scaled dot-product attention per head
// over `batch` blocks, concatenates heads and applies the output projection.
template <typename T>
Var<T> multi_head_attention(Graph<T>& g, ParameterSet<T>& params, const std::string& prefix, Var<T> query,
                            Var<T> key, Var<T> value, std::span<const std::uint8_t> key_mask, std::size_t batch,
                            std::size_t heads, Tensor<T>* weights_out = nullptr);

// Post-LN transformer encoder (BERT layout) over learned token and position
// embeddings. Parameters live in a caller-owned ParameterSet under `prefix`.
template <typename T>
class Encoder {
 public:
  explicit Encoder(EncoderConfig config, std::string prefix = "encoder.");

  const EncoderConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

  void init(ParameterSet<T>& params, Rng& rng) const;

  // `dropout_rng` enables dropout (training); nullptr evaluates
  // deterministically. `attention_weights`, when given, receives one
  // [batch, heads, length, length] tensor per layer.
  EncoderOutput<T> forward(Graph<T>& g, ParameterSet<T>& params, const TokenBatch& batch, Rng* dropout_rng = nullptr,
                           std::vector<Tensor<T>>* attention_weights = nullptr) const;

  // Single sequence; ids[0] must be <cls>. `pad_to` appends <pad> positions.
  HiddenStates<T> encode(ParameterSet<T>& params, std::span<const std::size_t> ids, std::size_t pad_to = 0,
                         std::vector<Tensor<T>>* attention_weights = nullptr) const;

  void check_ids(const TokenBatch& batch) const;

 private:
  EncoderConfig config_;
  std::string prefix_;
};

}  // namespace raft::encoder
