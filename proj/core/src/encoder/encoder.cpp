#include "raft/encoder/encoder.hpp"

#include <cmath>

#include "raft/encoder/vocabulary.hpp"

namespace raft::encoder {

using numerics::Shape;

void EncoderConfig::validate() const {
  if (vocab_size < 3) throw ContractError("encoder: vocab_size must include the three special tokens");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ContractError("encoder: d_model must be divisible by n_heads");
  }
  if (max_len == 0 || d_ff == 0) throw ContractError("encoder: max_len and d_ff must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ContractError("encoder: dropout_rate must be in [0, 1)");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"vocab_size", c.vocab_size}, {"max_len", c.max_len},   {"d_model", c.d_model},
       {"n_heads", c.n_heads},       {"n_layers", c.n_layers}, {"d_ff", c.d_ff},
       {"dropout_rate", c.dropout_rate}, {"use_positional", c.use_positional}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  EncoderConfig d;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_len = j.value("max_len", d.max_len);
  c.d_model = j.value("d_model", d.d_model);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.dropout_rate = j.value("dropout_rate", d.dropout_rate);
  c.use_positional = j.value("use_positional", d.use_positional);
}

TokenBatch TokenBatch::pack(std::span<const std::vector<std::size_t>> sequences, std::size_t pad_to) {
  if (sequences.empty()) throw ContractError("cannot pack an empty batch");
  TokenBatch b;
  b.batch = sequences.size();
  b.length = pad_to;
  for (const auto& s : sequences) {
    if (s.empty()) throw ContractError("cannot pack an empty sequence");
    b.length = std::max(b.length, s.size());
  }
  b.ids.assign(b.batch * b.length, kPadId);
  b.mask.assign(b.batch * b.length, 0);
  for (std::size_t i = 0; i < b.batch; ++i) {
    for (std::size_t t = 0; t < sequences[i].size(); ++t) {
      b.ids[i * b.length + t] = sequences[i][t];
      b.mask[i * b.length + t] = 1;
    }
  }
  return b;
}

std::size_t TokenBatch::real_length(std::size_t b) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < length; ++t) n += mask[b * length + t];
  return n;
}

namespace {

template <typename T>
void add_linear(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  params.add_normal(name + ".w", {in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  params.add(name + ".b", Tensor<T>::zeros({out}));
}

template <typename T>
void add_layer_norm(ParameterSet<T>& params, const std::string& name, std::size_t d) {
  params.add(name + ".gain", Tensor<T>::filled({d}, T(1)));
  params.add(name + ".bias", Tensor<T>::zeros({d}));
}

template <typename T>
Var<T> apply_linear(Graph<T>& g, ParameterSet<T>& params, const std::string& name, Var<T> x) {
  return numerics::linear(x, g.param(params.at(name + ".w")), g.param(params.at(name + ".b")));
}

template <typename T>
Var<T> apply_layer_norm(Graph<T>& g, ParameterSet<T>& params, const std::string& name, Var<T> x) {
  return numerics::layer_norm(x, g.param(params.at(name + ".gain")), g.param(params.at(name + ".bias")), 1e-5);
}

template <typename T>
Var<T> maybe_dropout(Var<T> x, double rate, Rng* rng) {
  return rng ? numerics::dropout(x, rate, *rng) : x;
}

}  // namespace

template <typename T>
void init_attention(ParameterSet<T>& params, const std::string& prefix, std::size_t d_model, Rng& rng) {
  for (const char* proj : {"wq", "wk", "wv", "wo"}) add_linear(params, prefix + proj, d_model, d_model, rng);
}

template <typename T>
Var<T> multi_head_attention(Graph<T>& g, ParameterSet<T>& params, const std::string& prefix, Var<T> query,
                            Var<T> key, Var<T> value, std::span<const std::uint8_t> key_mask, std::size_t batch,
                            std::size_t heads, Tensor<T>* weights_out) {
  auto q = apply_linear(g, params, prefix + "wq", query);
  auto k = apply_linear(g, params, prefix + "wk", key);
  auto v = apply_linear(g, params, prefix + "wv", value);
  auto ctx = numerics::attention(q, k, v, key_mask, batch, heads, weights_out);
  return apply_linear(g, params, prefix + "wo", ctx);
}

template <typename T>
Encoder<T>::Encoder(EncoderConfig config, std::string prefix) : config_(config), prefix_(std::move(prefix)) {
  config_.validate();
}

template <typename T>
void Encoder<T>::init(ParameterSet<T>& params, Rng& rng) const {
  const auto d = config_.d_model;
  params.add_normal(prefix_ + "tok_emb", {config_.vocab_size, d}, 0.1, rng);
  if (config_.use_positional) params.add_normal(prefix_ + "pos_emb", {config_.max_len + 1, d}, 0.1, rng);
  add_layer_norm(params, prefix_ + "emb_ln", d);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const auto layer = prefix_ + "layer" + std::to_string(l) + ".";
    init_attention(params, layer + "attn.", d, rng);
    add_layer_norm(params, layer + "ln1", d);
    add_linear(params, layer + "ff1", d, config_.d_ff, rng);
    add_linear(params, layer + "ff2", config_.d_ff, d, rng);
    add_layer_norm(params, layer + "ln2", d);
  }
  add_linear(params, prefix_ + "pool", d, d, rng);
}

template <typename T>
void Encoder<T>::check_ids(const TokenBatch& batch) const {
  if (batch.length > config_.max_len + 1) {
    throw ContractError("encoder: sequence length " + std::to_string(batch.length) + " exceeds max_len + 1");
  }
  for (std::size_t b = 0; b < batch.batch; ++b) {
    if (batch.ids[b * batch.length] != kClsId || !batch.mask[b * batch.length]) {
      throw ContractError("encoder: position 0 must hold the <cls> token");
    }
  }
  for (auto id : batch.ids) {
    if (id >= config_.vocab_size) {
      throw ContractError("encoder: token id " + std::to_string(id) + " >= vocab_size " +
                          std::to_string(config_.vocab_size));
    }
  }
}

template <typename T>
EncoderOutput<T> Encoder<T>::forward(Graph<T>& g, ParameterSet<T>& params, const TokenBatch& batch, Rng* dropout_rng,
                                     std::vector<Tensor<T>>* attention_weights) const {
  check_ids(batch);
  const double rate = config_.dropout_rate;
  auto x = numerics::gather_rows(g.param(params.at(prefix_ + "tok_emb")), std::span<const std::size_t>(batch.ids));
  if (config_.use_positional) {
    std::vector<std::size_t> pos(batch.batch * batch.length);
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i % batch.length;
    x = numerics::add(x, numerics::gather_rows(g.param(params.at(prefix_ + "pos_emb")), std::span<const std::size_t>(pos)));
  }
  x = maybe_dropout(apply_layer_norm(g, params, prefix_ + "emb_ln", x), rate, dropout_rng);

  const std::span<const std::uint8_t> mask(batch.mask);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const auto layer = prefix_ + "layer" + std::to_string(l) + ".";
    Tensor<T> weights;
    auto a = multi_head_attention(g, params, layer + "attn.", x, x, x, mask, batch.batch, config_.n_heads,
                                  attention_weights ? &weights : nullptr);
    if (attention_weights) attention_weights->push_back(std::move(weights));
    x = apply_layer_norm(g, params, layer + "ln1", numerics::add(x, maybe_dropout(a, rate, dropout_rng)));
    auto f = apply_linear(g, params, layer + "ff2", numerics::gelu(apply_linear(g, params, layer + "ff1", x)));
    x = apply_layer_norm(g, params, layer + "ln2", numerics::add(x, maybe_dropout(f, rate, dropout_rng)));
  }

  std::vector<std::size_t> cls_rows(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) cls_rows[b] = b * batch.length;
  auto cls = numerics::gather_rows(x, std::span<const std::size_t>(cls_rows));
  auto pooled = numerics::tanh(apply_linear(g, params, prefix_ + "pool", cls));
  return {x, pooled};
}

template <typename T>
HiddenStates<T> Encoder<T>::encode(ParameterSet<T>& params, std::span<const std::size_t> ids, std::size_t pad_to,
                                   std::vector<Tensor<T>>* attention_weights) const {
  std::vector<std::vector<std::size_t>> seqs{std::vector<std::size_t>(ids.begin(), ids.end())};
  const auto batch = TokenBatch::pack(seqs, pad_to);
  Graph<T> g;
  auto out = forward(g, params, batch, nullptr, attention_weights);
  return {out.lhs.value(), Tensor<T>({config_.d_model}, out.pooled.value().data), batch.mask};
}

template class Encoder<float>;
template class Encoder<double>;
template void init_attention(ParameterSet<float>&, const std::string&, std::size_t, Rng&);
template void init_attention(ParameterSet<double>&, const std::string&, std::size_t, Rng&);
template Var<float> multi_head_attention(Graph<float>&, ParameterSet<float>&, const std::string&, Var<float>, Var<float>,
                                         Var<float>, std::span<const std::uint8_t>, std::size_t, std::size_t,
                                         Tensor<float>*);
template Var<double> multi_head_attention(Graph<double>&, ParameterSet<double>&, const std::string&, Var<double>,
                                          Var<double>, Var<double>, std::span<const std::uint8_t>, std::size_t,
                                          std::size_t, Tensor<double>*);

}  // namespace raft::encoder
