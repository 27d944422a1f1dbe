#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "raft/corpus/post.hpp"
#include "raft/multitask/rlt.hpp"

namespace raft::adapters {

using encoder::Encoder;
using encoder::EncoderConfig;
using encoder::TokenBatch;
using encoder::Vocabulary;
using multitask::FitResult;
using multitask::RltModel;
using multitask::TrainSettings;
using numerics::Graph;
using numerics::ModelCheckpoint;
using numerics::ParameterSet;
using numerics::Tensor;
using numerics::Var;

// kBaseline: encoder + linear layer on the pooled vector.
// kRaftSA: gated LHS -> self-attention -> masked mean -> linear layer.
// kRaftCA: pooled <cls> queries the gated LHS -> linear layer.
enum class ClassifierKind { kBaseline, kRaftSA, kRaftCA };

std::string to_string(ClassifierKind k);
ClassifierKind parse_classifier_kind(const std::string& s);
inline bool is_raft(ClassifierKind k) { return k != ClassifierKind::kBaseline; }

struct ClassifierConfig {
  ClassifierKind kind = ClassifierKind::kRaftSA;
  EncoderConfig encoder;  // vocab_size is set from the vocabulary
  std::size_t attention_heads = 4;
  bool gate_cls_override = true;
  TrainSettings train;
  std::size_t min_count = 1;
};

void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);

// Per-position gate values for one post: <cls> first, one per kept word.
using Gates = std::vector<double>;

// Gate provider for a list of token sequences (one Gates per sequence).
using GateFn = std::function<std::vector<Gates>(const std::vector<std::vector<std::string>>& posts)>;

// Sigmoid rationale probabilities of a frozen extractor.
GateFn extractor_gates(const RltModel& extractor);

template <typename T>
void init_classifier_head(ParameterSet<T>& params, const ClassifierConfig& config, std::size_t n_classes, Rng& rng);

// Packs gates for a batch ([batch*length], zero on padding). Applies the
// <cls> override when enabled. AlignmentError on a length mismatch.
template <typename T>
std::vector<T> pack_gates(const std::vector<const Gates*>& gates, const TokenBatch& batch, bool cls_override);

// Label logits [batch x classes]. `gates` is ignored for the baseline; for
// RAFT kinds a null `gates` runs the ungated pipeline.
template <typename T>
Var<T> classifier_forward(Graph<T>& g, ParameterSet<T>& params, const Encoder<T>& enc, const ClassifierConfig& config,
                          const TokenBatch& batch, const std::vector<T>* gates, Rng* dropout_rng = nullptr);

// LHS rows scaled by the packed gates.
template <typename T>
Var<T> gate_states(Var<T> lhs, const std::vector<T>& gates);

class Classifier {
 public:
  Classifier(ClassifierConfig config, std::vector<std::string> classes, Vocabulary vocab, std::uint64_t seed);

  const ClassifierConfig& config() const { return config_; }
  const std::vector<std::string>& classes() const { return classes_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const Encoder<float>& encoder() const { return encoder_; }
  ParameterSet<float>& params() { return params_; }
  const ParameterSet<float>& params() const { return params_; }

  const std::string& extractor_hash() const { return extractor_hash_; }
  void set_extractor_hash(std::string h) { extractor_hash_ = std::move(h); }

  // Tokens kept by the encoder (first max_len).
  std::vector<std::string> truncate(const std::vector<std::string>& tokens) const;
  TokenBatch pack(const std::vector<const std::vector<std::string>*>& posts) const;

  // Replaces the classification layer with a fresh one over `classes`.
  void reset_head(std::vector<std::string> classes, std::uint64_t seed);

  // Class probabilities. RAFT kinds need one gate vector per post.
  std::vector<std::vector<double>> predict(const std::vector<std::vector<std::string>>& posts,
                                           const std::vector<Gates>* gates = nullptr,
                                           std::size_t batch_size = 64) const;

  ModelCheckpoint to_checkpoint() const;
  static Classifier from_checkpoint(const ModelCheckpoint& ckpt);

 private:
  ClassifierConfig config_;
  std::vector<std::string> classes_;
  Vocabulary vocab_;
  Encoder<float> encoder_;
  mutable ParameterSet<float> params_;
  std::string extractor_hash_;
};

std::size_t argmax(const std::vector<double>& probs);

// Macro-F1 of the model on labelled posts.
double evaluate_classifier(const Classifier& model, const std::vector<corpus::TokenizedPost>& posts,
                           const std::vector<Gates>* gates = nullptr);

// Gates for every post, computed on the classifier's truncated tokens.
std::vector<Gates> compute_gates(const GateFn& fn, const Classifier& model,
                                 const std::vector<corpus::TokenizedPost>& posts);

struct ClassifierTrainResult {
  Classifier model;
  FitResult fit;
};

// Trains `model` in place (classes must already match) with dev macro-F1
// early stopping. RAFT kinds need gates for both splits.
ClassifierTrainResult fit_classifier(Classifier model, const std::vector<corpus::TokenizedPost>& train,
                                     const std::vector<corpus::TokenizedPost>& dev,
                                     const std::vector<Gates>* train_gates, const std::vector<Gates>* dev_gates,
                                     std::uint64_t seed);

// Vocabulary over the given posts' tokens.
Vocabulary build_vocabulary(const std::vector<const std::vector<corpus::TokenizedPost>*>& sets, std::size_t min_count);

// RAFT-SA / RAFT-CA with gates from a frozen extractor. The extractor is
// never modified; its checkpoint hash is recorded in the result.
ClassifierTrainResult train_raft(const std::vector<corpus::TokenizedPost>& train,
                                 const std::vector<corpus::TokenizedPost>& dev, const std::vector<std::string>& classes,
                                 const ClassifierConfig& config, const RltModel& extractor, std::uint64_t seed);

// Same, with gates from an arbitrary provider; `extractor_hash` is recorded.
ClassifierTrainResult train_raft(const std::vector<corpus::TokenizedPost>& train,
                                 const std::vector<corpus::TokenizedPost>& dev, const std::vector<std::string>& classes,
                                 const ClassifierConfig& config, const GateFn& gates, std::string extractor_hash,
                                 std::uint64_t seed);

// Encoder + linear layer, no gating.
ClassifierTrainResult baseline_l(const std::vector<corpus::TokenizedPost>& train,
                                 const std::vector<corpus::TokenizedPost>& dev, const std::vector<std::string>& classes,
                                 ClassifierConfig config, std::uint64_t seed);

}  // namespace raft::adapters
