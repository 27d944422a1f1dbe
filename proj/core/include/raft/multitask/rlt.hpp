#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "raft/corpus/post.hpp"
#include "raft/encoder/encoder.hpp"
#include "raft/encoder/vocabulary.hpp"
#include "raft/multitask/training.hpp"
#include "raft/numerics/checkpoint.hpp"

namespace raft::multitask {

using encoder::Encoder;
using encoder::EncoderConfig;
using encoder::TokenBatch;
using encoder::Vocabulary;
using numerics::Graph;
using numerics::ModelCheckpoint;
using numerics::ParameterSet;
using numerics::Tensor;
using numerics::Var;

// Which of the rationale (R), label (L) and target (T) heads are active.
struct HeadConfig {
  bool rationale = true;
  bool label = true;
  bool target = true;

  static HeadConfig rlt() { return {true, true, true}; }
  static HeadConfig rationale_only() { return {true, false, false}; }
  static HeadConfig label_only() { return {false, true, false}; }
  static HeadConfig rationale_label() { return {true, true, false}; }

  void validate() const;
  std::string name() const;  // e.g. "RLT", "R", "L", "RL"
  bool operator==(const HeadConfig&) const = default;
};

void to_json(nlohmann::json& j, const HeadConfig& h);
void from_json(const nlohmann::json& j, HeadConfig& h);

// Target-community names with stable indices.
class TargetVocabulary {
 public:
  TargetVocabulary() = default;
  explicit TargetVocabulary(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  // DataError for a name outside the vocabulary.
  std::size_t index(const std::string& name) const;

 private:
  std::vector<std::string> names_;
};

// Sigmoid scores and raw logits per position; index 0 is <cls>.
struct RationaleScores {
  std::vector<double> scores;
  std::vector<double> logits;
};

struct RltConfig {
  EncoderConfig encoder;  // vocab_size is set from the training vocabulary
  HeadConfig heads;
  LossWeights weights;
  TrainSettings train;
  std::size_t min_count = 1;
};

void to_json(nlohmann::json& j, const RltConfig& c);
void from_json(const nlohmann::json& j, RltConfig& c);

template <typename T>
struct RltOutputs {
  std::optional<Var<T>> rationale;  // [batch*length x 1]
  std::optional<Var<T>> label;      // [batch x classes]
  std::optional<Var<T>> target;     // [batch x targets]
};

// Supervision for one packed batch. Rationale weights are 1 on real positions
// (including <cls>, whose label is 0) and 0 on padding.
template <typename T>
struct RltTargets {
  std::vector<std::size_t> labels;
  std::vector<T> rationale;
  std::vector<T> rationale_weight;
  std::vector<T> target;  // [batch x targets] multi-hot
  std::vector<T> target_weight;
};

template <typename T>
struct RltLoss {
  Var<T> total;
  LossBreakdown parts;
};

template <typename T>
void init_rlt_heads(ParameterSet<T>& params, const HeadConfig& heads, std::size_t d_model, std::size_t n_classes,
                    std::size_t n_targets, Rng& rng);

template <typename T>
RltOutputs<T> rlt_forward(Graph<T>& g, ParameterSet<T>& params, const Encoder<T>& enc, const HeadConfig& heads,
                          const TokenBatch& batch, Rng* dropout_rng = nullptr);

// Weighted joint objective; disabled heads contribute 0 and need no targets.
template <typename T>
RltLoss<T> rlt_loss(const RltOutputs<T>& out, const RltTargets<T>& targets, const LossWeights& weights);

// Throws DataError when the R head is on and a post lacks a rationale mask,
// or a label/target is outside the model's vocabularies.
template <typename T>
RltTargets<T> make_rlt_targets(const std::vector<const corpus::TokenizedPost*>& posts, const TokenBatch& batch,
                               const HeadConfig& heads, const std::vector<std::string>& classes,
                               const TargetVocabulary& targets);

struct RltPrediction {
  std::vector<double> label_probs;
  std::optional<RationaleScores> rationale;
  std::vector<double> target_probs;
};

// Trained (or freshly initialised) rationale-label-target model.
class RltModel {
 public:
  RltModel(RltConfig config, std::vector<std::string> classes, TargetVocabulary targets, Vocabulary vocab,
           std::uint64_t seed);

  const RltConfig& config() const { return config_; }
  const std::vector<std::string>& classes() const { return classes_; }
  const TargetVocabulary& targets() const { return targets_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const Encoder<float>& encoder() const { return encoder_; }
  ParameterSet<float>& params() { return params_; }
  const ParameterSet<float>& params() const { return params_; }

  // <cls> plus the first max_len word ids.
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
  TokenBatch pack(const std::vector<const corpus::TokenizedPost*>& posts) const;

  std::vector<RltPrediction> predict(const std::vector<std::vector<std::string>>& posts,
                                     std::size_t batch_size = 64) const;

  ModelCheckpoint to_checkpoint() const;
  static RltModel from_checkpoint(const ModelCheckpoint& ckpt);

 private:
  RltModel(RltConfig config, std::vector<std::string> classes, TargetVocabulary targets, Vocabulary vocab);

  RltConfig config_;
  std::vector<std::string> classes_;
  TargetVocabulary targets_;
  Vocabulary vocab_;
  Encoder<float> encoder_;
  mutable ParameterSet<float> params_;
};

// Sigmoid of rationale logits for one post (length = tokens kept + 1).
// ContractError if the model has no R head.
RationaleScores predict_rationale_scores(const RltModel& model, const std::vector<std::string>& tokens);

// 0/1 per word token (no <cls>) at score >= 0.5.
corpus::Mask threshold_rationale(const RationaleScores& s, double threshold = 0.5);

// Dev/test evaluation of an RLT model.
struct RltEvaluation {
  double label_macro_f1 = 0;
  double rationale_macro_f1 = 0;
  std::size_t n_posts = 0;
};

RltEvaluation evaluate_rlt(const RltModel& model, const std::vector<corpus::TokenizedPost>& posts);

struct RltTrainResult {
  RltModel model;
  FitResult fit;
};

// Builds the vocabulary from the training tokens, trains with early stopping
// on dev (rationale macro-F1 with R on, else label macro-F1) and returns the
// dev-best model.
RltTrainResult train_rlt(const std::vector<corpus::TokenizedPost>& train, const std::vector<corpus::TokenizedPost>& dev,
                         const std::vector<std::string>& classes, const std::vector<std::string>& target_names,
                         const RltConfig& config, std::uint64_t seed);

}  // namespace raft::multitask
