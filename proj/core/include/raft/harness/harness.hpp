#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "raft/adapters/classifier.hpp"
#include "raft/corpus/post.hpp"
#include "raft/corpus/splits.hpp"
#include "raft/explain/explain.hpp"
#include "raft/metrics/metrics.hpp"
#include "raft/multitask/rlt.hpp"

namespace raft::harness {

using adapters::Classifier;
using adapters::ClassifierConfig;
using adapters::GateFn;
using adapters::Gates;
using corpus::TokenizedPost;
using multitask::RltModel;

// Stable 64-bit seed for a named sub-task of a run.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

double median(std::vector<double> xs);

// A labelled corpus with its three splits.
struct Dataset {
  corpus::DatasetManifest manifest;
  std::vector<TokenizedPost> train;
  std::vector<TokenizedPost> dev;
  std::vector<TokenizedPost> test;

  const std::string& id() const { return manifest.dataset_id; }
  std::vector<TokenizedPost> all() const;
};

// Keeps the posts' split tags when every post has one, otherwise splits
// with `spec`.
Dataset split_dataset(corpus::DatasetManifest manifest, std::vector<TokenizedPost> posts,
                      const corpus::SplitSpec& spec);

// ---- source selection ------------------------------------------------------

enum class SourceMode { kBestSingle, kPoolAll };

std::string to_string(SourceMode m);
SourceMode parse_source_mode(const std::string& s);

struct SourceSelection {
  SourceMode mode = SourceMode::kBestSingle;
  std::vector<std::string> chosen;
  // Cosine similarity of each candidate's term distribution to the target's,
  // in candidate order.
  std::vector<std::pair<std::string, double>> similarities;
  Dataset source;
};

// best-single: highest similarity, ties to the smaller dataset id.
// pool-all: split-wise concatenation of every candidate, classes unioned.
SourceSelection select_best_source(const Dataset& target, const std::vector<Dataset>& candidates, SourceMode mode);

// Pairwise similarity matrix, datasets in input order.
std::vector<std::vector<double>> similarity_matrix(const std::vector<Dataset>& datasets);

// ---- source pretraining ----------------------------------------------------

// Label classifier (baseline kind) trained on the source splits over `vocab`.
adapters::ClassifierTrainResult pretrain_source(const Dataset& source, encoder::Vocabulary vocab,
                                                ClassifierConfig config, std::uint64_t seed);

// Swaps in a fresh head over `classes` and fine-tunes on `fewshot` with
// `dev` early stopping. An empty few-shot set only swaps the head (empty
// log).
adapters::ClassifierTrainResult finetune_target(Classifier pretrained, const std::vector<TokenizedPost>& fewshot,
                                                const std::vector<TokenizedPost>& dev,
                                                const std::vector<std::string>& classes, std::uint64_t seed);

// Pretrains on the source (vocabulary from source train plus the few-shot
// set), fine-tunes on the few-shot set and reports on the target test split.
metrics::MetricsReport pretrain_then_fewshot(const Dataset& source, const std::vector<TokenizedPost>& fewshot,
                                             const Dataset& target, const ClassifierConfig& config,
                                             std::uint64_t seed);

// ---- few-shot experiment ---------------------------------------------------

enum class Variant { kBaselineL, kBaselineLDom, kRaftSA, kRaftCA };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
bool is_raft(Variant v);

// The n_sets few-shot training sets drawn for (seed, k); later sets do not
// change earlier ones.
std::vector<std::vector<TokenizedPost>> draw_fewshot_sets(const Dataset& target, std::size_t k, std::size_t n_sets,
                                                          std::uint64_t seed);

// Model seed of one (variant, k, set) run.
std::uint64_t run_seed(std::uint64_t seed, Variant v, std::size_t k, std::size_t set);

struct FewShotPlan {
  std::vector<std::size_t> k_values = {50, 100, 150, 200};
  std::size_t n_sets = 5;
  std::vector<Variant> variants = {Variant::kBaselineL, Variant::kBaselineLDom, Variant::kRaftSA, Variant::kRaftCA};
  std::vector<std::uint64_t> seeds = {0};
  ClassifierConfig classifier;

  void validate() const;
};

void to_json(nlohmann::json& j, const FewShotPlan& p);
void from_json(const nlohmann::json& j, FewShotPlan& p);

struct FewShotRun {
  Variant variant = Variant::kBaselineL;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t set = 0;
  metrics::MetricsReport report;
};

struct FewShotCell {
  Variant variant = Variant::kBaselineL;
  std::string dataset;
  std::size_t k = 0;
  std::vector<double> raw;  // one per (seed, set), seeds outermost
  double mean = 0;
  double median = 0;
};

struct FewShotTable {
  std::vector<FewShotCell> cells;  // plan order: variant, then k
  std::vector<FewShotRun> runs;
};

// Every (variant, k, seed, set) run is scored on `target.test`. RAFT
// variants need `extractor`, Baseline-L-DOM needs `source`.
FewShotTable run_fewshot_experiment(const FewShotPlan& plan, const Dataset& target, const Dataset* source,
                                    const RltModel* extractor);

nlohmann::ordered_json fewshot_to_json(const FewShotTable& t);
std::string fewshot_to_text(const FewShotTable& t);

// ---- random-rationale ablation ---------------------------------------------

struct AblationConfig {
  double quantile = 0.75;
  double suppressed_logit = -4.0;
  double random_low = -5.0;
  double random_high = 5.0;
  std::uint64_t seed = 0;
  bool perturb = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const AblationConfig& c);
void from_json(const nlohmann::json& j, AblationConfig& c);

// Nearest-rank quantile of the extractor's word-position logits.
double logit_quantile(const RltModel& extractor, const std::vector<std::vector<std::string>>& posts, double q);

// Gate provider that suppresses logits at or above `threshold`, redraws the
// rest uniformly and applies a softmax over word positions (<cls> gets 1).
// Each post's draws come from a stream keyed by its tokens. With
// `perturb` off this is the plain extractor provider.
GateFn random_rationale_gates(const RltModel& extractor, double threshold, const AblationConfig& config);

// Perturbed scores (softmax gates) and logits for `posts`, with the
// threshold taken over the same posts.
std::vector<multitask::RationaleScores> random_rationale_ablation(const RltModel& extractor,
                                                                  const std::vector<std::vector<std::string>>& posts,
                                                                  const AblationConfig& config);

struct AblationCell {
  Variant variant = Variant::kRaftSA;
  std::string dataset;
  std::size_t k = 0;
  std::vector<double> original;   // macro-F1 with extractor gates
  std::vector<double> perturbed;  // macro-F1 with random-rationale gates
  std::vector<double> change;     // percentage change per run
  double mean_change = 0;
  double median_change = 0;
};

struct AblationTable {
  double threshold = 0;
  std::vector<AblationCell> cells;
};

// RAFT variants only. Unperturbed runs use the same seeds as the few-shot
// experiment.
AblationTable run_ablation_experiment(const FewShotPlan& plan, const AblationConfig& config, const Dataset& target,
                                      const RltModel& extractor);

nlohmann::ordered_json ablation_to_json(const AblationTable& t);
std::string ablation_to_text(const AblationTable& t);

// ---- loss-weight sweep -----------------------------------------------------

struct SweepSpec {
  std::vector<double> learning_rates = {1e-3, 3e-3, 5e-3};
  std::vector<double> betas = {1, 2, 5, 10, 100};
  std::vector<double> gammas = {1, 2, 5, 10, 100};
  multitask::RltConfig base;

  void validate() const;
};

void to_json(nlohmann::json& j, const SweepSpec& s);
void from_json(const nlohmann::json& j, SweepSpec& s);

struct SweepRow {
  double lr = 0;
  double beta = 0;
  double gamma = 0;
  double dev_rationale_f1 = 0;
  double dev_label_f1 = 0;
  std::size_t best_epoch = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // lr outermost, then beta, then gamma
  std::size_t best = 0;
  multitask::RltConfig best_config;
};

// Trains one RLT model per grid point; selection uses the dev split only.
SweepResult sweep(const SweepSpec& spec, const Dataset& dataset, std::uint64_t seed);

nlohmann::ordered_json sweep_to_json(const SweepResult& r);
std::string sweep_to_text(const SweepResult& r);

// ---- explainability --------------------------------------------------------

struct ExplainSubject {
  std::string name;
  const Classifier* model = nullptr;
  const RltModel* extractor = nullptr;  // RAFT kinds
};

struct ExplainabilityConfig {
  std::size_t top_k = 5;
  explain::SurrogateConfig surrogate;
  std::vector<explain::Method> baseline_methods = {explain::Method::kOcclusion, explain::Method::kSurrogate};
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const ExplainabilityConfig& c);
void from_json(const nlohmann::json& j, ExplainabilityConfig& c);

struct ExplainabilityRow {
  std::string model;
  explain::Method method = explain::Method::kExtractor;
  std::size_t n_posts = 0;
  double auprc = 0;
  double token_f1 = 0;
  double iou_f1 = 0;
  double comprehensiveness = 0;
  double sufficiency = 0;
};

struct ExplanationSet {
  std::string model;
  explain::Method method = explain::Method::kExtractor;
  std::vector<explain::ExplanationRecord> records;
};

struct ExplainabilityResult {
  std::vector<ExplainabilityRow> rows;
  std::vector<ExplanationSet> explanations;  // same order as rows
  std::vector<std::string> warnings;
};

// Top-k positions among those with positive importance, ascending.
std::vector<std::size_t> discrete_rationale(const std::vector<double>& scores, std::size_t top_k);

// Plausibility and faithfulness of one post's importances against its
// ground truth, using the discrete rationale.
struct PostExplanationScores {
  std::vector<std::size_t> rationale;
  double auprc = 0;
  double token_f1 = 0;
  double iou_f1 = 0;
  double comprehensiveness = 0;
  double sufficiency = 0;
};

PostExplanationScores score_explanation(const std::vector<double>& scores, const metrics::Mask& gold,
                                        const std::vector<std::string>& tokens, const metrics::Predictor& predictor,
                                        std::size_t top_k);

// Class probabilities for one subject; RAFT subjects recompute gates on
// every (possibly reduced) post.
explain::BatchPredictor subject_predictor(const ExplainSubject& subject);

// Word-token importances of a subject under `method`.
std::vector<double> subject_importances(const ExplainSubject& subject, explain::Method method,
                                        const std::vector<std::string>& tokens, const ExplainabilityConfig& config,
                                        std::uint64_t seed);

// RAFT subjects are scored with their extractor's min-max normalised
// scores; baselines with each configured post-hoc method. Posts without a
// positive ground-truth token are skipped with a warning.
ExplainabilityResult explainability_evaluation(const std::vector<ExplainSubject>& subjects,
                                               const std::vector<TokenizedPost>& posts,
                                               const ExplainabilityConfig& config);

nlohmann::ordered_json explainability_to_json(const ExplainabilityResult& r);
std::string explainability_to_text(const ExplainabilityResult& r);

}  // namespace raft::harness
