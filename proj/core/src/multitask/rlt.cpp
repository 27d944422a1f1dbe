#include "raft/multitask/rlt.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "raft/metrics/metrics.hpp"
#include "raft/numerics/errors.hpp"

namespace raft::multitask {

namespace {

constexpr const char* kRationaleHead = "head.rationale";
constexpr const char* kLabelHead = "head.label";
constexpr const char* kTargetHead = "head.target";

template <typename T>
void add_head(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  params.add_normal(name + ".w", {in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  params.add(name + ".b", Tensor<T>::zeros({out}));
}

template <typename T>
Var<T> head(Graph<T>& g, ParameterSet<T>& params, const std::string& name, Var<T> x) {
  return numerics::linear(x, g.param(params.at(name + ".w")), g.param(params.at(name + ".b")));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> softmax_row(const float* row, std::size_t n) {
  std::vector<double> out(row, row + n);
  const double mx = *std::max_element(out.begin(), out.end());
  double z = 0;
  for (auto& x : out) z += (x = std::exp(x - mx));
  for (auto& x : out) x /= z;
  return out;
}

}  // namespace

void HeadConfig::validate() const {
  if (!rationale && !label && !target) throw ContractError("head config enables no head");
}

std::string HeadConfig::name() const {
  std::string s;
  if (rationale) s += 'R';
  if (label) s += 'L';
  if (target) s += 'T';
  return s;
}

void to_json(nlohmann::json& j, const HeadConfig& h) {
  j = {{"rationale", h.rationale}, {"label", h.label}, {"target", h.target}};
}

void from_json(const nlohmann::json& j, HeadConfig& h) {
  h.rationale = j.value("rationale", true);
  h.label = j.value("label", true);
  h.target = j.value("target", true);
  h.validate();
}

TargetVocabulary::TargetVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (const auto& n : names_)
    if (!seen.insert(n).second) throw ContractError("duplicate target name: " + n);
}

std::size_t TargetVocabulary::index(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DataError("unknown target community: " + name);
  return static_cast<std::size_t>(it - names_.begin());
}

void to_json(nlohmann::json& j, const RltConfig& c) {
  j = {{"encoder", c.encoder}, {"heads", c.heads}, {"weights", c.weights}, {"train", c.train},
       {"min_count", c.min_count}};
}

void from_json(const nlohmann::json& j, RltConfig& c) {
  const RltConfig d;
  c.encoder = j.value("encoder", d.encoder);
  c.heads = j.value("heads", d.heads);
  c.weights = j.value("weights", d.weights);
  c.train = j.value("train", d.train);
  c.min_count = j.value("min_count", d.min_count);
}

template <typename T>
void init_rlt_heads(ParameterSet<T>& params, const HeadConfig& heads, std::size_t d_model, std::size_t n_classes,
                    std::size_t n_targets, Rng& rng) {
  heads.validate();
  if (heads.rationale) add_head(params, kRationaleHead, d_model, 1, rng);
  if (heads.label) {
    if (n_classes < 2) throw ContractError("label head needs at least two classes");
    add_head(params, kLabelHead, d_model, n_classes, rng);
  }
  if (heads.target) {
    if (n_targets == 0) throw ContractError("target head needs a nonempty target vocabulary");
    add_head(params, kTargetHead, d_model, n_targets, rng);
  }
}

template <typename T>
RltOutputs<T> rlt_forward(Graph<T>& g, ParameterSet<T>& params, const Encoder<T>& enc, const HeadConfig& heads,
                          const TokenBatch& batch, Rng* dropout_rng) {
  heads.validate();
  for (std::size_t b = 0; b < batch.batch; ++b)
    if (batch.real_length(b) < 2) throw ContractError("rlt_forward: post has no tokens");
  const auto h = enc.forward(g, params, batch, dropout_rng);
  RltOutputs<T> out;
  if (heads.rationale) out.rationale = head(g, params, kRationaleHead, h.lhs);
  if (heads.label) out.label = head(g, params, kLabelHead, h.pooled);
  if (heads.target) out.target = head(g, params, kTargetHead, h.pooled);
  return out;
}

template <typename T>
RltLoss<T> rlt_loss(const RltOutputs<T>& out, const RltTargets<T>& targets, const LossWeights& weights) {
  std::optional<Var<T>> total;
  auto accumulate = [&](Var<T> term, double w) {
    if (w == 0.0) return;
    auto scaled = w == 1.0 ? term : numerics::scale(term, w);
    total = total ? numerics::add(*total, scaled) : scaled;
  };
  double l = 0, r = 0, t = 0;
  if (out.label) {
    auto loss = numerics::cross_entropy(*out.label, std::span<const std::size_t>(targets.labels));
    l = loss.value().item();
    accumulate(loss, 1.0);
  }
  if (out.rationale) {
    auto loss = numerics::bce_with_logits(*out.rationale, std::span<const T>(targets.rationale),
                                          std::span<const T>(targets.rationale_weight));
    r = loss.value().item();
    accumulate(loss, weights.beta);
  }
  if (out.target) {
    auto loss = numerics::bce_with_logits(*out.target, std::span<const T>(targets.target),
                                          std::span<const T>(targets.target_weight));
    t = loss.value().item();
    accumulate(loss, weights.gamma);
  }
  if (!total) {
    // Every active head is weighted out: a zero loss still anchored in the graph.
    const auto& any = out.label ? *out.label : out.rationale ? *out.rationale : *out.target;
    total = numerics::scale(numerics::sum(any), 0.0);
  }
  return {*total, LossBreakdown::assemble(l, r, t, weights)};
}

template <typename T>
RltTargets<T> make_rlt_targets(const std::vector<const corpus::TokenizedPost*>& posts, const TokenBatch& batch,
                               const HeadConfig& heads, const std::vector<std::string>& classes,
                               const TargetVocabulary& targets) {
  if (posts.size() != batch.batch) throw ContractError("make_rlt_targets: batch size mismatch");
  RltTargets<T> out;
  if (heads.label) {
    for (const auto* p : posts) {
      const auto it = std::find(classes.begin(), classes.end(), p->label);
      if (it == classes.end()) throw DataError("post " + p->id + ": unknown label '" + p->label + "'");
      out.labels.push_back(static_cast<std::size_t>(it - classes.begin()));
    }
  }
  if (heads.rationale) {
    out.rationale.assign(batch.batch * batch.length, T(0));
    out.rationale_weight.assign(batch.batch * batch.length, T(0));
    for (std::size_t b = 0; b < batch.batch; ++b) {
      const auto* p = posts[b];
      if (!p->rationale) throw DataError("post " + p->id + " has no ground-truth rationale");
      const auto n = batch.real_length(b);
      for (std::size_t t = 0; t < n; ++t) {
        out.rationale_weight[b * batch.length + t] = T(1);
        if (t > 0) out.rationale[b * batch.length + t] = T((*p->rationale)[t - 1] != 0);
      }
    }
  }
  if (heads.target) {
    out.target.assign(batch.batch * targets.size(), T(0));
    out.target_weight.assign(batch.batch * targets.size(), T(1));
    for (std::size_t b = 0; b < batch.batch; ++b)
      for (const auto& name : posts[b]->targets) out.target[b * targets.size() + targets.index(name)] = T(1);
  }
  return out;
}

RltModel::RltModel(RltConfig config, std::vector<std::string> classes, TargetVocabulary targets, Vocabulary vocab)
    : config_([&] {
        config.encoder.vocab_size = vocab.size();
        return config;
      }()),
      classes_(std::move(classes)),
      targets_(std::move(targets)),
      vocab_(std::move(vocab)),
      encoder_(config_.encoder) {
  config_.heads.validate();
}

RltModel::RltModel(RltConfig config, std::vector<std::string> classes, TargetVocabulary targets, Vocabulary vocab,
                   std::uint64_t seed)
    : RltModel(std::move(config), std::move(classes), std::move(targets), std::move(vocab)) {
  Rng rng(seed);
  encoder_.init(params_, rng);
  init_rlt_heads(params_, config_.heads, config_.encoder.d_model, classes_.size(), targets_.size(), rng);
}

std::vector<std::size_t> RltModel::encode(const std::vector<std::string>& tokens) const {
  return vocab_.encode(tokens, config_.encoder.max_len);
}

TokenBatch RltModel::pack(const std::vector<const corpus::TokenizedPost*>& posts) const {
  std::vector<std::vector<std::size_t>> seqs;
  seqs.reserve(posts.size());
  for (const auto* p : posts) seqs.push_back(encode(p->tokens));
  return TokenBatch::pack(seqs);
}

std::vector<RltPrediction> RltModel::predict(const std::vector<std::vector<std::string>>& posts,
                                             std::size_t batch_size) const {
  std::vector<RltPrediction> out;
  out.reserve(posts.size());
  for (std::size_t start = 0; start < posts.size(); start += batch_size) {
    const auto end = std::min(posts.size(), start + batch_size);
    std::vector<std::vector<std::size_t>> seqs;
    for (std::size_t i = start; i < end; ++i) seqs.push_back(encode(posts[i]));
    const auto batch = TokenBatch::pack(seqs);
    Graph<float> g;
    const auto o = rlt_forward(g, params_, encoder_, config_.heads, batch);
    for (std::size_t b = 0; b < batch.batch; ++b) {
      RltPrediction p;
      if (o.label) p.label_probs = softmax_row(&o.label->value().data[b * classes_.size()], classes_.size());
      if (o.rationale) {
        RationaleScores s;
        const auto n = batch.real_length(b);
        for (std::size_t t = 0; t < n; ++t) {
          const double logit = o.rationale->value().data[b * batch.length + t];
          s.logits.push_back(logit);
          s.scores.push_back(sigmoid(logit));
        }
        p.rationale = std::move(s);
      }
      if (o.target) {
        for (std::size_t k = 0; k < targets_.size(); ++k)
          p.target_probs.push_back(sigmoid(o.target->value().data[b * targets_.size() + k]));
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

ModelCheckpoint RltModel::to_checkpoint() const {
  nlohmann::ordered_json cfg;
  cfg["kind"] = "rlt";
  cfg["config"] = nlohmann::json(config_);
  cfg["classes"] = classes_;
  cfg["targets"] = targets_.names();
  cfg["vocabulary"] = vocab_.tokens();
  ModelCheckpoint ckpt;
  ckpt.config = cfg.dump();
  ckpt.params = ModelCheckpoint::from_parameters(params_);
  return ckpt;
}

RltModel RltModel::from_checkpoint(const ModelCheckpoint& ckpt) {
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(ckpt.config);
    if (cfg.at("kind") != "rlt") throw ContractError("checkpoint is not a rationale-label-target model");
    RltModel m(cfg.at("config").get<RltConfig>(), cfg.at("classes").get<std::vector<std::string>>(),
               TargetVocabulary(cfg.at("targets").get<std::vector<std::string>>()),
               Vocabulary::from_tokens(cfg.at("vocabulary").get<std::vector<std::string>>()));
    m.params_ = ckpt.to_parameters<float>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
}

RationaleScores predict_rationale_scores(const RltModel& model, const std::vector<std::string>& tokens) {
  if (!model.config().heads.rationale) throw ContractError("model has no rationale head");
  return *model.predict({tokens}).front().rationale;
}

corpus::Mask threshold_rationale(const RationaleScores& s, double threshold) {
  corpus::Mask m;
  for (std::size_t t = 1; t < s.scores.size(); ++t) m.push_back(s.scores[t] >= threshold);
  return m;
}

RltEvaluation evaluate_rlt(const RltModel& model, const std::vector<corpus::TokenizedPost>& posts) {
  if (posts.empty()) throw DataError("evaluation set is empty");
  std::vector<std::vector<std::string>> tokens;
  for (const auto& p : posts) tokens.push_back(p.tokens);
  const auto preds = model.predict(tokens);
  RltEvaluation ev;
  ev.n_posts = posts.size();
  const auto& heads = model.config().heads;
  if (heads.label) {
    std::vector<std::string> gold, pred;
    for (std::size_t i = 0; i < posts.size(); ++i) {
      gold.push_back(posts[i].label);
      const auto& pr = preds[i].label_probs;
      pred.push_back(model.classes()[static_cast<std::size_t>(std::max_element(pr.begin(), pr.end()) - pr.begin())]);
    }
    ev.label_macro_f1 = metrics::macro_f1(gold, pred, model.classes());
  }
  if (heads.rationale) {
    std::vector<corpus::Mask> gold, pred;
    for (std::size_t i = 0; i < posts.size(); ++i) {
      if (!posts[i].rationale) continue;
      auto m = threshold_rationale(*preds[i].rationale);
      gold.emplace_back(posts[i].rationale->begin(), posts[i].rationale->begin() + static_cast<std::ptrdiff_t>(m.size()));
      pred.push_back(std::move(m));
    }
    if (!gold.empty()) ev.rationale_macro_f1 = metrics::rationale_macro_f1(pred, gold);
  }
  return ev;
}

RltTrainResult train_rlt(const std::vector<corpus::TokenizedPost>& train, const std::vector<corpus::TokenizedPost>& dev,
                         const std::vector<std::string>& classes, const std::vector<std::string>& target_names,
                         const RltConfig& config, std::uint64_t seed) {
  if (train.empty()) throw DataError("train_rlt: empty training set");
  if (dev.empty()) throw DataError("train_rlt: empty dev set");
  std::vector<std::vector<std::string>> corpus_tokens;
  for (const auto& p : train) corpus_tokens.push_back(p.tokens);
  Rng seeds(seed);
  const auto init_seed = seeds.fork();
  const auto train_seed = seeds.fork();
  RltModel model(config, classes, TargetVocabulary(target_names), Vocabulary::build(corpus_tokens, config.min_count),
                 init_seed);

  const auto& heads = model.config().heads;
  auto step = [&](std::span<const std::size_t> idx, Rng& rng) {
    std::vector<const corpus::TokenizedPost*> posts;
    for (auto i : idx) posts.push_back(&train[i]);
    const auto batch = model.pack(posts);
    const auto targets = make_rlt_targets<float>(posts, batch, heads, model.classes(), model.targets());
    Graph<float> g;
    const auto out = rlt_forward(g, model.params(), model.encoder(), heads, batch, &rng);
    const auto loss = rlt_loss(out, targets, config.weights);
    g.backward(loss.total);
    return loss.parts;
  };
  auto eval = [&] {
    const auto ev = evaluate_rlt(model, dev);
    return heads.rationale ? DevScore{ev.rationale_macro_f1, ev.label_macro_f1} : DevScore{ev.label_macro_f1, 0.0};
  };
  auto result = fit(model.params(), config.train, train.size(), train_seed, step, eval);
  return {std::move(model), std::move(result)};
}

#define RAFT_INSTANTIATE_RLT(T)                                                                                   \
  template void init_rlt_heads(ParameterSet<T>&, const HeadConfig&, std::size_t, std::size_t, std::size_t, Rng&); \
  template RltOutputs<T> rlt_forward(Graph<T>&, ParameterSet<T>&, const Encoder<T>&, const HeadConfig&,         \
                                     const TokenBatch&, Rng*);                                                    \
  template RltLoss<T> rlt_loss(const RltOutputs<T>&, const RltTargets<T>&, const LossWeights&);                  \
  template RltTargets<T> make_rlt_targets(const std::vector<const corpus::TokenizedPost*>&, const TokenBatch&,   \
                                          const HeadConfig&, const std::vector<std::string>&,                     \
                                          const TargetVocabulary&);

RAFT_INSTANTIATE_RLT(float)
RAFT_INSTANTIATE_RLT(double)

}  // namespace raft::multitask
