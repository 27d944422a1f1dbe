#include "raft/adapters/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "raft/metrics/metrics.hpp"
#include "raft/numerics/errors.hpp"

namespace raft::adapters {

namespace {

constexpr const char* kFc = "head.fc";
constexpr const char* kAttn = "head.attn.";

std::vector<double> softmax_row(const float* row, std::size_t n) {
  std::vector<double> out(row, row + n);
  const double mx = *std::max_element(out.begin(), out.end());
  double z = 0;
  for (auto& x : out) z += (x = std::exp(x - mx));
  for (auto& x : out) x /= z;
  return out;
}

}  // namespace

std::string to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::kBaseline:
      return "baseline-l";
    case ClassifierKind::kRaftSA:
      return "raft-sa";
    case ClassifierKind::kRaftCA:
      return "raft-ca";
  }
  return "?";
}

ClassifierKind parse_classifier_kind(const std::string& s) {
  if (s == "baseline-l" || s == "baseline") return ClassifierKind::kBaseline;
  if (s == "raft-sa" || s == "sa") return ClassifierKind::kRaftSA;
  if (s == "raft-ca" || s == "ca") return ClassifierKind::kRaftCA;
  throw ContractError("unknown classifier kind: " + s);
}

void to_json(nlohmann::json& j, const ClassifierConfig& c) {
  j = {{"kind", to_string(c.kind)},
       {"encoder", c.encoder},
       {"attention_heads", c.attention_heads},
       {"gate_cls_override", c.gate_cls_override},
       {"train", c.train},
       {"min_count", c.min_count}};
}

void from_json(const nlohmann::json& j, ClassifierConfig& c) {
  const ClassifierConfig d;
  c.kind = parse_classifier_kind(j.value("kind", to_string(d.kind)));
  c.encoder = j.value("encoder", d.encoder);
  c.attention_heads = j.value("attention_heads", d.attention_heads);
  c.gate_cls_override = j.value("gate_cls_override", d.gate_cls_override);
  c.train = j.value("train", d.train);
  c.min_count = j.value("min_count", d.min_count);
}

GateFn extractor_gates(const RltModel& extractor) {
  if (!extractor.config().heads.rationale) throw ContractError("extractor checkpoint has no rationale head");
  return [&extractor](const std::vector<std::vector<std::string>>& posts) {
    std::vector<Gates> out;
    out.reserve(posts.size());
    for (auto& p : extractor.predict(posts)) out.push_back(std::move(p.rationale->scores));
    return out;
  };
}

template <typename T>
void init_classifier_head(ParameterSet<T>& params, const ClassifierConfig& config, std::size_t n_classes, Rng& rng) {
  if (n_classes < 2) throw ContractError("classifier needs at least two classes");
  const auto d = config.encoder.d_model;
  if (is_raft(config.kind)) {
    if (config.attention_heads == 0 || d % config.attention_heads != 0)
      throw ContractError("attention heads must divide d_model");
    encoder::init_attention(params, kAttn, d, rng);
  }
  params.add_normal(std::string(kFc) + ".w", {d, n_classes}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  params.add(std::string(kFc) + ".b", Tensor<T>::zeros({n_classes}));
}

template <typename T>
std::vector<T> pack_gates(const std::vector<const Gates*>& gates, const TokenBatch& batch, bool cls_override) {
  if (gates.size() != batch.batch) throw AlignmentError("one gate vector per post required");
  std::vector<T> out(batch.batch * batch.length, T(0));
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const auto n = batch.real_length(b);
    if (gates[b]->size() != n) {
      throw AlignmentError("gate length " + std::to_string(gates[b]->size()) + " does not match " +
                           std::to_string(n) + " encoded positions");
    }
    for (std::size_t t = 0; t < n; ++t) out[b * batch.length + t] = static_cast<T>((*gates[b])[t]);
    if (cls_override) out[b * batch.length] = T(1);
  }
  return out;
}

template <typename T>
Var<T> gate_states(Var<T> lhs, const std::vector<T>& gates) {
  auto& g = lhs.graph();
  return numerics::scale_rows(lhs, g.constant(Tensor<T>({gates.size()}, gates)));
}

template <typename T>
Var<T> classifier_forward(Graph<T>& g, ParameterSet<T>& params, const Encoder<T>& enc, const ClassifierConfig& config,
                          const TokenBatch& batch, const std::vector<T>* gates, Rng* dropout_rng) {
  const auto h = enc.forward(g, params, batch, dropout_rng);
  const auto fc = [&](Var<T> x) {
    return numerics::linear(x, g.param(params.at(std::string(kFc) + ".w")), g.param(params.at(std::string(kFc) + ".b")));
  };
  if (config.kind == ClassifierKind::kBaseline) return fc(h.pooled);
  auto states = gates ? gate_states(h.lhs, *gates) : h.lhs;
  const std::span<const std::uint8_t> mask(batch.mask);
  if (config.kind == ClassifierKind::kRaftSA) {
    auto a = encoder::multi_head_attention(g, params, kAttn, states, states, states, mask, batch.batch,
                                           config.attention_heads);
    return fc(numerics::masked_mean_rows(a, mask, batch.batch));
  }
  auto a = encoder::multi_head_attention(g, params, kAttn, h.pooled, states, states, mask, batch.batch,
                                         config.attention_heads);
  return fc(a);
}

Classifier::Classifier(ClassifierConfig config, std::vector<std::string> classes, Vocabulary vocab, std::uint64_t seed)
    : config_([&] {
        config.encoder.vocab_size = vocab.size();
        return config;
      }()),
      classes_(std::move(classes)),
      vocab_(std::move(vocab)),
      encoder_(config_.encoder) {
  Rng rng(seed);
  encoder_.init(params_, rng);
  init_classifier_head(params_, config_, classes_.size(), rng);
}

std::vector<std::string> Classifier::truncate(const std::vector<std::string>& tokens) const {
  const auto n = std::min(tokens.size(), config_.encoder.max_len);
  return {tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(n)};
}

TokenBatch Classifier::pack(const std::vector<const std::vector<std::string>*>& posts) const {
  std::vector<std::vector<std::size_t>> seqs;
  seqs.reserve(posts.size());
  for (const auto* p : posts) seqs.push_back(vocab_.encode(*p, config_.encoder.max_len));
  return TokenBatch::pack(seqs);
}

void Classifier::reset_head(std::vector<std::string> classes, std::uint64_t seed) {
  params_.erase_prefix(std::string(kFc) + ".");
  classes_ = std::move(classes);
  Rng rng(seed);
  const auto d = config_.encoder.d_model;
  params_.add_normal(std::string(kFc) + ".w", {d, classes_.size()}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  params_.add(std::string(kFc) + ".b", Tensor<float>::zeros({classes_.size()}));
}

std::vector<std::vector<double>> Classifier::predict(const std::vector<std::vector<std::string>>& posts,
                                                     const std::vector<Gates>* gates, std::size_t batch_size) const {
  if (is_raft(config_.kind) && gates && gates->size() != posts.size()) {
    throw AlignmentError("one gate vector per post required");
  }
  std::vector<std::vector<double>> out;
  out.reserve(posts.size());
  for (std::size_t start = 0; start < posts.size(); start += batch_size) {
    const auto end = std::min(posts.size(), start + batch_size);
    std::vector<const std::vector<std::string>*> chunk;
    std::vector<const Gates*> chunk_gates;
    for (std::size_t i = start; i < end; ++i) {
      chunk.push_back(&posts[i]);
      if (gates) chunk_gates.push_back(&(*gates)[i]);
    }
    const auto batch = pack(chunk);
    std::vector<float> packed;
    const bool gated = is_raft(config_.kind) && gates;
    if (gated) packed = pack_gates<float>(chunk_gates, batch, config_.gate_cls_override);
    Graph<float> g;
    const auto logits = classifier_forward(g, params_, encoder_, config_, batch, gated ? &packed : nullptr);
    for (std::size_t b = 0; b < batch.batch; ++b)
      out.push_back(softmax_row(&logits.value().data[b * classes_.size()], classes_.size()));
  }
  return out;
}

ModelCheckpoint Classifier::to_checkpoint() const {
  nlohmann::ordered_json cfg;
  cfg["kind"] = "classifier";
  cfg["config"] = nlohmann::json(config_);
  cfg["classes"] = classes_;
  cfg["vocabulary"] = vocab_.tokens();
  if (is_raft(config_.kind)) cfg["extractor_hash"] = extractor_hash_;
  ModelCheckpoint ckpt;
  ckpt.config = cfg.dump();
  ckpt.params = ModelCheckpoint::from_parameters(params_);
  return ckpt;
}

Classifier Classifier::from_checkpoint(const ModelCheckpoint& ckpt) {
  try {
    const auto cfg = nlohmann::json::parse(ckpt.config);
    if (cfg.at("kind") != "classifier") throw ContractError("checkpoint is not a classifier");
    Classifier c(cfg.at("config").get<ClassifierConfig>(), cfg.at("classes").get<std::vector<std::string>>(),
                 Vocabulary::from_tokens(cfg.at("vocabulary").get<std::vector<std::string>>()), 0);
    c.params_ = ckpt.to_parameters<float>();
    c.extractor_hash_ = cfg.value("extractor_hash", "");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
}

std::size_t argmax(const std::vector<double>& probs) {
  if (probs.empty()) throw ContractError("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

double evaluate_classifier(const Classifier& model, const std::vector<corpus::TokenizedPost>& posts,
                           const std::vector<Gates>* gates) {
  if (posts.empty()) throw DataError("evaluation set is empty");
  std::vector<std::vector<std::string>> tokens;
  std::vector<std::string> gold, pred;
  for (const auto& p : posts) {
    tokens.push_back(p.tokens);
    gold.push_back(p.label);
  }
  for (const auto& probs : model.predict(tokens, gates)) pred.push_back(model.classes()[argmax(probs)]);
  return metrics::macro_f1(gold, pred, model.classes());
}

std::vector<Gates> compute_gates(const GateFn& fn, const Classifier& model,
                                 const std::vector<corpus::TokenizedPost>& posts) {
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(posts.size());
  for (const auto& p : posts) tokens.push_back(model.truncate(p.tokens));
  auto gates = fn(tokens);
  if (gates.size() != posts.size()) throw AlignmentError("gate provider returned the wrong number of posts");
  for (std::size_t i = 0; i < posts.size(); ++i) {
    if (gates[i].size() != tokens[i].size() + 1) {
      throw AlignmentError("post " + posts[i].id + ": " + std::to_string(gates[i].size()) + " gate values for " +
                           std::to_string(tokens[i].size()) + " tokens plus <cls>");
    }
  }
  return gates;
}

ClassifierTrainResult fit_classifier(Classifier model, const std::vector<corpus::TokenizedPost>& train,
                                     const std::vector<corpus::TokenizedPost>& dev,
                                     const std::vector<Gates>* train_gates, const std::vector<Gates>* dev_gates,
                                     std::uint64_t seed) {
  if (train.empty()) throw DataError("classifier training set is empty");
  if (dev.empty()) throw DataError("classifier dev set is empty");
  const bool raft = is_raft(model.config().kind);
  if (raft && (!train_gates || !dev_gates)) throw ContractError("RAFT training needs gates for train and dev");
  if (raft && (train_gates->size() != train.size() || dev_gates->size() != dev.size()))
    throw AlignmentError("one gate vector per post required");

  std::vector<std::size_t> labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& cls = model.classes();
    const auto it = std::find(cls.begin(), cls.end(), train[i].label);
    if (it == cls.end()) throw DataError("post " + train[i].id + ": unknown label '" + train[i].label + "'");
    labels[i] = static_cast<std::size_t>(it - cls.begin());
  }

  auto step = [&](std::span<const std::size_t> idx, Rng& rng) {
    std::vector<const std::vector<std::string>*> posts;
    std::vector<const Gates*> gates;
    std::vector<std::size_t> y;
    for (auto i : idx) {
      posts.push_back(&train[i].tokens);
      if (raft) gates.push_back(&(*train_gates)[i]);
      y.push_back(labels[i]);
    }
    const auto batch = model.pack(posts);
    std::vector<float> packed;
    if (raft) packed = pack_gates<float>(gates, batch, model.config().gate_cls_override);
    Graph<float> g;
    auto logits = classifier_forward(g, model.params(), model.encoder(), model.config(), batch,
                                     raft ? &packed : nullptr, &rng);
    auto loss = numerics::cross_entropy(logits, std::span<const std::size_t>(y));
    g.backward(loss);
    const double l = loss.value().item();
    return multitask::LossBreakdown{l, 0, 0, l};
  };
  auto eval = [&] { return multitask::DevScore{evaluate_classifier(model, dev, dev_gates), 0.0}; };
  Rng seeds(seed);
  auto result = multitask::fit(model.params(), model.config().train, train.size(), seeds.fork(), step, eval);
  return {std::move(model), std::move(result)};
}

Vocabulary build_vocabulary(const std::vector<const std::vector<corpus::TokenizedPost>*>& sets, std::size_t min_count) {
  std::vector<std::vector<std::string>> tokens;
  for (const auto* set : sets)
    for (const auto& p : *set) tokens.push_back(p.tokens);
  return Vocabulary::build(tokens, min_count);
}

ClassifierTrainResult train_raft(const std::vector<corpus::TokenizedPost>& train,
                                 const std::vector<corpus::TokenizedPost>& dev, const std::vector<std::string>& classes,
                                 const ClassifierConfig& config, const GateFn& gates, std::string extractor_hash,
                                 std::uint64_t seed) {
  if (!is_raft(config.kind)) throw ContractError("train_raft needs a RAFT classifier kind");
  if (train.empty()) throw DataError("train_raft: empty training set");
  Rng seeds(seed);
  Classifier model(config, classes, build_vocabulary({&train}, config.min_count), seeds.fork());
  model.set_extractor_hash(std::move(extractor_hash));
  const auto train_gates = compute_gates(gates, model, train);
  const auto dev_gates = compute_gates(gates, model, dev);
  return fit_classifier(std::move(model), train, dev, &train_gates, &dev_gates, seeds.fork());
}

ClassifierTrainResult train_raft(const std::vector<corpus::TokenizedPost>& train,
                                 const std::vector<corpus::TokenizedPost>& dev, const std::vector<std::string>& classes,
                                 const ClassifierConfig& config, const RltModel& extractor, std::uint64_t seed) {
  return train_raft(train, dev, classes, config, extractor_gates(extractor),
                    numerics::checkpoint_hash(extractor.to_checkpoint()), seed);
}

ClassifierTrainResult baseline_l(const std::vector<corpus::TokenizedPost>& train,
                                 const std::vector<corpus::TokenizedPost>& dev, const std::vector<std::string>& classes,
                                 ClassifierConfig config, std::uint64_t seed) {
  if (train.empty()) throw DataError("baseline_l: empty training set");
  config.kind = ClassifierKind::kBaseline;
  Rng seeds(seed);
  Classifier model(config, classes, build_vocabulary({&train}, config.min_count), seeds.fork());
  return fit_classifier(std::move(model), train, dev, nullptr, nullptr, seeds.fork());
}

#define RAFT_INSTANTIATE_CLASSIFIER(T)                                                                               \
  template void init_classifier_head(ParameterSet<T>&, const ClassifierConfig&, std::size_t, Rng&);                 \
  template std::vector<T> pack_gates(const std::vector<const Gates*>&, const TokenBatch&, bool);                    \
  template Var<T> gate_states(Var<T>, const std::vector<T>&);                                                      \
  template Var<T> classifier_forward(Graph<T>&, ParameterSet<T>&, const Encoder<T>&, const ClassifierConfig&,      \
                                     const TokenBatch&, const std::vector<T>*, Rng*);

RAFT_INSTANTIATE_CLASSIFIER(float)
RAFT_INSTANTIATE_CLASSIFIER(double)

}  // namespace raft::adapters
