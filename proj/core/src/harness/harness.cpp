#include "raft/harness/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "raft/corpus/similarity.hpp"
#include "raft/harness/report.hpp"
#include "raft/numerics/checkpoint.hpp"
#include "raft/numerics/errors.hpp"
#include "raft/numerics/rng.hpp"

namespace raft::harness {

using corpus::Split;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    s += t;
    s += '\x1f';
  }
  return s;
}

std::vector<std::string> head_tokens(const std::vector<std::string>& tokens, std::size_t max_len) {
  const auto n = std::min(tokens.size(), max_len);
  return {tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::set<std::string> ids_of(const std::vector<TokenizedPost>& posts) {
  std::set<std::string> ids;
  for (const auto& p : posts) ids.insert(p.id);
  return ids;
}

void check_disjoint(const std::vector<TokenizedPost>& train, const std::set<std::string>& test_ids) {
  for (const auto& p : train) {
    if (test_ids.count(p.id)) throw ContractError("few-shot set contains test post " + p.id);
  }
}

adapters::ClassifierKind kind_of(Variant v) {
  switch (v) {
    case Variant::kRaftSA:
      return adapters::ClassifierKind::kRaftSA;
    case Variant::kRaftCA:
      return adapters::ClassifierKind::kRaftCA;
    default:
      return adapters::ClassifierKind::kBaseline;
  }
}

double raft_test_f1(const std::vector<TokenizedPost>& train, const Dataset& target, ClassifierConfig config,
                    Variant v, const GateFn& gates, const std::string& hash, std::uint64_t seed) {
  config.kind = kind_of(v);
  auto r = adapters::train_raft(train, target.dev, target.manifest.classes, config, gates, hash, seed);
  const auto test_gates = adapters::compute_gates(gates, r.model, target.test);
  return adapters::evaluate_classifier(r.model, target.test, &test_gates);
}

// Suppresses, redraws and softmaxes one post's logits.
multitask::RationaleScores perturb_logits(const std::vector<double>& logits, const std::vector<std::string>& tokens,
                                          double threshold, const AblationConfig& config) {
  Rng rng(derive_seed(config.seed, join_tokens(tokens)));
  multitask::RationaleScores out;
  out.logits = logits;
  for (std::size_t t = 1; t < logits.size(); ++t) {
    out.logits[t] = logits[t] >= threshold ? config.suppressed_logit : rng.uniform(config.random_low, config.random_high);
  }
  out.scores.assign(logits.size(), 0.0);
  out.scores[0] = 1.0;
  if (logits.size() > 1) {
    const double top = *std::max_element(out.logits.begin() + 1, out.logits.end());
    double total = 0;
    for (std::size_t t = 1; t < logits.size(); ++t) total += out.scores[t] = std::exp(out.logits[t] - top);
    for (std::size_t t = 1; t < logits.size(); ++t) out.scores[t] /= total;
  }
  return out;
}

void require_rationale_head(const RltModel& extractor) {
  if (!extractor.config().heads.rationale) throw ContractError("extractor checkpoint has no rationale head");
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) { return Rng::splitmix(seed ^ fnv1a(tag)); }

double median(std::vector<double> xs) {
  if (xs.empty()) throw DataError("median of an empty list");
  std::sort(xs.begin(), xs.end());
  const auto n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::vector<TokenizedPost> Dataset::all() const {
  std::vector<TokenizedPost> out = train;
  out.insert(out.end(), dev.begin(), dev.end());
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

Dataset split_dataset(corpus::DatasetManifest manifest, std::vector<TokenizedPost> posts,
                      const corpus::SplitSpec& spec) {
  if (posts.empty()) throw DataError("dataset " + manifest.dataset_id + " has no posts");
  const bool tagged = std::all_of(posts.begin(), posts.end(), [](const auto& p) { return p.split != Split::kNone; });
  if (!tagged) posts = corpus::make_splits(std::move(posts), spec, manifest.classes);
  Dataset d;
  d.manifest = std::move(manifest);
  for (auto& p : posts) {
    if (p.split == Split::kTrain) d.train.push_back(std::move(p));
    else if (p.split == Split::kDev) d.dev.push_back(std::move(p));
    else d.test.push_back(std::move(p));
  }
  return d;
}

// ---- source selection ------------------------------------------------------

std::string to_string(SourceMode m) { return m == SourceMode::kBestSingle ? "best-single" : "pool-all"; }

SourceMode parse_source_mode(const std::string& s) {
  if (s == "best-single") return SourceMode::kBestSingle;
  if (s == "pool-all") return SourceMode::kPoolAll;
  throw DataError("unknown source mode '" + s + "'");
}

SourceSelection select_best_source(const Dataset& target, const std::vector<Dataset>& candidates, SourceMode mode) {
  if (candidates.empty()) throw ContractError("select_best_source: no candidate datasets");
  const auto target_dist = corpus::term_distribution(target.all());
  SourceSelection out;
  out.mode = mode;
  for (const auto& c : candidates) {
    if (c.id() == target.id()) throw ContractError("target dataset " + target.id() + " is listed as a candidate");
    out.similarities.emplace_back(c.id(), corpus::cosine_similarity(target_dist, corpus::term_distribution(c.all())));
  }
  if (mode == SourceMode::kBestSingle) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
      const auto& [id, sim] = out.similarities[i];
      const auto& [best_id, best_sim] = out.similarities[best];
      if (sim > best_sim || (sim == best_sim && id < best_id)) best = i;
    }
    out.chosen = {candidates[best].id()};
    out.source = candidates[best];
    return out;
  }
  auto& m = out.source.manifest;
  m.dataset_id = "pool";
  for (const auto& c : candidates) {
    out.chosen.push_back(c.id());
    m.dataset_id += (m.dataset_id == "pool" ? ":" : "+") + c.id();
    for (const auto& cls : c.manifest.classes)
      if (std::find(m.classes.begin(), m.classes.end(), cls) == m.classes.end()) m.classes.push_back(cls);
    for (const auto& t : c.manifest.targets)
      if (std::find(m.targets.begin(), m.targets.end(), t) == m.targets.end()) m.targets.push_back(t);
    for (const auto& [cls, n] : c.manifest.counts) m.counts[cls] += n;
    out.source.train.insert(out.source.train.end(), c.train.begin(), c.train.end());
    out.source.dev.insert(out.source.dev.end(), c.dev.begin(), c.dev.end());
    out.source.test.insert(out.source.test.end(), c.test.begin(), c.test.end());
  }
  return out;
}

std::vector<std::vector<double>> similarity_matrix(const std::vector<Dataset>& datasets) {
  std::vector<corpus::TermDistribution> dists;
  for (const auto& d : datasets) dists.push_back(corpus::term_distribution(d.all()));
  std::vector<std::vector<double>> m(datasets.size(), std::vector<double>(datasets.size(), 1.0));
  for (std::size_t i = 0; i < datasets.size(); ++i)
    for (std::size_t j = i + 1; j < datasets.size(); ++j) m[i][j] = m[j][i] = corpus::cosine_similarity(dists[i], dists[j]);
  return m;
}

// ---- source pretraining ----------------------------------------------------

adapters::ClassifierTrainResult pretrain_source(const Dataset& source, encoder::Vocabulary vocab,
                                                ClassifierConfig config, std::uint64_t seed) {
  config.kind = adapters::ClassifierKind::kBaseline;
  Rng seeds(seed);
  Classifier model(config, source.manifest.classes, std::move(vocab), seeds.fork());
  return adapters::fit_classifier(std::move(model), source.train, source.dev, nullptr, nullptr, seeds.fork());
}

adapters::ClassifierTrainResult finetune_target(Classifier pretrained, const std::vector<TokenizedPost>& fewshot,
                                                const std::vector<TokenizedPost>& dev,
                                                const std::vector<std::string>& classes, std::uint64_t seed) {
  Rng seeds(seed);
  pretrained.reset_head(classes, seeds.fork());
  if (fewshot.empty()) return {std::move(pretrained), {}};
  return adapters::fit_classifier(std::move(pretrained), fewshot, dev, nullptr, nullptr, seeds.fork());
}

metrics::MetricsReport pretrain_then_fewshot(const Dataset& source, const std::vector<TokenizedPost>& fewshot,
                                             const Dataset& target, const ClassifierConfig& config,
                                             std::uint64_t seed) {
  check_disjoint(fewshot, ids_of(target.test));
  Rng seeds(seed);
  auto vocab = adapters::build_vocabulary({&source.train, &fewshot}, config.min_count);
  auto pretrained = pretrain_source(source, std::move(vocab), config, seeds.fork()).model;
  const auto model =
      finetune_target(std::move(pretrained), fewshot, target.dev, target.manifest.classes, seeds.fork()).model;
  const std::size_t k = fewshot.size() / target.manifest.classes.size();
  metrics::MetricsReport r;
  r.run_id = to_string(Variant::kBaselineLDom) + "/" + target.id() + "/k" + std::to_string(k);
  r.seed = seed;
  r.k = k;
  r.dataset = target.id();
  r.macro_f1 = adapters::evaluate_classifier(model, target.test);
  r.method = to_string(Variant::kBaselineLDom);
  return r;
}

// ---- few-shot experiment ---------------------------------------------------

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBaselineL:
      return "baseline-l";
    case Variant::kBaselineLDom:
      return "baseline-l-dom";
    case Variant::kRaftSA:
      return "raft-sa";
    case Variant::kRaftCA:
      return "raft-ca";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (auto v : {Variant::kBaselineL, Variant::kBaselineLDom, Variant::kRaftSA, Variant::kRaftCA})
    if (to_string(v) == s) return v;
  throw DataError("unknown model variant '" + s + "'");
}

bool is_raft(Variant v) { return v == Variant::kRaftSA || v == Variant::kRaftCA; }

std::vector<std::vector<TokenizedPost>> draw_fewshot_sets(const Dataset& target, std::size_t k, std::size_t n_sets,
                                                          std::uint64_t seed) {
  return corpus::sample_fewshot(target.train, k, target.manifest.classes, n_sets,
                                derive_seed(seed, "fewshot/k" + std::to_string(k)));
}

std::uint64_t run_seed(std::uint64_t seed, Variant v, std::size_t k, std::size_t set) {
  return derive_seed(seed, to_string(v) + "/k" + std::to_string(k) + "/set" + std::to_string(set));
}

void FewShotPlan::validate() const {
  if (k_values.empty()) throw ContractError("few-shot plan has no k values");
  if (std::find(k_values.begin(), k_values.end(), 0) != k_values.end()) throw ContractError("k must be positive");
  if (n_sets == 0) throw ContractError("few-shot plan needs at least one set");
  if (variants.empty()) throw ContractError("few-shot plan has no variants");
  if (seeds.empty()) throw ContractError("few-shot plan has no seeds");
}

void to_json(nlohmann::json& j, const FewShotPlan& p) {
  std::vector<std::string> variants;
  for (auto v : p.variants) variants.push_back(to_string(v));
  j = {{"k_values", p.k_values}, {"n_sets", p.n_sets}, {"variants", variants}, {"seeds", p.seeds},
       {"classifier", p.classifier}};
}

void from_json(const nlohmann::json& j, FewShotPlan& p) {
  const FewShotPlan d;
  p.k_values = j.value("k_values", d.k_values);
  p.n_sets = j.value("n_sets", d.n_sets);
  p.variants = d.variants;
  if (j.contains("variants")) {
    p.variants.clear();
    for (const auto& s : j.at("variants")) p.variants.push_back(parse_variant(s.get<std::string>()));
  }
  p.seeds = j.value("seeds", d.seeds);
  p.classifier = j.value("classifier", d.classifier);
}

FewShotTable run_fewshot_experiment(const FewShotPlan& plan, const Dataset& target, const Dataset* source,
                                    const RltModel* extractor) {
  plan.validate();
  const auto has = [&](auto pred) { return std::any_of(plan.variants.begin(), plan.variants.end(), pred); };
  if (has([](Variant v) { return is_raft(v); }) && !extractor)
    throw ContractError("RAFT variants need an extractor checkpoint");
  if (has([](Variant v) { return v == Variant::kBaselineLDom; }) && !source)
    throw ContractError("baseline-l-dom needs a source dataset");
  const auto& classes = target.manifest.classes;
  const auto test_ids = ids_of(target.test);

  std::map<std::pair<std::uint64_t, std::size_t>, std::vector<std::vector<TokenizedPost>>> sets;
  for (auto seed : plan.seeds) {
    for (auto k : plan.k_values) {
      auto drawn = draw_fewshot_sets(target, k, plan.n_sets, seed);
      for (const auto& s : drawn) check_disjoint(s, test_ids);
      sets[{seed, k}] = std::move(drawn);
    }
  }

  GateFn gates;
  std::string hash;
  if (extractor) {
    gates = adapters::extractor_gates(*extractor);
    hash = numerics::checkpoint_hash(extractor->to_checkpoint());
  }

  // Source models over source train plus every few-shot set of the seed.
  std::map<std::uint64_t, Classifier> pretrained;
  if (has([](Variant v) { return v == Variant::kBaselineLDom; })) {
    for (auto seed : plan.seeds) {
      std::vector<const std::vector<TokenizedPost>*> vocab_sets = {&source->train};
      for (auto k : plan.k_values)
        for (const auto& s : sets.at({seed, k})) vocab_sets.push_back(&s);
      auto vocab = adapters::build_vocabulary(vocab_sets, plan.classifier.min_count);
      pretrained.emplace(seed,
                         pretrain_source(*source, std::move(vocab), plan.classifier, derive_seed(seed, "dom")).model);
    }
  }

  FewShotTable table;
  for (auto variant : plan.variants) {
    for (auto k : plan.k_values) {
      FewShotCell cell{variant, target.id(), k, {}, 0, 0};
      for (auto seed : plan.seeds) {
        for (std::size_t s = 0; s < plan.n_sets; ++s) {
          const auto& train = sets.at({seed, k})[s];
          const auto model_seed = run_seed(seed, variant, k, s);
          double f1 = 0;
          if (variant == Variant::kBaselineL) {
            auto r = adapters::baseline_l(train, target.dev, classes, plan.classifier, model_seed);
            f1 = adapters::evaluate_classifier(r.model, target.test);
          } else if (variant == Variant::kBaselineLDom) {
            const auto model = finetune_target(pretrained.at(seed), train, target.dev, classes, model_seed).model;
            f1 = adapters::evaluate_classifier(model, target.test);
          } else {
            f1 = raft_test_f1(train, target, plan.classifier, variant, gates, hash, model_seed);
          }
          metrics::MetricsReport r;
          r.run_id = to_string(variant) + "/" + target.id() + "/k" + std::to_string(k) + "/seed" +
                     std::to_string(seed) + "/set" + std::to_string(s);
          r.seed = seed;
          r.k = k;
          r.dataset = target.id();
          r.macro_f1 = f1;
          r.method = to_string(variant);
          table.runs.push_back({variant, k, seed, s, std::move(r)});
          cell.raw.push_back(f1);
        }
      }
      cell.mean = metrics::mean(cell.raw);
      cell.median = median(cell.raw);
      table.cells.push_back(std::move(cell));
    }
  }
  return table;
}

nlohmann::ordered_json fewshot_to_json(const FewShotTable& t) {
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : t.cells) {
    cells.push_back({{"variant", to_string(c.variant)},
                     {"dataset", c.dataset},
                     {"k", c.k},
                     {"n", c.raw.size()},
                     {"mean", c.mean},
                     {"median", c.median},
                     {"raw", c.raw}});
  }
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& r : t.runs) runs.push_back(metrics::report_to_json(r.report));
  return {{"cells", cells}, {"runs", runs}};
}

std::string fewshot_to_text(const FewShotTable& t) {
  TextTable table{{"variant", "dataset", "k", "n", "mean", "median"}, {}};
  for (const auto& c : t.cells) {
    table.rows.push_back({to_string(c.variant), c.dataset, std::to_string(c.k), std::to_string(c.raw.size()),
                          fixed(c.mean), fixed(c.median)});
  }
  return table.render();
}

// ---- random-rationale ablation ---------------------------------------------

void AblationConfig::validate() const {
  if (!(quantile > 0 && quantile <= 1)) throw ContractError("ablation quantile must be in (0, 1]");
  if (!(random_low < random_high)) throw ContractError("ablation random range is empty");
}

void to_json(nlohmann::json& j, const AblationConfig& c) {
  j = {{"quantile", c.quantile},     {"suppressed_logit", c.suppressed_logit},
       {"random_low", c.random_low}, {"random_high", c.random_high},
       {"seed", c.seed},             {"perturb", c.perturb}};
}

void from_json(const nlohmann::json& j, AblationConfig& c) {
  const AblationConfig d;
  c.quantile = j.value("quantile", d.quantile);
  c.suppressed_logit = j.value("suppressed_logit", d.suppressed_logit);
  c.random_low = j.value("random_low", d.random_low);
  c.random_high = j.value("random_high", d.random_high);
  c.seed = j.value("seed", d.seed);
  c.perturb = j.value("perturb", d.perturb);
}

double logit_quantile(const RltModel& extractor, const std::vector<std::vector<std::string>>& posts, double q) {
  require_rationale_head(extractor);
  if (!(q > 0 && q <= 1)) throw ContractError("quantile must be in (0, 1]");
  std::vector<double> values;
  for (const auto& p : extractor.predict(posts)) values.insert(values.end(), p.rationale->logits.begin() + 1, p.rationale->logits.end());
  if (values.empty()) throw DataError("no token logits to take a quantile of");
  std::sort(values.begin(), values.end());
  const auto rank = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size()))));
  return values[std::min(rank, values.size()) - 1];
}

GateFn random_rationale_gates(const RltModel& extractor, double threshold, const AblationConfig& config) {
  config.validate();
  if (!config.perturb) return adapters::extractor_gates(extractor);
  require_rationale_head(extractor);
  return [&extractor, threshold, config](const std::vector<std::vector<std::string>>& posts) {
    const auto preds = extractor.predict(posts);
    std::vector<Gates> out;
    out.reserve(posts.size());
    for (std::size_t i = 0; i < posts.size(); ++i)
      out.push_back(perturb_logits(preds[i].rationale->logits, posts[i], threshold, config).scores);
    return out;
  };
}

std::vector<multitask::RationaleScores> random_rationale_ablation(const RltModel& extractor,
                                                                  const std::vector<std::vector<std::string>>& posts,
                                                                  const AblationConfig& config) {
  config.validate();
  const double threshold = logit_quantile(extractor, posts, config.quantile);
  const auto preds = extractor.predict(posts);
  std::vector<multitask::RationaleScores> out;
  out.reserve(posts.size());
  for (std::size_t i = 0; i < posts.size(); ++i) {
    out.push_back(config.perturb ? perturb_logits(preds[i].rationale->logits, posts[i], threshold, config)
                                 : *preds[i].rationale);
  }
  return out;
}

AblationTable run_ablation_experiment(const FewShotPlan& plan, const AblationConfig& config, const Dataset& target,
                                      const RltModel& extractor) {
  plan.validate();
  config.validate();
  for (auto v : plan.variants)
    if (!is_raft(v)) throw ContractError("ablation applies to RAFT variants only, got " + to_string(v));
  const auto test_ids = ids_of(target.test);

  std::vector<std::vector<std::string>> dataset_tokens;
  for (const auto& p : target.all()) dataset_tokens.push_back(head_tokens(p.tokens, plan.classifier.encoder.max_len));
  AblationTable table;
  table.threshold = logit_quantile(extractor, dataset_tokens, config.quantile);

  const auto plain = adapters::extractor_gates(extractor);
  const auto hash = numerics::checkpoint_hash(extractor.to_checkpoint());
  for (auto variant : plan.variants) {
    for (auto k : plan.k_values) {
      AblationCell cell;
      cell.variant = variant;
      cell.dataset = target.id();
      cell.k = k;
      for (auto seed : plan.seeds) {
        auto seeded = config;
        seeded.seed = derive_seed(config.seed, "ablation/seed" + std::to_string(seed));
        const auto perturbed = random_rationale_gates(extractor, table.threshold, seeded);
        const auto sets = draw_fewshot_sets(target, k, plan.n_sets, seed);
        for (std::size_t s = 0; s < plan.n_sets; ++s) {
          check_disjoint(sets[s], test_ids);
          const auto model_seed = run_seed(seed, variant, k, s);
          const double f_orig = raft_test_f1(sets[s], target, plan.classifier, variant, plain, hash, model_seed);
          const double f_pert = raft_test_f1(sets[s], target, plan.classifier, variant, perturbed, hash, model_seed);
          if (f_orig == 0) throw DataError("unperturbed run scored zero macro-F1; percentage change is undefined");
          cell.original.push_back(f_orig);
          cell.perturbed.push_back(f_pert);
          cell.change.push_back(100.0 * (f_pert - f_orig) / f_orig);
        }
      }
      cell.mean_change = metrics::mean(cell.change);
      cell.median_change = median(cell.change);
      table.cells.push_back(std::move(cell));
    }
  }
  return table;
}

nlohmann::ordered_json ablation_to_json(const AblationTable& t) {
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : t.cells) {
    cells.push_back({{"variant", to_string(c.variant)},
                     {"dataset", c.dataset},
                     {"k", c.k},
                     {"n", c.change.size()},
                     {"mean_change_pct", c.mean_change},
                     {"median_change_pct", c.median_change},
                     {"original", c.original},
                     {"perturbed", c.perturbed},
                     {"change_pct", c.change}});
  }
  return {{"threshold", t.threshold}, {"cells", cells}};
}

std::string ablation_to_text(const AblationTable& t) {
  TextTable table{{"variant", "dataset", "k", "n", "mean_f1", "ablated_f1", "mean_change_%", "median_change_%"}, {}};
  for (const auto& c : t.cells) {
    table.rows.push_back({to_string(c.variant), c.dataset, std::to_string(c.k), std::to_string(c.change.size()),
                          fixed(metrics::mean(c.original)), fixed(metrics::mean(c.perturbed)), fixed(c.mean_change, 2),
                          fixed(c.median_change, 2)});
  }
  return table.render();
}

// ---- loss-weight sweep -----------------------------------------------------

void SweepSpec::validate() const {
  if (learning_rates.empty() || betas.empty() || gammas.empty()) throw ContractError("sweep grid has an empty axis");
  for (double lr : learning_rates)
    if (!(lr > 0)) throw ContractError("sweep learning rates must be positive");
  for (const auto* axis : {&betas, &gammas})
    for (double w : *axis)
      if (w < 0) throw ContractError("sweep loss weights must be nonnegative");
}

void to_json(nlohmann::json& j, const SweepSpec& s) {
  j = {{"learning_rates", s.learning_rates}, {"betas", s.betas}, {"gammas", s.gammas}, {"base", s.base}};
}

void from_json(const nlohmann::json& j, SweepSpec& s) {
  const SweepSpec d;
  s.learning_rates = j.value("learning_rates", d.learning_rates);
  s.betas = j.value("betas", d.betas);
  s.gammas = j.value("gammas", d.gammas);
  s.base = j.value("base", d.base);
}

SweepResult sweep(const SweepSpec& spec, const Dataset& dataset, std::uint64_t seed) {
  spec.validate();
  const bool by_rationale = spec.base.heads.rationale;
  SweepResult out;
  const auto model_seed = derive_seed(seed, "sweep");
  for (double lr : spec.learning_rates) {
    for (double beta : spec.betas) {
      for (double gamma : spec.gammas) {
        auto config = spec.base;
        config.train.adam.lr = lr;
        config.weights = {beta, gamma};
        auto r = multitask::train_rlt(dataset.train, dataset.dev, dataset.manifest.classes, dataset.manifest.targets,
                                      config, model_seed);
        const auto ev = multitask::evaluate_rlt(r.model, dataset.dev);
        out.rows.push_back({lr, beta, gamma, ev.rationale_macro_f1, ev.label_macro_f1, r.fit.best_epoch});
        const auto& b = out.rows[out.best];
        const auto& c = out.rows.back();
        const auto key = [&](const SweepRow& row) {
          return by_rationale ? std::pair{row.dev_rationale_f1, row.dev_label_f1} : std::pair{row.dev_label_f1, 0.0};
        };
        if (out.rows.size() == 1 || key(c) > key(b)) {
          out.best = out.rows.size() - 1;
          out.best_config = config;
        }
      }
    }
  }
  return out;
}

nlohmann::ordered_json sweep_to_json(const SweepResult& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"lr", row.lr},
                    {"beta", row.beta},
                    {"gamma", row.gamma},
                    {"dev_rationale_f1", row.dev_rationale_f1},
                    {"dev_label_f1", row.dev_label_f1},
                    {"best_epoch", row.best_epoch}});
  }
  return {{"best", r.best}, {"best_config", nlohmann::json(r.best_config)}, {"rows", rows}};
}

std::string sweep_to_text(const SweepResult& r) {
  TextTable table{{"lr", "beta", "gamma", "dev_rationale_f1", "dev_label_f1", "best_epoch", "selected"}, {}};
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    char lr[32];
    std::snprintf(lr, sizeof(lr), "%g", row.lr);
    table.rows.push_back({lr, fixed(row.beta, 0), fixed(row.gamma, 0), fixed(row.dev_rationale_f1),
                          fixed(row.dev_label_f1), std::to_string(row.best_epoch), i == r.best ? "*" : ""});
  }
  return table.render();
}

// ---- explainability --------------------------------------------------------

void to_json(nlohmann::json& j, const ExplainabilityConfig& c) {
  std::vector<std::string> methods;
  for (auto m : c.baseline_methods) methods.push_back(explain::to_string(m));
  j = {{"top_k", c.top_k}, {"surrogate", c.surrogate}, {"baseline_methods", methods}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ExplainabilityConfig& c) {
  const ExplainabilityConfig d;
  c.top_k = j.value("top_k", d.top_k);
  c.surrogate = j.value("surrogate", d.surrogate);
  c.baseline_methods = d.baseline_methods;
  if (j.contains("baseline_methods")) {
    c.baseline_methods.clear();
    for (const auto& s : j.at("baseline_methods")) c.baseline_methods.push_back(explain::parse_method(s.get<std::string>()));
  }
  c.seed = j.value("seed", d.seed);
}

explain::BatchPredictor subject_predictor(const ExplainSubject& subject) {
  if (!subject.model) throw ContractError("explain subject " + subject.name + " has no model");
  const Classifier* model = subject.model;
  if (!adapters::is_raft(model->config().kind)) {
    return [model](const std::vector<std::vector<std::string>>& posts) { return model->predict(posts); };
  }
  if (!subject.extractor) throw ContractError("RAFT subject " + subject.name + " needs its extractor");
  const RltModel* extractor = subject.extractor;
  require_rationale_head(*extractor);
  return [model, extractor](const std::vector<std::vector<std::string>>& posts) {
    std::vector<std::vector<std::string>> kept;
    std::vector<std::vector<std::string>> nonempty;
    for (const auto& p : posts) {
      kept.push_back(model->truncate(p));
      if (!kept.back().empty()) nonempty.push_back(kept.back());
    }
    const auto preds = nonempty.empty() ? std::vector<multitask::RltPrediction>{} : extractor->predict(nonempty);
    std::vector<Gates> gates;
    std::size_t next = 0;
    for (const auto& p : kept) gates.push_back(p.empty() ? Gates{1.0} : preds[next++].rationale->scores);
    return model->predict(kept, &gates);
  };
}

std::vector<double> subject_importances(const ExplainSubject& subject, explain::Method method,
                                        const std::vector<std::string>& tokens, const ExplainabilityConfig& config,
                                        std::uint64_t seed) {
  if (method == explain::Method::kExtractor) {
    if (!subject.extractor) throw ContractError("extractor scores need an extractor for " + subject.name);
    auto s = multitask::predict_rationale_scores(*subject.extractor, tokens).scores;
    return explain::minmax_normalize({s.begin() + 1, s.end()});
  }
  const auto predictor = subject_predictor(subject);
  const auto j = adapters::argmax(predictor({tokens}).at(0));
  if (method == explain::Method::kOcclusion) return explain::occlusion_importances(predictor, tokens, j).scores;
  return explain::surrogate_importances(predictor, tokens, j, config.surrogate, seed).scores;
}

std::vector<std::size_t> discrete_rationale(const std::vector<double>& scores, std::size_t top_k) {
  std::vector<std::size_t> out;
  for (auto t : explain::top_k_rationales(scores, top_k))
    if (scores[t] > 0) out.push_back(t);
  return out;
}

PostExplanationScores score_explanation(const std::vector<double>& scores, const metrics::Mask& gold,
                                        const std::vector<std::string>& tokens, const metrics::Predictor& predictor,
                                        std::size_t top_k) {
  if (scores.size() != tokens.size() || gold.size() != tokens.size())
    throw AlignmentError("importance, ground truth and token counts differ");
  PostExplanationScores out;
  out.rationale = discrete_rationale(scores, top_k);
  metrics::Mask pred(tokens.size(), 0);
  for (auto t : out.rationale) pred[t] = 1;
  out.auprc = metrics::auprc(scores, gold);
  out.token_f1 = metrics::token_f1(pred, gold).f1;
  out.iou_f1 = metrics::iou_f1(metrics::mask_to_spans(pred), metrics::mask_to_spans(gold));
  const metrics::FaithfulnessInput input{predictor, tokens, out.rationale, std::nullopt};
  out.comprehensiveness = metrics::comprehensiveness(input);
  out.sufficiency = metrics::sufficiency(input);
  return out;
}

ExplainabilityResult explainability_evaluation(const std::vector<ExplainSubject>& subjects,
                                               const std::vector<TokenizedPost>& posts,
                                               const ExplainabilityConfig& config) {
  if (config.top_k == 0) throw ContractError("top_k must be positive");
  ExplainabilityResult out;
  std::vector<const TokenizedPost*> eligible;
  for (const auto& p : posts) {
    if (!p.rationale) {
      out.warnings.push_back("post " + p.id + " has no ground-truth rationale; skipped");
    } else if (std::find(p.rationale->begin(), p.rationale->end(), 1) == p.rationale->end()) {
      out.warnings.push_back("post " + p.id + " has no rationale token; skipped");
    } else {
      eligible.push_back(&p);
    }
  }
  if (eligible.empty()) throw DataError("no posts with ground-truth rationales to evaluate");

  for (const auto& subject : subjects) {
    const auto predictor = subject_predictor(subject);
    const metrics::Predictor single = [&predictor](const std::vector<std::string>& t) { return predictor({t}).at(0); };
    const auto methods = adapters::is_raft(subject.model->config().kind)
                             ? std::vector<explain::Method>{explain::Method::kExtractor}
                             : config.baseline_methods;
    for (auto method : methods) {
      ExplanationSet set{subject.name, method, {}};
      std::vector<double> auprc, tf1, iou, comp, suff;
      for (const auto* p : eligible) {
        const auto tokens = subject.model->truncate(p->tokens);
        if (tokens.empty()) continue;
        const metrics::Mask gold(p->rationale->begin(), p->rationale->begin() + static_cast<std::ptrdiff_t>(tokens.size()));
        if (std::find(gold.begin(), gold.end(), 1) == gold.end()) {
          out.warnings.push_back("post " + p->id + " has no rationale token within the kept tokens; skipped");
          continue;
        }
        const auto seed = derive_seed(config.seed, subject.name + "/" + p->id);
        auto scores = subject_importances(subject, method, tokens, config, seed);
        auto scored = score_explanation(scores, gold, tokens, single, config.top_k);
        auprc.push_back(scored.auprc);
        tf1.push_back(scored.token_f1);
        iou.push_back(scored.iou_f1);
        comp.push_back(scored.comprehensiveness);
        suff.push_back(scored.sufficiency);
        set.records.push_back({p->id, method, std::move(scores), std::move(scored.rationale)});
      }
      if (auprc.empty()) throw DataError("no evaluable posts for " + subject.name);
      out.rows.push_back({subject.name, method, auprc.size(), metrics::mean(auprc), metrics::mean(tf1),
                          metrics::mean(iou), metrics::mean(comp), metrics::mean(suff)});
      out.explanations.push_back(std::move(set));
    }
  }
  return out;
}

nlohmann::ordered_json explainability_to_json(const ExplainabilityResult& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"model", row.model},
                    {"method", explain::to_string(row.method)},
                    {"n_posts", row.n_posts},
                    {"auprc", row.auprc},
                    {"token_f1", row.token_f1},
                    {"iou_f1", row.iou_f1},
                    {"comprehensiveness", row.comprehensiveness},
                    {"sufficiency", row.sufficiency}});
  }
  return {{"rows", rows}, {"warnings", r.warnings}};
}

std::string explainability_to_text(const ExplainabilityResult& r) {
  TextTable table{{"model", "method", "n", "auprc", "token_f1", "iou_f1", "comp", "suff"}, {}};
  for (const auto& row : r.rows) {
    table.rows.push_back({row.model, explain::to_string(row.method), std::to_string(row.n_posts), fixed(row.auprc),
                          fixed(row.token_f1), fixed(row.iou_f1), fixed(row.comprehensiveness),
                          fixed(row.sufficiency)});
  }
  return table.render();
}

}  // namespace raft::harness
