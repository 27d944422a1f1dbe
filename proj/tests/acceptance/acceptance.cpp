// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
// status if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "raft/adapters/classifier.hpp"
#include "raft/cli/commands.hpp"
#include "raft/corpus/splits.hpp"
#include "raft/corpus/synthetic.hpp"
#include "raft/explain/explain.hpp"
#include "raft/harness/harness.hpp"
#include "raft/harness/report.hpp"
#include "raft/metrics/metrics.hpp"
#include "raft/multitask/rlt.hpp"
#include "raft/numerics/checkpoint.hpp"
#include "support/gradcheck.hpp"
#include "support/metric_oracles.hpp"

namespace fs = std::filesystem;
using namespace raft;
using harness::Dataset;
using harness::median;
using harness::Variant;
using numerics::Graph;
using numerics::ParameterSet;
using numerics::Shape;
using numerics::Var;
using testing::check_gradients;
using testing::random_tensor;
using testing::weighted_sum;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) { return harness::fixed(v, precision); }

std::string join(const std::vector<double>& xs) {
  std::string s = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? " " : "") + fmt(xs[i]);
  return s + "]";
}

constexpr std::size_t kSeeds = 5;
constexpr double kGradTol = 1e-4;

// ---------------------------------------------------------------- gradients

struct GradLedger {
  std::size_t checks = 0;
  double worst = 0;
  std::string worst_name;
  std::vector<std::string> failures;

  void record(const std::string& name, const testing::GradCheckResult& r) {
    ++checks;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_name = name + ":" + r.worst_parameter;
    }
    if (!(r.max_relative_error <= kGradTol)) failures.push_back(name + ":" + r.worst_parameter);
  }
};

encoder::EncoderConfig grad_encoder(std::size_t vocab) {
  encoder::EncoderConfig c;
  c.vocab_size = vocab;
  c.max_len = 8;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_ff = 12;
  c.dropout_rate = 0.0;
  return c;
}

const std::vector<std::vector<std::vector<std::size_t>>> kBatches = {
    {{encoder::kClsId, 3, 4}},
    {{encoder::kClsId, 5, 6, 7, 8}, {encoder::kClsId, 9}},
    {{encoder::kClsId, 10, 11}, {encoder::kClsId, 12, 13, 14}, {encoder::kClsId, 15, 3, 4, 5}}};

void primitive_gradients(GradLedger& ledger) {
  using namespace numerics;
  Rng rng(2024);
  const std::vector<Shape> shapes = {{1, 1}, {3, 4}, {5, 2}};
  for (const auto& shape : shapes) {
    const std::size_t m = shape[0], n = shape[1];
    const std::string tag = "[" + shape_string(shape) + "]";
    auto unary = [&](const std::string& name, auto op, double lo, double hi) {
      ParameterSet<double> ps;
      ps.add("x", random_tensor(shape, rng, lo, hi));
      ledger.record(name + tag, check_gradients(ps, [&](Graph<double>& g, ParameterSet<double>& p) {
                      return weighted_sum(op(g.param(p.at("x"))));
                    }));
    };
    unary("sigmoid", [](Var<double> x) { return sigmoid(x); }, -3, 3);
    unary("tanh", [](Var<double> x) { return tanh(x); }, -3, 3);
    unary("relu", [](Var<double> x) { return relu(x); }, 0.1, 2);
    unary("gelu", [](Var<double> x) { return gelu(x); }, -3, 3);
    unary("softmax-rows", [](Var<double> x) { return softmax(x, 1); }, -2, 2);
    unary("softmax-cols", [](Var<double> x) { return softmax(x, 0); }, -2, 2);
    unary("transpose", [](Var<double> x) { return transpose(x); }, -2, 2);
    unary("scale", [](Var<double> x) { return scale(x, -1.7); }, -2, 2);
    unary("sum", [](Var<double> x) { return sum(x); }, -2, 2);
    unary("mean", [](Var<double> x) { return mean(x); }, -2, 2);
    unary("reshape", [n, m](Var<double> x) { return reshape(x, {n, m}); }, -2, 2);
    unary("dropout", [](Var<double> x) {
      Rng r(11);
      return dropout(x, 0.3, r);
    }, -2, 2);

    auto binary = [&](const std::string& name, Shape sa, Shape sb, auto op) {
      ParameterSet<double> ps;
      ps.add("a", random_tensor(sa, rng));
      ps.add("b", random_tensor(sb, rng));
      ledger.record(name + tag, check_gradients(ps, [&](Graph<double>& g, ParameterSet<double>& p) {
                      return weighted_sum(op(g.param(p.at("a")), g.param(p.at("b"))));
                    }));
    };
    binary("matmul", shape, {n, m + 1}, [](auto a, auto b) { return matmul(a, b); });
    binary("add", shape, shape, [](auto a, auto b) { return add(a, b); });
    binary("sub", shape, shape, [](auto a, auto b) { return sub(a, b); });
    binary("mul", shape, shape, [](auto a, auto b) { return mul(a, b); });
    binary("add_row", shape, {n}, [](auto a, auto b) { return add_row(a, b); });
    binary("scale_rows", shape, {m}, [](auto a, auto b) { return scale_rows(a, b); });
    const auto bias = random_tensor({3}, rng);
    binary("linear", shape, {n, 3}, [&bias](auto a, auto b) { return linear(a, b, a.graph().constant(bias)); });
    {
      ParameterSet<double> ps;
      ps.add("x", random_tensor(shape, rng));
      ps.add("gain", random_tensor({n}, rng, 0.5, 1.5));
      ps.add("bias", random_tensor({n}, rng));
      ledger.record("layer_norm" + tag, check_gradients(ps, [](Graph<double>& g, ParameterSet<double>& p) {
                      return weighted_sum(layer_norm(g.param(p.at("x")), g.param(p.at("gain")), g.param(p.at("bias"))));
                    }));
    }
    {
      ParameterSet<double> ps;
      ps.add("table", random_tensor(shape, rng));
      const std::vector<std::size_t> idx = {0, m - 1, 0, m / 2};
      ledger.record("gather_rows" + tag, check_gradients(ps, [&idx](Graph<double>& g, ParameterSet<double>& p) {
                      return weighted_sum(gather_rows(g.param(p.at("table")), std::span<const std::size_t>(idx)));
                    }));
    }
    {
      ParameterSet<double> ps;
      ps.add("x", random_tensor({2 * m, n}, rng));
      std::vector<std::uint8_t> mask(2 * m, 1);
      mask[m - 1] = 0;
      ledger.record("masked_mean_rows" + tag, check_gradients(ps, [&mask](Graph<double>& g, ParameterSet<double>& p) {
                      return weighted_sum(masked_mean_rows(g.param(p.at("x")), std::span<const std::uint8_t>(mask), 2));
                    }));
    }
    {
      ParameterSet<double> ps;
      ps.add("z", random_tensor(shape, rng, -3, 3));
      std::vector<std::size_t> labels(m);
      for (std::size_t i = 0; i < m; ++i) labels[i] = i % n;
      ledger.record("cross_entropy" + tag, check_gradients(ps, [&labels](Graph<double>& g, ParameterSet<double>& p) {
                      return cross_entropy(g.param(p.at("z")), std::span<const std::size_t>(labels));
                    }));
    }
    {
      ParameterSet<double> ps;
      ps.add("z", random_tensor(shape, rng, -3, 3));
      std::vector<double> y(m * n), w(m * n);
      for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = static_cast<double>(i % 2);
        w[i] = i % 5 == 4 ? 0.0 : 1.0;
      }
      ledger.record("bce_with_logits" + tag, check_gradients(ps, [&](Graph<double>& g, ParameterSet<double>& p) {
                      return bce_with_logits(g.param(p.at("z")), std::span<const double>(y), std::span<const double>(w));
                    }));
    }
    {
      ParameterSet<double> ps;
      ps.add("q", random_tensor({2 * m, 4}, rng));
      ps.add("k", random_tensor({2 * m, 4}, rng));
      ps.add("v", random_tensor({2 * m, 4}, rng));
      std::vector<std::uint8_t> mask(2 * m, 1);
      mask[2 * m - 1] = 0;
      ledger.record("attention" + tag, check_gradients(ps, [&mask](Graph<double>& g, ParameterSet<double>& p) {
                      return weighted_sum(attention(g.param(p.at("q")), g.param(p.at("k")), g.param(p.at("v")),
                                                    std::span<const std::uint8_t>(mask), 2, 2));
                    }));
    }
    {
      ParameterSet<double> ps;
      ps.add("lhs", random_tensor(shape, rng));
      std::vector<double> gates(m);
      for (auto& x : gates) x = rng.uniform();
      ledger.record("gate_states" + tag, check_gradients(ps, [&gates](Graph<double>& g, ParameterSet<double>& p) {
                      return weighted_sum(adapters::gate_states(g.param(p.at("lhs")), gates));
                    }));
    }
  }
}

void model_gradients(GradLedger& ledger) {
  Rng rng(77);
  const std::size_t vocab = 16;
  const std::vector<std::string> classes = {"a", "b", "c"};
  const multitask::TargetVocabulary targets({"t0", "t1", "t2", "t3"});
  for (std::size_t s = 0; s < kBatches.size(); ++s) {
    const auto batch = encoder::TokenBatch::pack(kBatches[s]);
    const std::string tag = "[batch " + std::to_string(s) + "]";

    {
      encoder::Encoder<double> enc(grad_encoder(vocab));
      ParameterSet<double> ps;
      enc.init(ps, rng);
      ledger.record("encoder" + tag, check_gradients(ps, [&](Graph<double>& g, ParameterSet<double>& p) {
                      auto out = enc.forward(g, p, batch);
                      return numerics::add(weighted_sum(out.lhs, 1), weighted_sum(out.pooled, 2));
                    }));
    }
    {
      encoder::Encoder<double> enc(grad_encoder(vocab));
      ParameterSet<double> ps;
      enc.init(ps, rng);
      multitask::init_rlt_heads(ps, multitask::HeadConfig::rlt(), 8, classes.size(), targets.size(), rng);
      std::vector<corpus::TokenizedPost> storage;
      for (std::size_t b = 0; b < batch.batch; ++b) {
        corpus::TokenizedPost post;
        post.id = "p" + std::to_string(b);
        const auto n = kBatches[s][b].size() - 1;
        post.tokens.assign(n, "w");
        post.label = classes[b % classes.size()];
        post.targets = {targets.names()[b % targets.size()]};
        corpus::Mask mask(n);
        for (auto& x : mask) x = rng.bernoulli(0.5);
        post.rationale = mask;
        storage.push_back(post);
      }
      std::vector<const corpus::TokenizedPost*> posts;
      for (const auto& p : storage) posts.push_back(&p);
      const auto supervision =
          multitask::make_rlt_targets<double>(posts, batch, multitask::HeadConfig::rlt(), classes, targets);
      ledger.record("rlt" + tag, check_gradients(ps, [&](Graph<double>& g, ParameterSet<double>& p) {
                      const auto out = multitask::rlt_forward(g, p, enc, multitask::HeadConfig::rlt(), batch);
                      return multitask::rlt_loss(out, supervision, multitask::LossWeights{2.0, 10.0}).total;
                    }));
    }
    for (auto kind : {adapters::ClassifierKind::kBaseline, adapters::ClassifierKind::kRaftSA,
                      adapters::ClassifierKind::kRaftCA}) {
      adapters::ClassifierConfig cfg;
      cfg.kind = kind;
      cfg.encoder = grad_encoder(vocab);
      cfg.attention_heads = 2;
      encoder::Encoder<double> enc(cfg.encoder);
      ParameterSet<double> ps;
      enc.init(ps, rng);
      adapters::init_classifier_head(ps, cfg, classes.size(), rng);
      std::vector<double> gates(batch.batch * batch.length, 0.0);
      for (std::size_t i = 0; i < gates.size(); ++i)
        if (batch.mask[i]) gates[i] = rng.uniform();
      std::vector<std::size_t> labels;
      for (std::size_t b = 0; b < batch.batch; ++b) labels.push_back(b % classes.size());
      ledger.record(adapters::to_string(kind) + tag, check_gradients(ps, [&](Graph<double>& g, ParameterSet<double>& p) {
                      auto logits = adapters::classifier_forward(g, p, enc, cfg, batch, &gates);
                      return numerics::cross_entropy(logits, std::span<const std::size_t>(labels));
                    }));
    }
  }
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  GradLedger ledger;
  primitive_gradients(ledger);
  model_gradients(ledger);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = ledger.failures.empty() && secs < 120.0;
  o.detail = std::to_string(ledger.checks) + " checks, worst rel err " + fmt(ledger.worst * 1e6, 3) + "e-6 (" +
             ledger.worst_name + "), " + fmt(secs, 1) + " s";
  for (const auto& f : ledger.failures) o.detail += "; failed " + f;
  return o;
}

// ---------------------------------------------------------- metric oracles

// p(abusive) = 0.2 + 0.15 per lexicon token.
std::vector<double> scripted(const std::vector<std::string>& tokens) {
  double hits = 0;
  for (const auto& t : tokens) hits += t.rfind("lex", 0) == 0;
  const double p = 0.2 + 0.15 * hits;
  return {1 - p, p};
}

Outcome criterion_metric_oracles() {
  const auto t0 = Clock::now();
  Rng rng(41);
  double worst_ap = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(64);
    std::vector<double> scores(n);
    metrics::Mask gold(n);
    for (auto& s : scores) s = rng.uniform();
    for (auto& g : gold) g = rng.bernoulli(0.3);
    gold[rng.index(n)] = 1;
    worst_ap = std::max(worst_ap, std::abs(metrics::auprc(scores, gold) - testing::brute_force_ap(scores, gold)));
  }
  // Tied scores rank by lower index.
  double worst_tied = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(64);
    std::vector<double> scores(n);
    metrics::Mask gold(n);
    for (auto& s : scores) s = static_cast<double>(rng.index(4)) / 4.0;
    for (auto& g : gold) g = rng.bernoulli(0.3);
    gold[rng.index(n)] = 1;
    worst_tied = std::max(worst_tied, std::abs(metrics::auprc(scores, gold) - testing::ranked_ap(scores, gold)));
  }

  std::size_t iou_mismatch = 0, iou_cases = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const auto pred = testing::random_spans(rng, 8), gold = testing::random_spans(rng, 8);
    ++iou_cases;
    if (std::abs(metrics::iou_f1(pred, gold) - testing::exhaustive_iou_f1(pred, gold)) > 1e-12) ++iou_mismatch;
  }

  std::size_t faith_mismatch = 0, faith_cases = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.index(12);
    std::vector<std::string> tokens(n);
    std::size_t lex_total = 0;
    for (auto& t : tokens) {
      const bool lex = rng.bernoulli(0.3);
      t = lex ? "lex0" + std::to_string(rng.index(5)) : "w" + std::to_string(rng.index(50));
      lex_total += lex;
    }
    std::vector<std::size_t> rationale;
    std::size_t lex_in = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.bernoulli(0.4)) {
        rationale.push_back(i);
        lex_in += tokens[i].rfind("lex", 0) == 0;
      }
    }
    const std::size_t j = rng.index(2);
    auto prob = [j](std::size_t hits) {
      const double p = 0.2 + 0.15 * static_cast<double>(hits);
      return j == 1 ? p : 1 - p;
    };
    const double comp = prob(lex_total) - prob(lex_total - lex_in);
    const double suff = prob(lex_total) - prob(lex_in);
    const metrics::FaithfulnessInput in{scripted, tokens, rationale, j};
    ++faith_cases;
    if (metrics::comprehensiveness(in) != comp || metrics::sufficiency(in) != suff) ++faith_mismatch;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_ap <= 1e-9 && worst_tied <= 1e-9 && iou_mismatch == 0 && faith_mismatch == 0 && secs < 60.0;
  std::ostringstream d;
  d << "auprc max |diff| " << worst_ap << " over 1000 cases, " << worst_tied << " over 1000 tied cases; iou_f1 " << iou_mismatch << "/" << iou_cases
    << " mismatches; comp/suff " << faith_mismatch << "/" << faith_cases << " mismatches; " << fmt(secs, 2) << " s";
  o.detail = d.str();
  return o;
}

// ------------------------------------------------------ synthetic RLT runs

corpus::SyntheticConfig rlt_corpus_config() {
  corpus::SyntheticConfig c;
  c.dataset_id = "rlt-synthetic";
  c.n_posts = 5000;
  c.vocab_size = 800;
  c.lexicon_size = 40;
  c.n_targets = 8;
  c.decoy_rate = 0.3;
  return c;
}

multitask::RltConfig rlt_model_config(multitask::HeadConfig heads) {
  multitask::RltConfig c;
  c.encoder.max_len = 32;
  c.encoder.d_model = 32;
  c.encoder.d_ff = 64;
  c.heads = heads;
  c.train.max_epochs = 8;
  return c;
}

struct RltStudy {
  Dataset data;
  std::vector<multitask::RltEvaluation> rlt, r_only;
  double first_run_seconds = 0;
};

const RltStudy& rlt_study() {
  static const std::unique_ptr<RltStudy> study = [] {
    auto s = std::make_unique<RltStudy>();
    const auto cfg = rlt_corpus_config();
    auto corpus = corpus::generate_synthetic(cfg, 1);
    s->data = harness::split_dataset(corpus.manifest, corpus.posts, corpus::SplitSpec::target_default(1));
    const auto& classes = s->data.manifest.classes;
    const auto& targets = s->data.manifest.targets;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
      const auto t0 = Clock::now();
      auto full = multitask::train_rlt(s->data.train, s->data.dev, classes, targets,
                                       rlt_model_config(multitask::HeadConfig::rlt()), seed);
      s->rlt.push_back(multitask::evaluate_rlt(full.model, s->data.test));
      if (seed == 0) s->first_run_seconds = seconds_since(t0);
      auto r = multitask::train_rlt(s->data.train, s->data.dev, classes, targets,
                                    rlt_model_config(multitask::HeadConfig::rationale_only()), seed);
      s->r_only.push_back(multitask::evaluate_rlt(r.model, s->data.test));
    }
    return s;
  }();
  return *study;
}

Outcome criterion_rlt_training() {
  const auto& s = rlt_study();
  const auto& e = s.rlt.front();
  Outcome o;
  o.pass = e.rationale_macro_f1 >= 0.90 && e.label_macro_f1 >= 0.85 && s.first_run_seconds < 600.0;
  o.detail = "test R-F1 " + fmt(e.rationale_macro_f1) + ", L-F1 " + fmt(e.label_macro_f1) + " on " +
             std::to_string(e.n_posts) + " held-out posts, " + fmt(s.first_run_seconds, 1) + " s";
  return o;
}

Outcome criterion_multitask_direction() {
  const auto& s = rlt_study();
  std::vector<double> rlt, r_only;
  for (const auto& e : s.rlt) rlt.push_back(e.rationale_macro_f1);
  for (const auto& e : s.r_only) r_only.push_back(e.rationale_macro_f1);
  const double m_rlt = median(rlt), m_r = median(r_only);
  Outcome o;
  o.pass = m_rlt >= m_r;
  o.detail = "median R-F1 RLT " + fmt(m_rlt) + " " + join(rlt) + " vs R-only " + fmt(m_r) + " " + join(r_only);
  return o;
}

// -------------------------------------------------- cross-domain few-shot

struct Transfer {
  Dataset source, target;
  std::optional<multitask::RltModel> extractor;
  adapters::ClassifierConfig classifier;
  double extractor_seconds = 0;
};

const Transfer& transfer() {
  static const std::unique_ptr<Transfer> t = [] {
    auto t = std::make_unique<Transfer>();
    corpus::SyntheticConfig sc;
    sc.dataset_id = "source";
    sc.n_posts = 3000;
    sc.decoy_rate = 0.3;
    auto src = corpus::generate_synthetic(sc, 100);
    t->source = harness::split_dataset(src.manifest, src.posts, corpus::SplitSpec::source_default(1));

    auto tc = sc;
    tc.dataset_id = "target";
    tc.n_posts = 2000;
    tc.shift_rate = 0.3;
    tc.shift_seed = 7;
    auto tgt = corpus::generate_synthetic(tc, 200);
    t->target = harness::split_dataset(tgt.manifest, tgt.posts, corpus::SplitSpec::target_default(2));

    multitask::RltConfig rc;
    rc.encoder.max_len = 32;
    rc.encoder.d_model = 32;
    rc.encoder.d_ff = 64;
    const auto t0 = Clock::now();
    auto ext = multitask::train_rlt(t->source.train, t->source.dev, t->source.manifest.classes,
                                    t->source.manifest.targets, rc, 1);
    t->extractor_seconds = seconds_since(t0);
    t->extractor.emplace(std::move(ext.model));

    t->classifier.encoder.max_len = 32;
    t->classifier.encoder.d_model = 32;
    t->classifier.encoder.d_ff = 64;
    t->classifier.train.adam.lr = 1e-3;
    return t;
  }();
  return *t;
}

harness::FewShotPlan transfer_plan(std::vector<Variant> variants) {
  harness::FewShotPlan plan;
  plan.k_values = {50};
  plan.n_sets = 1;
  plan.variants = std::move(variants);
  plan.seeds.clear();
  for (std::uint64_t s = 0; s < kSeeds; ++s) plan.seeds.push_back(s);
  plan.classifier = transfer().classifier;
  return plan;
}

Outcome criterion_fewshot_direction() {
  const auto t0 = Clock::now();
  const auto& t = transfer();
  const auto table = harness::run_fewshot_experiment(transfer_plan({Variant::kBaselineL, Variant::kRaftSA}), t.target,
                                                     nullptr, &*t.extractor);
  const double secs = seconds_since(t0);
  const auto& base = table.cells.at(0).raw;
  const auto& sa = table.cells.at(1).raw;
  std::vector<double> diff;
  for (std::size_t i = 0; i < base.size(); ++i) diff.push_back(sa[i] - base[i]);
  const double m = median(diff);
  Outcome o;
  o.pass = m >= 0.02 && secs < 900.0;
  o.detail = "k=50 macro-F1 baseline-l " + join(base) + " raft-sa " + join(sa) + "; median paired gain " + fmt(m) +
             " (medians " + fmt(median(sa)) + " vs " + fmt(median(base)) + "), " + fmt(secs, 1) + " s";
  return o;
}

Outcome criterion_ablation_sign() {
  const auto& t = transfer();
  harness::AblationConfig config;
  const auto table = harness::run_ablation_experiment(transfer_plan({Variant::kRaftSA}), config, t.target, *t.extractor);
  const auto& cell = table.cells.at(0);
  Outcome o;
  o.pass = cell.median_change < 0;
  o.detail = "threshold logit " + fmt(table.threshold) + "; F1 " + join(cell.original) + " -> " + join(cell.perturbed) +
             "; median change " + fmt(cell.median_change, 2) + "%";
  return o;
}

struct ExplainStudy {
  std::vector<double> extractor_auprc, occlusion_auprc, surrogate_auprc, sa_comprehensiveness;
};

const ExplainStudy& explain_study() {
  static const std::unique_ptr<ExplainStudy> study = [] {
    auto s = std::make_unique<ExplainStudy>();
    const auto& t = transfer();
    const auto& classes = t.target.manifest.classes;
    std::vector<corpus::TokenizedPost> abusive;
    for (const auto& p : t.target.test)
      if (p.label != classes.front()) abusive.push_back(p);
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
      const auto sets = harness::draw_fewshot_sets(t.target, 50, 1, seed);
      auto base_cfg = t.classifier;
      base_cfg.kind = adapters::ClassifierKind::kBaseline;
      auto base = adapters::baseline_l(sets[0], t.target.dev, classes, base_cfg,
                                       harness::run_seed(seed, Variant::kBaselineL, 50, 0));
      auto sa_cfg = t.classifier;
      sa_cfg.kind = adapters::ClassifierKind::kRaftSA;
      auto sa = adapters::train_raft(sets[0], t.target.dev, classes, sa_cfg, *t.extractor,
                                     harness::run_seed(seed, Variant::kRaftSA, 50, 0));

      auto posts = abusive;
      Rng rng(harness::derive_seed(seed, "explain-posts"));
      rng.shuffle(posts.begin(), posts.end());
      posts.resize(std::min<std::size_t>(50, posts.size()));

      harness::ExplainabilityConfig config;
      config.seed = seed;
      const std::vector<harness::ExplainSubject> subjects = {{"baseline-l", &base.model, nullptr},
                                                            {"raft-sa", &sa.model, &*t.extractor}};
      const auto result = harness::explainability_evaluation(subjects, posts, config);
      for (const auto& row : result.rows) {
        if (row.model == "raft-sa") {
          s->extractor_auprc.push_back(row.auprc);
          s->sa_comprehensiveness.push_back(row.comprehensiveness);
        } else if (row.method == explain::Method::kOcclusion) {
          s->occlusion_auprc.push_back(row.auprc);
        } else {
          s->surrogate_auprc.push_back(row.auprc);
        }
      }
    }
    return s;
  }();
  return *study;
}

Outcome criterion_plausibility() {
  const auto& s = explain_study();
  const double ext = median(s.extractor_auprc), occ = median(s.occlusion_auprc), sur = median(s.surrogate_auprc);
  Outcome o;
  o.pass = ext > occ && ext > sur;
  o.detail = "median AUPRC extractor " + fmt(ext) + " " + join(s.extractor_auprc) + ", occlusion " + fmt(occ) + " " +
             join(s.occlusion_auprc) + ", surrogate " + fmt(sur) + " " + join(s.surrogate_auprc);
  return o;
}

Outcome criterion_faithfulness() {
  const auto& s = explain_study();
  const double m = median(s.sa_comprehensiveness);
  Outcome o;
  o.pass = m > 0;
  o.detail = "median raft-sa comprehensiveness " + fmt(m) + " " + join(s.sa_comprehensiveness);
  return o;
}

// ----------------------------------------------------------- determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

int cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

Outcome criterion_determinism() {
  const auto dir = fs::temp_directory_path() / "raft_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_file(dir / "corpus.json", R"({"datasets": [
    {"dataset_id": "src", "n_posts": 600, "vocab_size": 150, "lexicon_size": 10, "n_targets": 4, "min_len": 6, "max_len": 14, "decoy_rate": 0.2},
    {"dataset_id": "tgt", "n_posts": 600, "vocab_size": 150, "lexicon_size": 10, "n_targets": 4, "min_len": 6, "max_len": 14, "decoy_rate": 0.2, "shift_rate": 0.3}]})");
  const std::string encoder =
      R"({"max_len": 16, "d_model": 16, "n_heads": 2, "n_layers": 1, "d_ff": 32, "dropout_rate": 0.1})";
  write_file(dir / "rlt.json",
             R"({"data": "data/src", "model": {"encoder": )" + encoder + R"(, "train": {"max_epochs": 3}}})");
  write_file(dir / "fewshot.json", R"({"target": "data/tgt", "sources": ["data/src"], "source_mode": "best-single",
    "extractor": "rlt/checkpoint.raft",
    "plan": {"k_values": [10, 20], "n_sets": 2, "seeds": [0, 1],
             "variants": ["baseline-l", "baseline-l-dom", "raft-sa", "raft-ca"],
             "classifier": {"encoder": )" + encoder + R"(, "attention_heads": 2, "train": {"lr": 0.003, "max_epochs": 3}}}})");
  std::string err;
  if (cli({"gen-corpus", "--config", (dir / "corpus.json").string(), "--seed", "3", "--out", (dir / "data").string()},
          &err) != 0)
    return {false, "gen-corpus failed: " + err};
  if (cli({"train-rlt", "--config", (dir / "rlt.json").string(), "--seed", "3", "--out", (dir / "rlt").string()},
          &err) != 0)
    return {false, "train-rlt failed: " + err};
  for (const char* run : {"run_a", "run_b"}) {
    if (cli({"fewshot", "--config", (dir / "fewshot.json").string(), "--seed", "9", "--out", (dir / run).string()},
            &err) != 0)
      return {false, std::string("fewshot ") + run + " failed: " + err};
  }
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir / "run_a")) files.push_back(entry.path().filename().string());
  std::sort(files.begin(), files.end());
  std::size_t b_count = 0;
  for ([[maybe_unused]] const auto& entry : fs::directory_iterator(dir / "run_b")) ++b_count;
  std::vector<std::string> differing;
  std::size_t bytes = 0;
  for (const auto& f : files) {
    const auto a = slurp(dir / "run_a" / f);
    bytes += a.size();
    if (!fs::exists(dir / "run_b" / f) || a != slurp(dir / "run_b" / f)) differing.push_back(f);
  }
  const bool mismatch = files.size() != b_count;
  Outcome o;
  o.pass = !files.empty() && differing.empty() && !mismatch;
  o.detail = std::to_string(files.size()) + " report files (" + std::to_string(bytes) + " bytes) compared";
  for (const auto& f : differing) o.detail += "; differs: " + f;
  if (mismatch) o.detail += "; file sets differ";
  return o;
}

// ------------------------------------------------------- format round trips

bool bit_equal(const numerics::ModelCheckpoint& a, const numerics::ModelCheckpoint& b) {
  if (a.version != b.version || a.config != b.config || a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    const auto& x = a.params[i];
    const auto& y = b.params[i];
    if (x.name != y.name || x.shape != y.shape || x.values.size() != y.values.size()) return false;
    if (!x.values.empty() && std::memcmp(x.values.data(), y.values.data(), x.values.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

Outcome criterion_round_trips() {
  const auto dir = fs::temp_directory_path() / "raft_acceptance_formats";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> problems;

  corpus::SyntheticConfig sc;
  sc.dataset_id = "formats";
  sc.n_posts = 400;
  sc.vocab_size = 120;
  sc.lexicon_size = 10;
  sc.n_targets = 4;
  sc.decoy_rate = 0.2;
  auto corpus = corpus::generate_synthetic(sc, 5);
  const auto posts = corpus::make_splits(corpus.posts, corpus::SplitSpec::target_default(5), sc.classes);
  corpus::write_jsonl(dir / "posts.jsonl", posts);
  corpus.manifest.save(dir / "manifest.json");
  const auto manifest = corpus::DatasetManifest::load(dir / "manifest.json");
  const auto loaded = corpus::load_jsonl(dir / "posts.jsonl", manifest);
  if (loaded.size() != posts.size()) problems.push_back("post count");
  std::size_t post_mismatch = 0;
  for (std::size_t i = 0; i < std::min(loaded.size(), posts.size()); ++i) {
    auto expected = posts[i];
    expected.dataset_id = manifest.dataset_id;
    if (!(loaded[i] == expected)) ++post_mismatch;
  }
  if (post_mismatch) problems.push_back(std::to_string(post_mismatch) + " posts differ");
  corpus::write_jsonl(dir / "posts2.jsonl", loaded);
  if (slurp(dir / "posts.jsonl") != slurp(dir / "posts2.jsonl")) problems.push_back("jsonl rewrite differs");

  const auto data = harness::split_dataset(manifest, loaded, corpus::SplitSpec::target_default(5));
  multitask::RltConfig rc;
  rc.encoder.max_len = 16;
  rc.encoder.d_model = 16;
  rc.encoder.n_heads = 2;
  rc.encoder.n_layers = 1;
  rc.encoder.d_ff = 32;
  rc.train.max_epochs = 2;
  auto rlt = multitask::train_rlt(data.train, data.dev, manifest.classes, manifest.targets, rc, 5);
  const auto rlt_ckpt = rlt.model.to_checkpoint();
  rlt_ckpt.save(dir / "rlt.raft");
  const auto rlt_loaded = numerics::ModelCheckpoint::load(dir / "rlt.raft");
  if (!bit_equal(rlt_ckpt, rlt_loaded)) problems.push_back("rlt checkpoint differs after load");
  const auto rlt_model = multitask::RltModel::from_checkpoint(rlt_loaded);
  if (!bit_equal(rlt_model.to_checkpoint(), rlt_ckpt)) problems.push_back("rlt model differs after load");
  std::vector<std::vector<std::string>> token_lists;
  for (const auto& p : data.test) token_lists.push_back(p.tokens);
  const auto before = rlt.model.predict(token_lists);
  const auto after = rlt_model.predict(token_lists);
  for (std::size_t i = 0; i < before.size(); ++i)
    if (before[i].label_probs != after[i].label_probs || before[i].rationale->scores != after[i].rationale->scores) {
      problems.push_back("rlt predictions differ after load");
      break;
    }

  adapters::ClassifierConfig cc;
  cc.kind = adapters::ClassifierKind::kRaftCA;
  cc.encoder = rc.encoder;
  cc.attention_heads = 2;
  cc.train.max_epochs = 2;
  auto ca = adapters::train_raft(data.train, data.dev, manifest.classes, cc, rlt.model, 6);
  ca.model.to_checkpoint().save(dir / "ca.raft");
  const auto ca_bytes = slurp(dir / "ca.raft");
  const auto ca_loaded = adapters::Classifier::from_checkpoint(numerics::ModelCheckpoint::load(dir / "ca.raft"));
  ca_loaded.to_checkpoint().save(dir / "ca2.raft");
  if (slurp(dir / "ca2.raft") != ca_bytes) problems.push_back("classifier checkpoint bytes differ after reload");
  if (ca_loaded.extractor_hash() != ca.model.extractor_hash()) problems.push_back("extractor hash lost");

  std::vector<explain::ExplanationRecord> records;
  Rng rng(12);
  for (const auto& p : data.test) {
    std::vector<double> scores(p.tokens.size());
    for (auto& s : scores) s = rng.uniform(-1, 1);
    records.push_back({p.id, explain::Method::kSurrogate, scores, explain::top_k_rationales(scores)});
  }
  explain::write_explanations(dir / "explanations.jsonl", records);
  const auto back = explain::read_explanations(dir / "explanations.jsonl");
  bool same = back.size() == records.size();
  for (std::size_t i = 0; same && i < back.size(); ++i)
    same = back[i].post_id == records[i].post_id && back[i].method == records[i].method &&
           back[i].scores == records[i].scores && back[i].top_k == records[i].top_k;
  if (!same) problems.push_back("explanation dump differs after load");

  Outcome o;
  o.pass = problems.empty();
  o.detail = std::to_string(posts.size()) + " posts, 2 checkpoints (" + std::to_string(ca_bytes.size()) +
             " bytes for raft-ca), " + std::to_string(records.size()) + " explanation records";
  for (const auto& p : problems) o.detail += "; " + p;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", criterion_gradients},
      {"metric oracles", criterion_metric_oracles},
      {"synthetic RLT training", criterion_rlt_training},
      {"multitask direction", criterion_multitask_direction},
      {"few-shot direction", criterion_fewshot_direction},
      {"ablation sign", criterion_ablation_sign},
      {"plausibility direction", criterion_plausibility},
      {"faithfulness sanity", criterion_faithfulness},
      {"determinism", criterion_determinism},
      {"format round trips", criterion_round_trips},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << (i + 1) << ": " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << " - "
              << o.detail << " [" << fmt(seconds_since(t0), 1) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
