#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "raft/corpus/splits.hpp"
#include "raft/corpus/synthetic.hpp"
#include "raft/multitask/rlt.hpp"
#include "raft/numerics/errors.hpp"
#include "support/gradcheck.hpp"

using namespace raft;
using namespace raft::multitask;
using raft::testing::check_gradients;

namespace {

EncoderConfig tiny_encoder(std::size_t vocab) {
  EncoderConfig c;
  c.vocab_size = vocab;
  c.max_len = 16;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 12;
  c.dropout_rate = 0.0;
  return c;
}

corpus::TokenizedPost make_post(std::vector<std::string> tokens, std::string label, corpus::Mask rationale,
                                std::vector<std::string> targets = {}) {
  corpus::TokenizedPost p;
  p.id = "p";
  p.tokens = std::move(tokens);
  p.label = std::move(label);
  p.rationale = std::move(rationale);
  p.targets = std::move(targets);
  return p;
}

std::vector<std::string> target_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("t" + std::to_string(i));
  return out;
}

struct SmallData {
  std::vector<corpus::TokenizedPost> train, dev, test;
  corpus::DatasetManifest manifest;
};

SmallData small_corpus(std::uint64_t seed, std::size_t n = 500) {
  corpus::SyntheticConfig c;
  c.n_posts = n;
  c.vocab_size = 120;
  c.lexicon_size = 10;
  c.n_targets = 4;
  c.min_len = 6;
  c.max_len = 12;
  auto gen = corpus::generate_synthetic(c, seed);
  auto posts = corpus::make_splits(gen.posts, corpus::SplitSpec::target_default(seed), c.classes);
  return {corpus::filter_split(posts, corpus::Split::kTrain), corpus::filter_split(posts, corpus::Split::kDev),
          corpus::filter_split(posts, corpus::Split::kTest), gen.manifest};
}

RltConfig small_rlt_config() {
  RltConfig cfg;
  cfg.encoder = tiny_encoder(0);
  cfg.encoder.d_model = 16;
  cfg.encoder.d_ff = 32;
  cfg.train.max_epochs = 8;
  cfg.train.adam.lr = 3e-3;
  return cfg;
}

}  // namespace

TEST_CASE("rlt output shapes follow the head config") {
  Rng rng(1);
  const std::size_t vocab = 30;
  Encoder<double> enc(tiny_encoder(vocab));
  ParameterSet<double> ps;
  enc.init(ps, rng);
  init_rlt_heads(ps, HeadConfig::rlt(), 8, 3, 22, rng);
  std::vector<std::vector<std::size_t>> seqs = {{encoder::kClsId, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
  const auto batch = TokenBatch::pack(seqs);
  Graph<double> g;
  auto out = rlt_forward(g, ps, enc, HeadConfig::rlt(), batch);
  REQUIRE(out.rationale);
  CHECK(out.rationale->value().size() == 10);  // 9 words + <cls>
  CHECK(out.label->shape() == numerics::Shape{1, 3});
  CHECK(out.target->shape() == numerics::Shape{1, 22});

  Graph<double> g2;
  auto only_label = rlt_forward(g2, ps, enc, HeadConfig::label_only(), batch);
  CHECK(!only_label.rationale);
  CHECK(!only_label.target);
  CHECK(only_label.label);

  std::vector<std::vector<std::size_t>> empty = {{encoder::kClsId}};
  Graph<double> g3;
  CHECK_THROWS_AS(rlt_forward(g3, ps, enc, HeadConfig::rlt(), TokenBatch::pack(empty)), ContractError);
  CHECK_THROWS_AS(HeadConfig({false, false, false}).validate(), ContractError);
  CHECK(HeadConfig::rationale_label().name() == "RL");
}

TEST_CASE("disabled heads leave the encoder gradient untouched") {
  Rng rng(2);
  const std::size_t vocab = 20;
  Encoder<double> enc(tiny_encoder(vocab));
  ParameterSet<double> ps;
  enc.init(ps, rng);
  init_rlt_heads(ps, HeadConfig::rlt(), 8, 2, 3, rng);
  std::vector<std::vector<std::size_t>> seqs = {{encoder::kClsId, 3, 4, 5}, {encoder::kClsId, 6, 7}};
  const auto batch = TokenBatch::pack(seqs);
  auto p1 = make_post({"a", "b", "c"}, "abusive", {0, 1, 0}, {"t1"});
  auto p2 = make_post({"d", "e"}, "normal", {0, 0});
  const std::vector<const corpus::TokenizedPost*> posts = {&p1, &p2};
  const std::vector<std::string> classes = {"normal", "abusive"};
  TargetVocabulary tv(target_names(3));

  auto encoder_grads = [&](HeadConfig heads) {
    ps.zero_grad();
    Graph<double> g;
    auto out = rlt_forward(g, ps, enc, heads, batch);
    auto loss = rlt_loss(out, make_rlt_targets<double>(posts, batch, heads, classes, tv), LossWeights{});
    g.backward(loss.total);
    std::map<std::string, std::vector<double>> out_grads;
    for (auto& [name, p] : ps) out_grads[name] = p.grad;
    return out_grads;
  };
  const auto label_only = encoder_grads(HeadConfig::label_only());
  for (const auto& [name, grad] : label_only) {
    if (name.rfind("head.rationale", 0) == 0 || name.rfind("head.target", 0) == 0) {
      for (double x : grad) CHECK(x == 0.0);
    }
  }
  // The same loss computed with every head present but weighted out.
  ps.zero_grad();
  Graph<double> g;
  auto out = rlt_forward(g, ps, enc, HeadConfig::label_only(), batch);
  auto l = rlt_loss(out, make_rlt_targets<double>(posts, batch, HeadConfig::label_only(), classes, tv), {0, 0});
  g.backward(l.total);
  for (auto& [name, p] : ps) CHECK(p.grad == label_only.at(name));
}

TEST_CASE("rlt gradients match finite differences") {
  Rng rng(3);
  const std::size_t vocab = 16;
  const std::vector<std::vector<std::vector<std::size_t>>> shapes = {
      {{encoder::kClsId, 3, 4}},
      {{encoder::kClsId, 5, 6, 7, 8}, {encoder::kClsId, 9}},
      {{encoder::kClsId, 10, 11}, {encoder::kClsId, 12, 13, 14}, {encoder::kClsId, 15, 3, 4, 5}}};
  const std::vector<std::string> classes = {"a", "b", "c"};
  TargetVocabulary tv(target_names(4));
  for (const auto& seqs : shapes) {
    Encoder<double> enc(tiny_encoder(vocab));
    ParameterSet<double> ps;
    enc.init(ps, rng);
    init_rlt_heads(ps, HeadConfig::rlt(), 8, 3, 4, rng);
    const auto batch = TokenBatch::pack(seqs);
    std::vector<corpus::TokenizedPost> storage;
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      const auto n = seqs[b].size() - 1;
      corpus::Mask m(n);
      for (auto& x : m) x = rng.bernoulli(0.5);
      storage.push_back(make_post(std::vector<std::string>(n, "w"), classes[b % 3], m, {"t" + std::to_string(b)}));
    }
    std::vector<const corpus::TokenizedPost*> posts;
    for (const auto& p : storage) posts.push_back(&p);
    const auto targets = make_rlt_targets<double>(posts, batch, HeadConfig::rlt(), classes, tv);
    auto r = check_gradients(ps, [&](Graph<double>& g, ParameterSet<double>& p) {
      return rlt_loss(rlt_forward(g, p, enc, HeadConfig::rlt(), batch), targets, LossWeights{2.0, 10.0}).total;
    });
    CAPTURE(r.worst_parameter);
    CHECK(r.max_relative_error <= 1e-4);
  }
}

TEST_CASE("joint loss is additive in its weights") {
  Rng rng(4);
  const std::size_t vocab = 20;
  Encoder<double> enc(tiny_encoder(vocab));
  ParameterSet<double> ps;
  enc.init(ps, rng);
  init_rlt_heads(ps, HeadConfig::rlt(), 8, 2, 3, rng);
  std::vector<std::vector<std::size_t>> seqs = {{encoder::kClsId, 3, 4, 5}, {encoder::kClsId, 6, 7}};
  const auto batch = TokenBatch::pack(seqs);
  auto p1 = make_post({"a", "b", "c"}, "abusive", {0, 1, 1}, {"t0", "t2"});
  auto p2 = make_post({"d", "e"}, "normal", {0, 0});
  const std::vector<const corpus::TokenizedPost*> posts = {&p1, &p2};
  const auto targets = make_rlt_targets<double>(posts, batch, HeadConfig::rlt(), {"normal", "abusive"},
                                                TargetVocabulary(target_names(3)));
  Graph<double> g;
  const auto out = rlt_forward(g, ps, enc, HeadConfig::rlt(), batch);
  const auto base = rlt_loss(out, targets, {0, 0}).parts;
  CHECK(base.l_total == base.l_label);
  for (double beta : {0.0, 1.0, 2.0, 5.0, 100.0}) {
    for (double gamma : {0.0, 1.0, 10.0, 100.0}) {
      const auto l = rlt_loss(out, targets, {beta, gamma});
      CHECK(std::abs(l.parts.l_total - (l.parts.l_label + beta * l.parts.l_rationale + gamma * l.parts.l_target)) <
            1e-9);
      CHECK(std::abs(l.total.value().item() - l.parts.l_total) < 1e-9);
    }
  }
  const auto b2 = rlt_loss(out, targets, {2, 0}).parts;
  CHECK(b2.l_total - base.l_total == doctest::Approx(2 * b2.l_rationale).epsilon(1e-12));

  auto missing = make_post({"a"}, "normal", {});
  missing.rationale.reset();
  std::vector<std::vector<std::size_t>> one = {{encoder::kClsId, 3}};
  CHECK_THROWS_AS(make_rlt_targets<double>({&missing}, TokenBatch::pack(one), HeadConfig::rlt(), {"normal", "abusive"},
                                           TargetVocabulary(target_names(3))),
                  DataError);
  CHECK_NOTHROW(make_rlt_targets<double>({&missing}, TokenBatch::pack(one), HeadConfig::label_only(),
                                         {"normal", "abusive"}, TargetVocabulary(target_names(3))));
}

TEST_CASE("rationale loss ignores padding") {
  Rng rng(5);
  const std::size_t vocab = 20;
  Encoder<double> enc(tiny_encoder(vocab));
  ParameterSet<double> ps;
  enc.init(ps, rng);
  init_rlt_heads(ps, HeadConfig::rationale_only(), 8, 2, 3, rng);
  auto p = make_post({"a", "b", "c"}, "abusive", {0, 1, 0});
  std::vector<std::vector<std::size_t>> seqs = {{encoder::kClsId, 3, 4, 5}};
  double reference = 0;
  for (std::size_t pad : {0, 1, 4, 9}) {
    const auto batch = TokenBatch::pack(seqs, 4 + pad);
    Graph<double> g;
    const auto out = rlt_forward(g, ps, enc, HeadConfig::rationale_only(), batch);
    const auto l = rlt_loss(
        out, make_rlt_targets<double>({&p}, batch, HeadConfig::rationale_only(), {"normal", "abusive"}, {}), {});
    if (pad == 0) reference = l.parts.l_rationale;
    CHECK(l.parts.l_rationale == doctest::Approx(reference).epsilon(1e-12));
  }
}

TEST_CASE("target vocabulary") {
  TargetVocabulary tv({"a", "b"});
  CHECK(tv.index("b") == 1);
  CHECK_THROWS_AS(tv.index("z"), DataError);
  CHECK_THROWS_AS(TargetVocabulary({"a", "a"}), ContractError);
}

TEST_CASE("rationale scores from zero logits are one half") {
  RltConfig cfg;
  cfg.encoder = tiny_encoder(0);
  auto vocab = encoder::Vocabulary::from_tokens({"<pad>", "<unk>", "<cls>", "x", "y"});
  RltModel model(cfg, {"normal", "abusive"}, TargetVocabulary(target_names(2)), vocab, 1);
  for (auto& x : model.params().at("head.rationale.w").value.data) x = 0;
  const auto s = predict_rationale_scores(model, {"x", "y", "x"});
  REQUIRE(s.scores.size() == 4);
  REQUIRE(s.logits.size() == 4);
  for (double v : s.scores) CHECK(v == 0.5);

  RltConfig no_r = cfg;
  no_r.heads = HeadConfig::label_only();
  RltModel label_model(no_r, {"normal", "abusive"}, TargetVocabulary(target_names(2)), vocab, 1);
  CHECK_THROWS_AS(predict_rationale_scores(label_model, {"x"}), ContractError);

  const auto back = RltModel::from_checkpoint(ModelCheckpoint::deserialize(model.to_checkpoint().serialize()));
  CHECK(back.to_checkpoint() == model.to_checkpoint());
  CHECK(predict_rationale_scores(back, {"x", "y", "x"}).scores == s.scores);
}

TEST_CASE("training is deterministic and logs every epoch") {
  auto data = small_corpus(11, 240);
  auto cfg = small_rlt_config();
  cfg.train.max_epochs = 3;
  const auto a = train_rlt(data.train, data.dev, data.manifest.classes, data.manifest.targets, cfg, 5);
  const auto b = train_rlt(data.train, data.dev, data.manifest.classes, data.manifest.targets, cfg, 5);
  CHECK(a.model.to_checkpoint().serialize() == b.model.to_checkpoint().serialize());
  REQUIRE(a.fit.log.size() == 3);

  const auto path = std::filesystem::temp_directory_path() / "raft_rlt_log.jsonl";
  write_training_log(path, a.fit.log);
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    std::sort(keys.begin(), keys.end());
    CHECK(keys == std::vector<std::string>{"dev_metric", "epoch", "l_label", "l_rationale", "l_target", "l_total"});
    CHECK(j["epoch"] == ++n);
  }
  CHECK(n == 3);
  CHECK_THROWS_AS(train_rlt({}, data.dev, data.manifest.classes, data.manifest.targets, cfg, 5), DataError);
}

TEST_CASE("trained rlt separates planted lexicon tokens") {
  auto data = small_corpus(12, 1000);
  auto cfg = small_rlt_config();
  cfg.train.max_epochs = 15;
  const auto r = train_rlt(data.train, data.dev, data.manifest.classes, data.manifest.targets, cfg, 3);
  const auto ev = evaluate_rlt(r.model, data.test);
  CHECK(ev.rationale_macro_f1 >= 0.9);
  CHECK(ev.label_macro_f1 >= 0.85);

  double lex = 0, bg = 0;
  std::size_t n_lex = 0, n_bg = 0;
  for (const auto& p : data.test) {
    const auto s = predict_rationale_scores(r.model, p.tokens);
    for (std::size_t t = 0; t < p.tokens.size(); ++t) {
      if (p.tokens[t].rfind("lex", 0) == 0) {
        lex += s.scores[t + 1];
        ++n_lex;
      } else {
        bg += s.scores[t + 1];
        ++n_bg;
      }
    }
  }
  CHECK(lex / static_cast<double>(n_lex) > bg / static_cast<double>(n_bg));
}

TEST_CASE("all-zero rationale labels train a low-scoring head") {
  auto data = small_corpus(13, 300);
  for (auto* split : {&data.train, &data.dev, &data.test})
    for (auto& p : *split) std::fill(p.rationale->begin(), p.rationale->end(), 0);
  auto cfg = small_rlt_config();
  cfg.train.max_epochs = 3;
  const auto r = train_rlt(data.train, data.dev, data.manifest.classes, data.manifest.targets, cfg, 4);
  double total = 0;
  std::size_t n = 0;
  for (const auto& p : data.test) {
    const auto s = predict_rationale_scores(r.model, p.tokens);
    for (std::size_t t = 1; t < s.scores.size(); ++t, ++n) total += s.scores[t];
  }
  CHECK(total / static_cast<double>(n) < 0.5);
}
