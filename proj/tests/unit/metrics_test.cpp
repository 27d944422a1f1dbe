#include <doctest.h>

#include <algorithm>
#include <set>

#include "raft/metrics/metrics.hpp"
#include "raft/numerics/errors.hpp"
#include "raft/numerics/rng.hpp"
#include "support/metric_oracles.hpp"

using namespace raft;
using namespace raft::metrics;
using namespace raft::testing;

namespace {

// p(abusive) = 0.2 + 0.15 per lexicon token.
std::vector<double> scripted(const std::vector<std::string>& tokens) {
  double hits = 0;
  for (const auto& t : tokens) hits += t.rfind("lex", 0) == 0;
  const double p = 0.2 + 0.15 * hits;
  return {1 - p, p};
}

}  // namespace

TEST_CASE("macro_f1 arithmetic") {
  const std::vector<std::string> classes = {"A", "B", "C"};
  CHECK(macro_f1({"A", "B", "C"}, {"A", "B", "C"}, classes) == 1.0);
  const std::vector<std::string> gold = {"A", "A", "B", "B", "C", "C"}, pred = {"A", "B", "B", "B", "C", "A"};
  const double expected = (0.5 + 0.8 + 2.0 / 3.0) / 3.0;
  CHECK(macro_f1(gold, pred, classes) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(macro_f1(gold, pred, classes) == doctest::Approx(0.6556).epsilon(1e-4));

  std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  std::vector<std::string> g2, p2;
  for (auto i : perm) {
    g2.push_back(gold[i]);
    p2.push_back(pred[i]);
  }
  CHECK(macro_f1(g2, p2, classes) == macro_f1(gold, pred, classes));

  CHECK(macro_f1({"A", "A"}, {"A", "A"}, {"A", "B"}) == 0.5);
  CHECK(macro_f1({"A", "A"}, {"A", "A"}, {"A", "B"}, {true}) == 1.0);
  CHECK_THROWS_AS(macro_f1(std::vector<std::string>{}, {}, classes), DataError);
  CHECK_THROWS_AS(macro_f1({"A"}, {"D"}, classes), DataError);
  CHECK_THROWS_AS(macro_f1({"A"}, {"A", "B"}, classes), DataError);
}

TEST_CASE("token_f1") {
  auto r = token_f1({0, 1, 1, 0}, {0, 0, 1, 1});
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == 0.5);
  CHECK(token_f1({1, 0, 1}, {1, 0, 1}).f1 == 1.0);
  CHECK(token_f1({0, 0, 0}, {1, 0, 0}).f1 == 0.0);
  CHECK(token_f1({0, 0}, {0, 0}).f1 == 1.0);
  CHECK_THROWS_AS(token_f1({0}, {0, 1}), DataError);

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Mask a(10), b(10);
    for (auto& x : a) x = rng.bernoulli(0.4);
    for (auto& x : b) x = rng.bernoulli(0.4);
    const auto ab = token_f1(a, b), ba = token_f1(b, a);
    CHECK(ab.precision == ba.recall);
    CHECK(ab.recall == ba.precision);
    CHECK(ab.f1 == doctest::Approx(ba.f1));
  }
}

TEST_CASE("iou_f1 against exhaustive matcher") {
  CHECK(iou_f1({{0, 4}}, {{2, 6}}) == 0.0);
  CHECK(span_iou({0, 4}, {2, 6}) == doctest::Approx(2.0 / 6.0));
  CHECK(iou_f1({{0, 4}}, {{0, 3}}) == 1.0);
  CHECK(iou_f1({{0, 2}, {4, 6}}, {{0, 2}, {4, 6}}) == 1.0);
  CHECK(iou_f1({}, {}) == 1.0);
  CHECK(iou_f1({}, {{0, 1}}) == 0.0);

  Rng rng(19);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto pred = random_spans(rng, 8), gold = random_spans(rng, 8);
    CHECK(iou_f1(pred, gold) == doctest::Approx(exhaustive_iou_f1(pred, gold)).epsilon(1e-12));
  }
}

TEST_CASE("mask_to_spans") {
  CHECK(mask_to_spans({1, 1, 0, 1}) == std::vector<Span>{{0, 2}, {3, 4}});
  CHECK(mask_to_spans({0, 0, 0}).empty());
  CHECK(mask_to_spans({1, 1, 1, 1, 1}) == std::vector<Span>{{0, 5}});
}

TEST_CASE("auprc as average precision") {
  CHECK(auprc({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == 1.0);
  CHECK(auprc({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0}) == doctest::Approx(0.8333).epsilon(1e-4));
  CHECK(auprc({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0}) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(auprc({0.9, 0.8, 0.7, 0.1}, {0, 0, 0, 1}) == doctest::Approx(0.25));
  CHECK_THROWS_AS(auprc({0.5, 0.4}, {0, 0}), DataError);
  // tie: lower index ranks first
  CHECK(auprc({0.5, 0.5}, {0, 1}) == 0.5);
  CHECK(auprc({0.5, 0.5}, {1, 0}) == 1.0);

  Rng rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(64);
    std::vector<double> scores(n);
    Mask gold(n);
    for (auto& s : scores) s = rng.uniform();
    for (auto& g : gold) g = rng.bernoulli(0.3);
    gold[rng.index(n)] = 1;
    CHECK(std::abs(auprc(scores, gold) - brute_force_ap(scores, gold)) < 1e-9);
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(64);
    std::vector<double> scores(n);
    Mask gold(n);
    for (auto& s : scores) s = static_cast<double>(rng.index(4)) / 4.0;
    for (auto& g : gold) g = rng.bernoulli(0.3);
    gold[rng.index(n)] = 1;
    CHECK(std::abs(auprc(scores, gold) - ranked_ap(scores, gold)) < 1e-9);
  }
}

TEST_CASE("jaccard_overlap") {
  CHECK(jaccard_overlap({1, 1, 0}, {0, 1, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK(jaccard_overlap({1, 0, 1}, {1, 0, 1}) == 1.0);
  CHECK(jaccard_overlap({0, 0}, {0, 0}) == 1.0);
  CHECK_THROWS_AS(jaccard_overlap({0}, {0, 0}), DataError);
}

TEST_CASE("faithfulness with scripted predictors") {
  const std::vector<std::string> post = {"you", "lex01", "are", "lex02", "a", "lex03"};
  FaithfulnessInput in{scripted, post, {1, 3, 5}, std::nullopt};
  CHECK(comprehensiveness(in) == doctest::Approx(0.45));
  CHECK(sufficiency(in) == doctest::Approx(0.0));

  Predictor constant = [](const std::vector<std::string>&) { return std::vector<double>{0.3, 0.7}; };
  CHECK(comprehensiveness({constant, post, {0, 2}, std::nullopt}) == 0.0);
  CHECK(sufficiency({constant, post, {0, 2}, std::nullopt}) == 0.0);

  Rng rng(8);
  Predictor noisy = [&rng](const std::vector<std::string>&) {
    const double p = rng.uniform();
    return std::vector<double>{p, 1 - p};
  };
  for (int i = 0; i < 20; ++i) {
    CHECK(comprehensiveness({noisy, post, {}, std::nullopt}) == 0.0);
    CHECK(sufficiency({noisy, post, {0, 1, 2, 3, 4, 5}, std::nullopt}) == 0.0);
  }

  // Keeping a single non-lexicon token strips the evidence: sufficiency is
  // positive, and a rationale that adds evidence makes it negative.
  CHECK(sufficiency({scripted, post, {0}, 1}) == doctest::Approx(0.45));
  Predictor inverse = [](const std::vector<std::string>& t) {
    const double p = 0.9 - 0.1 * static_cast<double>(t.size());
    return std::vector<double>{1 - p, p};
  };
  CHECK(sufficiency({inverse, post, {0}, 1}) < 0);
  CHECK_THROWS_AS(comprehensiveness({scripted, post, {9}, std::nullopt}), ContractError);
}

TEST_CASE("metrics report json") {
  MetricsReport r;
  r.run_id = "run-1";
  r.seed = 7;
  r.k = 50;
  r.dataset = "toy";
  r.macro_f1 = 0.75;
  r.auprc = 0.5;
  r.method = "raft-sa";
  const auto j = report_to_json(r);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"run_id", "seed", "k", "dataset", "macro_f1", "auprc", "token_f1", "iou_f1",
                                         "comprehensiveness", "sufficiency", "method"});
  CHECK(j["token_f1"].is_null());
  const auto back = report_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.k == r.k);
  CHECK(back.auprc == r.auprc);
  CHECK(!back.token_f1);
  CHECK(back.method == r.method);
  CHECK_THROWS_AS(report_from_json(nlohmann::json::object()), DataError);
}
