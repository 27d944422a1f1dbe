#include "raft/metrics/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "raft/numerics/errors.hpp"

namespace raft::metrics {

namespace {

double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DataError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

std::size_t argmax(const std::vector<double>& v) {
  if (v.empty()) throw ContractError("predictor returned no class probabilities");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double probability(const std::vector<double>& probs, std::size_t j) {
  if (j >= probs.size()) throw ContractError("predicted class out of range");
  return probs[j];
}

}  // namespace

double macro_f1(const std::vector<std::size_t>& gold, const std::vector<std::size_t>& pred, std::size_t n_classes,
                MacroF1Options options) {
  require_same_length(gold.size(), pred.size(), "macro_f1");
  if (gold.empty()) throw DataError("macro_f1: empty input");
  std::vector<std::size_t> tp(n_classes), fp(n_classes), fn(n_classes);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= n_classes || pred[i] >= n_classes) throw DataError("macro_f1: label outside the class set");
    if (gold[i] == pred[i]) {
      ++tp[gold[i]];
    } else {
      ++fp[pred[i]];
      ++fn[gold[i]];
    }
  }
  double total = 0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (tp[c] + fp[c] + fn[c] == 0) {
      if (!options.skip_absent) ++counted;
      continue;
    }
    total += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                const std::vector<std::string>& classes, MacroF1Options options) {
  require_same_length(gold.size(), pred.size(), "macro_f1");
  auto index = [&](const std::string& label) {
    const auto it = std::find(classes.begin(), classes.end(), label);
    if (it == classes.end()) throw DataError("macro_f1: label '" + label + "' not in the class set");
    return static_cast<std::size_t>(it - classes.begin());
  };
  std::vector<std::size_t> g, p;
  for (const auto& x : gold) g.push_back(index(x));
  for (const auto& x : pred) p.push_back(index(x));
  return macro_f1(g, p, classes.size(), options);
}

PrecisionRecall token_f1(const Mask& pred, const Mask& gold) {
  require_same_length(pred.size(), gold.size(), "token_f1");
  std::size_t tp = 0, n_pred = 0, n_gold = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    n_pred += pred[i] != 0;
    n_gold += gold[i] != 0;
    tp += pred[i] != 0 && gold[i] != 0;
  }
  if (n_pred == 0 && n_gold == 0) return {1.0, 1.0, 1.0};
  PrecisionRecall r;
  r.precision = n_pred ? static_cast<double>(tp) / static_cast<double>(n_pred) : 0.0;
  r.recall = n_gold ? static_cast<double>(tp) / static_cast<double>(n_gold) : 0.0;
  r.f1 = harmonic(r.precision, r.recall);
  return r;
}

double span_iou(const Span& a, const Span& b) {
  const auto lo = std::max(a.start, b.start), hi = std::min(a.end, b.end);
  const std::size_t inter = hi > lo ? hi - lo : 0;
  const std::size_t uni = (a.end - a.start) + (b.end - b.start) - inter;
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

double iou_f1(const std::vector<Span>& pred, const std::vector<Span>& gold, double threshold) {
  for (const auto* set : {&pred, &gold})
    for (const auto& s : *set)
      if (s.start >= s.end) throw ContractError("iou_f1: empty or inverted span");
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::size_t pred_hits = 0, gold_hits = 0;
  for (const auto& p : pred) {
    double best = 0;
    for (const auto& g : gold) best = std::max(best, span_iou(p, g));
    pred_hits += best >= threshold;
  }
  for (const auto& g : gold) {
    double best = 0;
    for (const auto& p : pred) best = std::max(best, span_iou(p, g));
    gold_hits += best >= threshold;
  }
  return harmonic(static_cast<double>(pred_hits) / static_cast<double>(pred.size()),
                  static_cast<double>(gold_hits) / static_cast<double>(gold.size()));
}

std::vector<Span> mask_to_spans(const Mask& mask) {
  std::vector<Span> out;
  for (std::size_t i = 0; i < mask.size();) {
    if (!mask[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < mask.size() && mask[j]) ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

double auprc(const std::vector<double>& scores, const Mask& gold) {
  require_same_length(scores.size(), gold.size(), "auprc");
  const auto positives = static_cast<std::size_t>(std::count_if(gold.begin(), gold.end(), [](auto g) { return g != 0; }));
  if (positives == 0) throw DataError("auprc: gold mask has no positive token");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!gold[order[rank]]) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return total / static_cast<double>(positives);
}

double jaccard_overlap(const Mask& a, const Mask& b) {
  require_same_length(a.size(), b.size(), "jaccard_overlap");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

double rationale_macro_f1(const std::vector<Mask>& pred, const std::vector<Mask>& gold) {
  require_same_length(pred.size(), gold.size(), "rationale_macro_f1");
  std::vector<std::size_t> p, g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require_same_length(pred[i].size(), gold[i].size(), "rationale_macro_f1");
    for (std::size_t t = 0; t < pred[i].size(); ++t) {
      p.push_back(pred[i][t] != 0);
      g.push_back(gold[i][t] != 0);
    }
  }
  return macro_f1(g, p, 2);
}

std::vector<std::string> delete_positions(const std::vector<std::string>& tokens,
                                          const std::vector<std::size_t>& positions) {
  std::vector<std::uint8_t> drop(tokens.size(), 0);
  for (auto p : positions) {
    if (p >= tokens.size()) throw ContractError("rationale index out of range");
    drop[p] = 1;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (!drop[i]) out.push_back(tokens[i]);
  return out;
}

std::vector<std::string> keep_positions(const std::vector<std::string>& tokens,
                                        const std::vector<std::size_t>& positions) {
  std::vector<std::uint8_t> keep(tokens.size(), 0);
  for (auto p : positions) {
    if (p >= tokens.size()) throw ContractError("rationale index out of range");
    keep[p] = 1;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (keep[i]) out.push_back(tokens[i]);
  return out;
}

double comprehensiveness(const FaithfulnessInput& input) {
  const auto full = input.predictor(input.tokens);
  const auto j = input.predicted_class.value_or(argmax(full));
  if (input.rationale.empty()) return 0.0;
  return probability(full, j) - probability(input.predictor(delete_positions(input.tokens, input.rationale)), j);
}

double sufficiency(const FaithfulnessInput& input) {
  const auto full = input.predictor(input.tokens);
  const auto j = input.predicted_class.value_or(argmax(full));
  const auto kept = keep_positions(input.tokens, input.rationale);
  if (kept.size() == input.tokens.size()) return 0.0;
  return probability(full, j) - probability(input.predictor(kept), j);
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw DataError("mean of an empty list");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

nlohmann::ordered_json report_to_json(const MetricsReport& r) {
  auto opt = [](const auto& v) -> nlohmann::ordered_json {
    if (v) return *v;
    return nullptr;
  };
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["seed"] = r.seed;
  j["k"] = opt(r.k);
  j["dataset"] = r.dataset;
  j["macro_f1"] = r.macro_f1;
  j["auprc"] = opt(r.auprc);
  j["token_f1"] = opt(r.token_f1);
  j["iou_f1"] = opt(r.iou_f1);
  j["comprehensiveness"] = opt(r.comprehensiveness);
  j["sufficiency"] = opt(r.sufficiency);
  j["method"] = r.method;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  auto opt_double = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  try {
    MetricsReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("k") && !j.at("k").is_null()) r.k = j.at("k").get<std::size_t>();
    r.dataset = j.at("dataset").get<std::string>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.auprc = opt_double("auprc");
    r.token_f1 = opt_double("token_f1");
    r.iou_f1 = opt_double("iou_f1");
    r.comprehensiveness = opt_double("comprehensiveness");
    r.sufficiency = opt_double("sufficiency");
    r.method = j.at("method").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metrics report: ") + e.what());
  }
}

}  // namespace raft::metrics
