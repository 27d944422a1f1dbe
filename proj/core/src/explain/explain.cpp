#include "raft/explain/explain.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "raft/numerics/errors.hpp"
#include "raft/numerics/rng.hpp"

namespace raft::explain {

namespace {

double class_prob(const std::vector<double>& probs, std::size_t j) {
  if (j >= probs.size()) throw ContractError("explained class index out of range");
  return probs[j];
}

std::vector<std::string> apply_presence(const std::vector<std::string>& tokens, const std::vector<std::uint8_t>& z) {
  std::vector<std::string> out;
  for (std::size_t t = 0; t < tokens.size(); ++t)
    if (z[t]) out.push_back(tokens[t]);
  return out;
}

}  // namespace

BatchPredictor batched(SinglePredictor single) {
  return [single = std::move(single)](const std::vector<std::vector<std::string>>& posts) {
    std::vector<std::vector<double>> out;
    out.reserve(posts.size());
    for (const auto& p : posts) out.push_back(single(p));
    return out;
  };
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kOcclusion:
      return "occlusion";
    case Method::kSurrogate:
      return "surrogate";
    case Method::kExtractor:
      return "extractor";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "occlusion") return Method::kOcclusion;
  if (s == "surrogate") return Method::kSurrogate;
  if (s == "extractor") return Method::kExtractor;
  throw DataError("unknown explanation method: " + s);
}

ImportanceVector occlusion_importances(const BatchPredictor& predictor, const std::vector<std::string>& tokens,
                                       std::size_t j) {
  if (tokens.empty()) throw ContractError("occlusion of an empty post");
  std::vector<std::vector<std::string>> inputs{tokens};
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto cut = tokens;
    cut.erase(cut.begin() + static_cast<std::ptrdiff_t>(t));
    inputs.push_back(std::move(cut));
  }
  const auto probs = predictor(inputs);
  if (probs.size() != inputs.size()) throw ContractError("predictor returned the wrong number of rows");
  ImportanceVector out{{}, Method::kOcclusion};
  const double full = class_prob(probs[0], j);
  for (std::size_t t = 0; t < tokens.size(); ++t) out.scores.push_back(full - class_prob(probs[t + 1], j));
  return out;
}

void to_json(nlohmann::json& j, const SurrogateConfig& c) {
  j = {{"n_samples", c.n_samples}, {"kernel_width", c.kernel_width}, {"ridge", c.ridge}, {"exhaustive", c.exhaustive}};
}

void from_json(const nlohmann::json& j, SurrogateConfig& c) {
  const SurrogateConfig d;
  c.n_samples = j.value("n_samples", d.n_samples);
  c.kernel_width = j.value("kernel_width", d.kernel_width);
  c.ridge = j.value("ridge", d.ridge);
  c.exhaustive = j.value("exhaustive", d.exhaustive);
}

ImportanceVector surrogate_importances(const BatchPredictor& predictor, const std::vector<std::string>& tokens,
                                       std::size_t j, const SurrogateConfig& config, std::uint64_t seed) {
  const std::size_t T = tokens.size();
  if (T == 0) throw ContractError("surrogate of an empty post");
  if (config.kernel_width <= 0 || config.ridge < 0) throw ContractError("surrogate: bad kernel width or ridge");

  std::vector<std::vector<std::uint8_t>> masks;
  if (config.exhaustive) {
    if (T > 16) throw ContractError("exhaustive surrogate limited to 16 tokens");
    for (std::uint64_t bits = (std::uint64_t{1} << T); bits-- > 0;) {
      std::vector<std::uint8_t> z(T);
      for (std::size_t t = 0; t < T; ++t) z[t] = (bits >> t) & 1U;
      masks.push_back(std::move(z));
    }
  } else {
    if (config.n_samples < 2 * T) throw ContractError("surrogate needs at least 2T samples");
    Rng rng(seed);
    masks.emplace_back(T, 1);
    while (masks.size() < config.n_samples) {
      std::vector<std::uint8_t> z(T);
      for (auto& x : z) x = rng.bernoulli(0.5);
      masks.push_back(std::move(z));
    }
  }

  std::vector<std::vector<std::string>> inputs;
  inputs.reserve(masks.size());
  for (const auto& z : masks) inputs.push_back(apply_presence(tokens, z));
  const auto probs = predictor(inputs);
  if (probs.size() != inputs.size()) throw ContractError("predictor returned the wrong number of rows");

  const auto n = static_cast<Eigen::Index>(masks.size());
  const auto d = static_cast<Eigen::Index>(T + 1);
  Eigen::MatrixXd X(n, d);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& z = masks[static_cast<std::size_t>(i)];
    std::size_t present = 0;
    X(i, 0) = 1.0;
    for (std::size_t t = 0; t < T; ++t) {
      X(i, static_cast<Eigen::Index>(t + 1)) = z[t];
      present += z[t];
    }
    // cosine between a 0/1 presence vector and the all-ones vector
    const double cosine = std::sqrt(static_cast<double>(present) / static_cast<double>(T));
    const double dist = 1.0 - cosine;
    w(i) = std::exp(-dist * dist / (config.kernel_width * config.kernel_width));
    y(i) = class_prob(probs[static_cast<std::size_t>(i)], j);
  }
  Eigen::MatrixXd A = X.transpose() * w.asDiagonal() * X;
  for (Eigen::Index k = 1; k < d; ++k) A(k, k) += config.ridge;
  const Eigen::VectorXd b = X.transpose() * (w.asDiagonal() * y);
  const Eigen::VectorXd beta = A.ldlt().solve(b);

  ImportanceVector out{{}, Method::kSurrogate};
  for (Eigen::Index k = 1; k < d; ++k) out.scores.push_back(beta(k));
  for (double s : out.scores)
    if (!std::isfinite(s)) throw NumericError("surrogate regression produced a non-finite coefficient");
  return out;
}

std::vector<double> minmax_normalize(const std::vector<double>& scores) {
  if (scores.empty()) return {};
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double mn = *lo, range = *hi - *lo;
  std::vector<double> out(scores.size(), 0.5);
  if (range > 0)
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - mn) / range;
  return out;
}

std::vector<std::size_t> top_k_rationales(const std::vector<double>& scores, std::size_t k) {
  if (k == 0) throw ContractError("top_k needs k >= 1");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

nlohmann::ordered_json explanation_to_json(const ExplanationRecord& r) {
  nlohmann::ordered_json j;
  j["post_id"] = r.post_id;
  j["method"] = to_string(r.method);
  j["scores"] = r.scores;
  j["top_k"] = r.top_k;
  return j;
}

ExplanationRecord explanation_from_json(const nlohmann::json& j) {
  try {
    return {j.at("post_id").get<std::string>(), parse_method(j.at("method").get<std::string>()),
            j.at("scores").get<std::vector<double>>(), j.at("top_k").get<std::vector<std::size_t>>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("explanation record: ") + e.what());
  }
}

void write_explanations(const std::filesystem::path& path, const std::vector<ExplanationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << explanation_to_json(r).dump() << '\n';
}

std::vector<ExplanationRecord> read_explanations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<ExplanationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(explanation_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace raft::explain
