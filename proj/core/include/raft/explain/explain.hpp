#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace raft::explain {

// Class probabilities for a batch of token sequences.
using BatchPredictor =
    std::function<std::vector<std::vector<double>>(const std::vector<std::vector<std::string>>& posts)>;

using SinglePredictor = std::function<std::vector<double>(const std::vector<std::string>& tokens)>;

BatchPredictor batched(SinglePredictor single);

enum class Method { kOcclusion, kSurrogate, kExtractor };

std::string to_string(Method m);
Method parse_method(const std::string& s);

// One score per word token.
struct ImportanceVector {
  std::vector<double> scores;
  Method method = Method::kOcclusion;
};

// score[t] = p(post)_j - p(post without token t)_j
ImportanceVector occlusion_importances(const BatchPredictor& predictor, const std::vector<std::string>& tokens,
                                       std::size_t j);

struct SurrogateConfig {
  std::size_t n_samples = 256;  // must be >= 2T unless exhaustive
  double kernel_width = 0.25;
  double ridge = 1e-3;
  // Enumerate all 2^T presence vectors instead of sampling (T <= 16).
  bool exhaustive = false;
};

void to_json(nlohmann::json& j, const SurrogateConfig& c);
void from_json(const nlohmann::json& j, SurrogateConfig& c);

// Local linear surrogate: random token-presence masks (p = 0.5, the first
// sample keeps every token), exponential kernel on cosine distance to the
// full post, ridge-penalised weighted least squares with a free intercept.
// The scores are the presence coefficients.
ImportanceVector surrogate_importances(const BatchPredictor& predictor, const std::vector<std::string>& tokens,
                                       std::size_t j, const SurrogateConfig& config, std::uint64_t seed);

// (s - min) / (max - min); all-equal input maps to 0.5.
std::vector<double> minmax_normalize(const std::vector<double>& scores);

// Indices of the k highest scores, ties to the lower index, returned sorted
// ascending. Returns every index when the post is shorter than k.
std::vector<std::size_t> top_k_rationales(const std::vector<double>& scores, std::size_t k = 5);

struct ExplanationRecord {
  std::string post_id;
  Method method = Method::kOcclusion;
  std::vector<double> scores;
  std::vector<std::size_t> top_k;
};

nlohmann::ordered_json explanation_to_json(const ExplanationRecord& r);
ExplanationRecord explanation_from_json(const nlohmann::json& j);
void write_explanations(const std::filesystem::path& path, const std::vector<ExplanationRecord>& records);
std::vector<ExplanationRecord> read_explanations(const std::filesystem::path& path);

}  // namespace raft::explain
