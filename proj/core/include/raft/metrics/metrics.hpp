#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace raft::metrics {

using Mask = std::vector<std::uint8_t>;

struct MacroF1Options {
  // When set, a class absent from both gold and predictions is left out of
  // the mean instead of contributing 0.
  bool skip_absent = false;
};

double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                const std::vector<std::string>& classes, MacroF1Options options = {});

// Same, over class indices in [0, n_classes).
double macro_f1(const std::vector<std::size_t>& gold, const std::vector<std::size_t>& pred, std::size_t n_classes,
                MacroF1Options options = {});

struct PrecisionRecall {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Both masks empty counts as perfect agreement.
PrecisionRecall token_f1(const Mask& pred, const Mask& gold);

// Half-open token range.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

double span_iou(const Span& a, const Span& b);

double iou_f1(const std::vector<Span>& pred, const std::vector<Span>& gold, double threshold = 0.5);

// Maximal runs of ones.
std::vector<Span> mask_to_spans(const Mask& mask);

// Average precision; descending score, ties broken by lower index. Throws
// DataError when gold has no positive.
double auprc(const std::vector<double>& scores, const Mask& gold);

double jaccard_overlap(const Mask& a, const Mask& b);

// Macro-F1 over the token classes {0, 1}, pooling every position of every
// post.
double rationale_macro_f1(const std::vector<Mask>& pred, const std::vector<Mask>& gold);

// Class probabilities for a token sequence. The CLS token is the predictor's
// business and never appears here.
using Predictor = std::function<std::vector<double>(const std::vector<std::string>&)>;

struct FaithfulnessInput {
  Predictor predictor;
  std::vector<std::string> tokens;
  std::vector<std::size_t> rationale;
  std::optional<std::size_t> predicted_class;  // argmax on the full post when unset
};

// m(x)_j - m(x without rationale)_j
double comprehensiveness(const FaithfulnessInput& input);
// m(x)_j - m(rationale only)_j
double sufficiency(const FaithfulnessInput& input);

std::vector<std::string> delete_positions(const std::vector<std::string>& tokens,
                                          const std::vector<std::size_t>& positions);
std::vector<std::string> keep_positions(const std::vector<std::string>& tokens,
                                        const std::vector<std::size_t>& positions);

double mean(const std::vector<double>& xs);

struct MetricsReport {
  std::string run_id;
  std::uint64_t seed = 0;
  std::optional<std::size_t> k;
  std::string dataset;
  double macro_f1 = 0;
  std::optional<double> auprc;
  std::optional<double> token_f1;
  std::optional<double> iou_f1;
  std::optional<double> comprehensiveness;
  std::optional<double> sufficiency;
  std::string method;
};

// Fields in fixed order; absent values are null.
nlohmann::ordered_json report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

}  // namespace raft::metrics
