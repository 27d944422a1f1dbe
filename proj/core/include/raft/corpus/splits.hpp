#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "raft/corpus/post.hpp"

namespace raft::corpus {

struct SplitSpec {
  double train = 0.7;
  double dev = 0.1;
  double test = 0.2;
  bool stratified = true;
  std::uint64_t seed = 0;

  static SplitSpec target_default(std::uint64_t seed = 0) { return {0.7, 0.1, 0.2, true, seed}; }
  static SplitSpec source_default(std::uint64_t seed = 0) { return {0.8, 0.1, 0.1, true, seed}; }

  void validate() const;
};

void to_json(nlohmann::json& j, const SplitSpec& s);
// Missing keys keep the target defaults (7:1:2, stratified).
void from_json(const nlohmann::json& j, SplitSpec& s);

// Largest-remainder allocation of `n` items over `ratios`; remainder ties go
// to the entry with the larger ratio, then the earlier entry.
std::vector<std::size_t> largest_remainder(std::size_t n, const std::vector<double>& ratios);

// Assigns a split tag to every post. Stratified splits allocate each class
// separately (classes in `class_order`); otherwise the whole pool is split.
// Throws DataError naming a class that would leave a split empty.
std::vector<TokenizedPost> make_splits(std::vector<TokenizedPost> posts, const SplitSpec& spec,
                                       const std::vector<std::string>& class_order);

// `n_sets` independent draws of exactly k posts per class (without
// replacement within a set), classes in `class_order`.
std::vector<std::vector<TokenizedPost>> sample_fewshot(const std::vector<TokenizedPost>& train, std::size_t k,
                                                       const std::vector<std::string>& class_order,
                                                       std::size_t n_sets, std::uint64_t seed);

}  // namespace raft::corpus
