#include "raft/corpus/similarity.hpp"

#include <algorithm>
#include <cmath>

#include "raft/numerics/errors.hpp"

namespace raft::corpus {

TermDistribution term_distribution(const std::vector<TokenizedPost>& posts) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& p : posts) {
    for (const auto& t : p.tokens) ++counts[t];
    total += p.tokens.size();
  }
  if (total == 0) throw DataError("term_distribution: corpus has no tokens");
  TermDistribution d;
  for (const auto& [token, c] : counts) d.frequency[token] = static_cast<double>(c) / static_cast<double>(total);
  return d;
}

double cosine_similarity(const TermDistribution& a, const TermDistribution& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [t, f] : a.frequency) {
    na += f * f;
    auto it = b.frequency.find(t);
    if (it != b.frequency.end()) dot += f * it->second;
  }
  for (const auto& [t, f] : b.frequency) nb += f * f;
  if (na == 0 || nb == 0) throw DataError("cosine_similarity: zero vector");
  // Clamp: rounding can push identical inputs a hair above 1.
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

}  // namespace raft::corpus
