#pragma once

#include <map>
#include <string>
#include <vector>

#include "raft/corpus/post.hpp"

namespace raft::corpus {

// Relative token frequency over every token of a corpus; sums to 1.
struct TermDistribution {
  std::map<std::string, double> frequency;
};

TermDistribution term_distribution(const std::vector<TokenizedPost>& posts);

// Cosine of the two frequency vectors over the union vocabulary.
double cosine_similarity(const TermDistribution& a, const TermDistribution& b);

}  // namespace raft::corpus
