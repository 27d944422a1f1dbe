#include "raft/corpus/splits.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "raft/numerics/errors.hpp"
#include "raft/numerics/rng.hpp"

namespace raft::corpus {

void SplitSpec::validate() const {
  if (!(train > 0 && dev > 0 && test > 0)) throw ContractError("split ratios must be positive");
  if (std::abs(train + dev + test - 1.0) > 1e-9) throw ContractError("split ratios must sum to 1");
}

void to_json(nlohmann::json& j, const SplitSpec& s) {
  j = {{"train", s.train}, {"dev", s.dev}, {"test", s.test}, {"stratified", s.stratified}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SplitSpec& s) {
  const SplitSpec d;
  s.train = j.value("train", d.train);
  s.dev = j.value("dev", d.dev);
  s.test = j.value("test", d.test);
  s.stratified = j.value("stratified", d.stratified);
  s.seed = j.value("seed", d.seed);
}

std::vector<std::size_t> largest_remainder(std::size_t n, const std::vector<double>& ratios) {
  std::vector<std::size_t> counts(ratios.size());
  std::vector<double> remainder(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double quota = static_cast<double>(n) * ratios[i];
    // Nudge before flooring so 0.7 * 100 lands on 70, not 69.
    counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    remainder[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (std::abs(remainder[a] - remainder[b]) > 1e-12) return remainder[a] > remainder[b];
    return ratios[a] > ratios[b];
  });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % order.size()]];
  return counts;
}

std::vector<TokenizedPost> make_splits(std::vector<TokenizedPost> posts, const SplitSpec& spec,
                                       const std::vector<std::string>& class_order) {
  spec.validate();
  const std::vector<double> ratios = {spec.train, spec.dev, spec.test};
  const Split tags[3] = {Split::kTrain, Split::kDev, Split::kTest};
  Rng rng(spec.seed);

  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::string> group_names;
  if (spec.stratified) {
    for (const auto& c : class_order) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < posts.size(); ++i)
        if (posts[i].label == c) members.push_back(i);
      if (members.empty()) continue;
      groups.push_back(std::move(members));
      group_names.push_back(c);
    }
    std::size_t covered = 0;
    for (const auto& g : groups) covered += g.size();
    if (covered != posts.size()) throw DataError("make_splits: some labels are missing from the class order");
  } else {
    groups.emplace_back(posts.size());
    std::iota(groups[0].begin(), groups[0].end(), 0);
    group_names.push_back("<all>");
  }

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    auto& members = groups[gi];
    const auto counts = largest_remainder(members.size(), ratios);
    for (std::size_t s = 0; s < 3; ++s) {
      if (counts[s] == 0) {
        throw DataError("class '" + group_names[gi] + "' has " + std::to_string(members.size()) +
                        " posts, too few to populate every split");
      }
    }
    rng.shuffle(members.begin(), members.end());
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t c = 0; c < counts[s]; ++c) posts[members[pos++]].split = tags[s];
  }
  return posts;
}

std::vector<std::vector<TokenizedPost>> sample_fewshot(const std::vector<TokenizedPost>& train, std::size_t k,
                                                       const std::vector<std::string>& class_order,
                                                       std::size_t n_sets, std::uint64_t seed) {
  if (k == 0) throw ContractError("sample_fewshot: k must be positive");
  std::vector<std::vector<std::size_t>> pools;
  for (const auto& c : class_order) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (train[i].label == c) members.push_back(i);
    if (members.size() < k) {
      throw DataError("class '" + c + "' has " + std::to_string(members.size()) + " training posts, fewer than k=" +
                      std::to_string(k));
    }
    pools.push_back(std::move(members));
  }
  Rng rng(seed);
  std::vector<std::vector<TokenizedPost>> sets;
  for (std::size_t s = 0; s < n_sets; ++s) {
    Rng set_rng(rng.fork());
    std::vector<TokenizedPost> set;
    set.reserve(k * pools.size());
    for (auto pool : pools) {
      // partial Fisher-Yates: first k entries become the sample
      for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + set_rng.index(pool.size() - i)]);
      for (std::size_t i = 0; i < k; ++i) set.push_back(train[pool[i]]);
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

}  // namespace raft::corpus
