#include "raft/encoder/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "raft/numerics/errors.hpp"

namespace raft::encoder {

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
  add(kClsToken);
}

void Vocabulary::add(const std::string& token) {
  if (index_.count(token) != 0) throw DataError("duplicate vocabulary token: " + token);
  index_.emplace(token, tokens_.size());
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& post : corpus)
    for (const auto& t : post) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [token, c] : counts) {
    if (c >= min_count && token != kPadToken && token != kUnkToken && token != kClsToken) ranked.emplace_back(token, c);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [token, c] : ranked) v.add(token);
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 3 || tokens[0] != kPadToken || tokens[1] != kUnkToken || tokens[2] != kClsToken) {
    throw DataError("vocabulary must start with <pad>, <unk>, <cls>");
  }
  Vocabulary v;
  for (std::size_t i = 3; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary file: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

std::vector<std::size_t> Vocabulary::encode(std::span<const std::string> words, std::size_t max_words) const {
  std::vector<std::size_t> ids;
  const auto n = std::min(words.size(), max_words);
  ids.reserve(n + 1);
  ids.push_back(kClsId);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(id(words[i]));
  return ids;
}

}  // namespace raft::encoder
