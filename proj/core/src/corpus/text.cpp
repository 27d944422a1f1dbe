#include "raft/corpus/text.hpp"

#include <algorithm>
#include <cctype>

#include "raft/numerics/errors.hpp"

namespace raft::corpus {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::string normalize_token(std::string_view word) {
  std::string lower(word);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower.size() > 1 && lower[0] == '@') return kUserToken;
  if (starts_with(lower, "http://") || starts_with(lower, "https://") || starts_with(lower, "www.")) return kUrlToken;
  return lower;
}

}  // namespace

std::vector<std::string> normalize_text(std::string_view raw, std::size_t max_tokens) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < raw.size() && tokens.size() < max_tokens) {
    while (i < raw.size() && is_space(raw[i])) ++i;
    const std::size_t start = i;
    while (i < raw.size() && !is_space(raw[i])) ++i;
    if (i > start) tokens.push_back(normalize_token(raw.substr(start, i - start)));
  }
  return tokens;
}

Mask aggregate_ground_truth(const std::vector<Mask>& annotator_masks, std::size_t threshold) {
  if (annotator_masks.empty()) throw DataError("aggregate_ground_truth needs at least one annotator mask");
  const auto n = annotator_masks.front().size();
  std::vector<std::size_t> votes(n, 0);
  for (const auto& m : annotator_masks) {
    if (m.size() != n) throw DataError("annotator masks have different lengths");
    for (std::size_t i = 0; i < n; ++i) votes[i] += m[i] != 0;
  }
  Mask out(n, 0);
  for (std::size_t i = 0; i < n; ++i) out[i] = votes[i] >= threshold ? 1 : 0;
  return out;
}

AlignedRationale align_phrase_rationales(std::string_view text, std::vector<CharSpan> spans, std::size_t max_tokens) {
  std::sort(spans.begin(), spans.end(), [](const CharSpan& a, const CharSpan& b) { return a.begin < b.begin; });
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].begin >= spans[i].end || spans[i].end > text.size()) {
      throw DataError("rationale span [" + std::to_string(spans[i].begin) + ", " + std::to_string(spans[i].end) +
                      ") is empty or outside the text");
    }
    if (i > 0 && spans[i].begin < spans[i - 1].end) throw DataError("rationale spans overlap");
  }
  AlignedRationale out;
  auto emit = [&](std::size_t begin, std::size_t end, bool rationale) {
    if (end <= begin) return;
    for (auto& t : normalize_text(text.substr(begin, end - begin), max_tokens)) {
      out.tokens.push_back(std::move(t));
      out.mask.push_back(rationale ? 1 : 0);
    }
  };
  std::size_t cursor = 0;
  for (const auto& s : spans) {
    emit(cursor, s.begin, false);
    emit(s.begin, s.end, true);
    cursor = s.end;
  }
  emit(cursor, text.size(), false);
  if (out.tokens.size() > max_tokens) {
    out.tokens.resize(max_tokens);
    out.mask.resize(max_tokens);
  }
  return out;
}

}  // namespace raft::corpus
