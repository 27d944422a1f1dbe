#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "raft/corpus/post.hpp"

namespace raft::corpus {

inline constexpr std::size_t kMaxTokens = 128;
inline constexpr const char* kUserToken = "<user>";
inline constexpr const char* kUrlToken = "<url>";

// Lowercases ASCII, maps @-mentions to <user> and links to <url>, splits on
// whitespace and keeps the first `max_tokens` tokens.
std::vector<std::string> normalize_text(std::string_view raw, std::size_t max_tokens = kMaxTokens);

// Position is 1 iff at least `threshold` annotators marked it.
Mask aggregate_ground_truth(const std::vector<Mask>& annotator_masks, std::size_t threshold = 2);

// Half-open character range [begin, end) into the raw text.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct AlignedRationale {
  std::vector<std::string> tokens;
  Mask mask;
};

// Cuts the text into alternating non-rationale / rationale phrases, normalizes
// each phrase separately and concatenates tokens and 0/1 labels. Spans must be
// non-overlapping and inside the text.
AlignedRationale align_phrase_rationales(std::string_view text, std::vector<CharSpan> spans,
                                         std::size_t max_tokens = kMaxTokens);

}  // namespace raft::corpus
