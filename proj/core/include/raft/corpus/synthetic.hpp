#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "raft/corpus/post.hpp"

namespace raft::corpus {

// Generator for abusive-language-like corpora with planted rationales.
//
// Token types: `lexicon_size` abusive lexicon tokens ("lex00"...), `n_targets`
// community marker tokens ("grp0"...) with target names ("group0"...), and the
// remaining `vocab_size - lexicon_size - n_targets` background tokens
// ("w000"...) drawn from a Zipf law. classes[0] is the non-abusive class; the
// lexicon is dealt round-robin over the abusive classes.
//
// Abusive posts carry 1..max_lexicon lexicon tokens (the ground-truth
// rationale is exactly their positions) and, with probability `target_rate`,
// one or two community markers whose groups become the post's targets. Normal
// posts carry no lexicon token except decoys: with probability `decoy_rate` a
// normal post holds one lexicon token together with the "quote" cue token, and
// that lexicon token is not a rationale.
//
// Domain shift: a `shift_rate` fraction of background types (chosen by
// `shift_seed`) is renamed to domain-specific types. Post sampling does not
// depend on the shift, so two corpora with the same seed differ only by the
// substitution.
struct SyntheticConfig {
  std::string dataset_id = "synthetic";
  std::size_t n_posts = 5000;
  std::size_t vocab_size = 800;
  std::size_t lexicon_size = 40;
  std::size_t n_targets = 8;
  std::vector<std::string> classes = {"normal", "abusive"};
  std::vector<double> class_priors = {0.5, 0.5};
  std::size_t min_len = 8;
  std::size_t max_len = 20;
  std::size_t max_lexicon = 3;
  double target_rate = 0.7;
  double normal_marker_rate = 0.3;
  double decoy_rate = 0.0;
  double shift_rate = 0.0;
  std::uint64_t shift_seed = 1;
  double zipf_exponent = 1.0;
  std::size_t n_annotators = 3;
  double annotator_recall = 0.85;
  double annotator_noise = 0.03;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticConfig& c);
void from_json(const nlohmann::json& j, SyntheticConfig& c);

inline constexpr const char* kQuoteCue = "quote";

std::vector<std::string> synthetic_lexicon(const SyntheticConfig& config);
std::vector<std::string> synthetic_target_names(const SyntheticConfig& config);

struct SyntheticCorpus {
  std::vector<TokenizedPost> posts;
  DatasetManifest manifest;
};

SyntheticCorpus generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

// Per post, a uniformly random index set with the same size as its ground
// truth rationale.
std::vector<Mask> simulate_random_rationales(const std::vector<TokenizedPost>& posts, std::uint64_t seed);

}  // namespace raft::corpus
