#include "raft/corpus/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_set>

#include "raft/numerics/errors.hpp"
#include "raft/numerics/rng.hpp"

namespace raft::corpus {

namespace {

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
  return buf;
}

std::size_t background_count(const SyntheticConfig& c) { return c.vocab_size - c.lexicon_size - c.n_targets; }

// Inverse-CDF sampler over Zipf ranks.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      total += 1.0 / std::pow(static_cast<double>(i + 1), exponent);
      cdf_[i] = total;
    }
    for (auto& x : cdf_) x /= total;
  }
  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

std::vector<std::size_t> distinct_positions(std::size_t n, std::size_t len, Rng& rng) {
  std::vector<std::size_t> all(len);
  for (std::size_t i = 0; i < len; ++i) all[i] = i;
  for (std::size_t i = 0; i < n; ++i) std::swap(all[i], all[i + rng.index(len - i)]);
  all.resize(n);
  return all;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (classes.size() < 2) throw ContractError("synthetic: need a normal class and at least one abusive class");
  if (class_priors.size() != classes.size()) throw ContractError("synthetic: one prior per class");
  if (lexicon_size < classes.size() - 1) throw ContractError("synthetic: lexicon must cover every abusive class");
  if (vocab_size <= lexicon_size + n_targets + 1) throw ContractError("synthetic: vocab too small for background");
  if (min_len < max_lexicon + 3 || max_len < min_len) throw ContractError("synthetic: bad length range");
  if (max_lexicon == 0) throw ContractError("synthetic: max_lexicon must be positive");
  if (shift_rate < 0 || shift_rate > 1) throw ContractError("synthetic: shift_rate must be in [0, 1]");
  for (double p : class_priors)
    if (p < 0) throw ContractError("synthetic: priors must be nonnegative");
}

void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = {{"dataset_id", c.dataset_id},
       {"n_posts", c.n_posts},
       {"vocab_size", c.vocab_size},
       {"lexicon_size", c.lexicon_size},
       {"n_targets", c.n_targets},
       {"classes", c.classes},
       {"class_priors", c.class_priors},
       {"min_len", c.min_len},
       {"max_len", c.max_len},
       {"max_lexicon", c.max_lexicon},
       {"target_rate", c.target_rate},
       {"normal_marker_rate", c.normal_marker_rate},
       {"decoy_rate", c.decoy_rate},
       {"shift_rate", c.shift_rate},
       {"shift_seed", c.shift_seed},
       {"zipf_exponent", c.zipf_exponent},
       {"n_annotators", c.n_annotators},
       {"annotator_recall", c.annotator_recall},
       {"annotator_noise", c.annotator_noise}};
}

void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  const SyntheticConfig d;
  c.dataset_id = j.value("dataset_id", d.dataset_id);
  c.n_posts = j.value("n_posts", d.n_posts);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.lexicon_size = j.value("lexicon_size", d.lexicon_size);
  c.n_targets = j.value("n_targets", d.n_targets);
  c.classes = j.value("classes", d.classes);
  c.class_priors = j.value("class_priors", std::vector<double>(c.classes.size(), 1.0 / static_cast<double>(c.classes.size())));
  c.min_len = j.value("min_len", d.min_len);
  c.max_len = j.value("max_len", d.max_len);
  c.max_lexicon = j.value("max_lexicon", d.max_lexicon);
  c.target_rate = j.value("target_rate", d.target_rate);
  c.normal_marker_rate = j.value("normal_marker_rate", d.normal_marker_rate);
  c.decoy_rate = j.value("decoy_rate", d.decoy_rate);
  c.shift_rate = j.value("shift_rate", d.shift_rate);
  c.shift_seed = j.value("shift_seed", d.shift_seed);
  c.zipf_exponent = j.value("zipf_exponent", d.zipf_exponent);
  c.n_annotators = j.value("n_annotators", d.n_annotators);
  c.annotator_recall = j.value("annotator_recall", d.annotator_recall);
  c.annotator_noise = j.value("annotator_noise", d.annotator_noise);
}

std::vector<std::string> synthetic_lexicon(const SyntheticConfig& config) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < config.lexicon_size; ++i) out.push_back(numbered("lex", i, 2));
  return out;
}

std::vector<std::string> synthetic_target_names(const SyntheticConfig& config) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < config.n_targets; ++i) out.push_back(numbered("group", i, 1));
  return out;
}

SyntheticCorpus generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
  config.validate();
  const auto lexicon = synthetic_lexicon(config);
  const auto target_names = synthetic_target_names(config);
  std::vector<std::string> markers;
  for (std::size_t i = 0; i < config.n_targets; ++i) markers.push_back(numbered("grp", i, 1));

  const std::size_t n_bg = background_count(config);
  std::vector<std::string> background;
  for (std::size_t i = 0; i < n_bg; ++i) background.push_back(numbered("w", i, 3));
  {
    std::vector<std::size_t> order(n_bg);
    for (std::size_t i = 0; i < n_bg; ++i) order[i] = i;
    Rng shift_rng(config.shift_seed);
    shift_rng.shuffle(order.begin(), order.end());
    const auto n_shift = static_cast<std::size_t>(std::llround(config.shift_rate * static_cast<double>(n_bg)));
    const std::string prefix = "s" + std::to_string(config.shift_seed) + "_";
    for (std::size_t i = 0; i < n_shift; ++i) background[order[i]] = prefix + background[order[i]];
  }

  // Lexicon entries owned by each abusive class (class index >= 1).
  std::vector<std::vector<std::size_t>> class_lexicon(config.classes.size());
  for (std::size_t i = 0; i < lexicon.size(); ++i) class_lexicon[1 + i % (config.classes.size() - 1)].push_back(i);

  double prior_total = 0;
  for (double p : config.class_priors) prior_total += p;
  if (prior_total <= 0) throw ContractError("synthetic: priors sum to zero");

  ZipfSampler zipf(n_bg, config.zipf_exponent);
  Rng rng(seed);
  SyntheticCorpus out;
  out.manifest.dataset_id = config.dataset_id;
  out.manifest.classes = config.classes;
  out.manifest.targets = target_names;

  for (std::size_t n = 0; n < config.n_posts; ++n) {
    double u = rng.uniform() * prior_total;
    std::size_t cls = 0;
    while (cls + 1 < config.classes.size() && u >= config.class_priors[cls]) u -= config.class_priors[cls++];
    const bool abusive = cls != 0;

    const std::size_t len = config.min_len + rng.index(config.max_len - config.min_len + 1);
    TokenizedPost post;
    post.id = config.dataset_id + "-" + numbered("", n, 5);
    post.label = config.classes[cls];
    post.dataset_id = config.dataset_id;
    post.tokens.resize(len);
    for (auto& t : post.tokens) t = background[zipf.draw(rng)];
    Mask mask(len, 0);

    std::size_t n_lex = 0, n_mark = 0;
    bool decoy = false;
    if (abusive) {
      n_lex = 1 + rng.index(config.max_lexicon);
      if (rng.bernoulli(config.target_rate)) n_mark = 1 + rng.index(2);
    } else {
      if (rng.bernoulli(config.normal_marker_rate)) n_mark = 1;
      decoy = rng.bernoulli(config.decoy_rate);
      if (decoy) n_lex = 1;
    }
    const std::size_t n_special = n_lex + n_mark + (decoy ? 1 : 0);
    const auto positions = distinct_positions(n_special, len, rng);
    std::size_t next = 0;
    const auto& own_lexicon = abusive ? class_lexicon[cls] : class_lexicon[1 + rng.index(config.classes.size() - 1)];
    for (std::size_t i = 0; i < n_lex; ++i) {
      const auto pos = positions[next++];
      post.tokens[pos] = lexicon[own_lexicon[rng.index(own_lexicon.size())]];
      if (abusive) mask[pos] = 1;
    }
    std::set<std::string> targets;
    for (std::size_t i = 0; i < n_mark; ++i) {
      const auto g = rng.index(config.n_targets);
      post.tokens[positions[next++]] = markers[g];
      if (abusive) targets.insert(target_names[g]);
    }
    if (decoy) post.tokens[positions[next++]] = kQuoteCue;
    post.targets.assign(targets.begin(), targets.end());

    if (config.n_annotators > 0) {
      std::vector<Mask> annotators;
      for (std::size_t a = 0; a < config.n_annotators; ++a) {
        Mask m(len, 0);
        if (abusive) {
          for (std::size_t t = 0; t < len; ++t) {
            m[t] = mask[t] ? rng.bernoulli(config.annotator_recall) : rng.bernoulli(config.annotator_noise);
          }
        }
        annotators.push_back(std::move(m));
      }
      post.annotator_rationales = std::move(annotators);
    }
    post.rationale = std::move(mask);
    ++out.manifest.counts[post.label];
    out.posts.push_back(std::move(post));
  }
  for (const auto& c : config.classes) out.manifest.counts.try_emplace(c, 0);
  return out;
}

std::vector<Mask> simulate_random_rationales(const std::vector<TokenizedPost>& posts, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Mask> out;
  out.reserve(posts.size());
  for (const auto& p : posts) {
    if (!p.rationale) throw DataError("simulate_random_rationales: post " + p.id + " has no ground truth");
    const auto& gt = *p.rationale;
    const auto k = static_cast<std::size_t>(std::count(gt.begin(), gt.end(), 1));
    Mask m(gt.size(), 0);
    for (auto pos : distinct_positions(k, gt.size(), rng)) m[pos] = 1;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace raft::corpus
