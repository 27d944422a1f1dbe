#include "raft/corpus/post.hpp"

#include <algorithm>
#include <fstream>

#include "raft/numerics/errors.hpp"

namespace raft::corpus {

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kDev:
      return "dev";
    case Split::kTest:
      return "test";
    case Split::kNone:
      break;
  }
  return "";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw DataError("unknown split '" + s + "'");
}

std::size_t DatasetManifest::class_index(const std::string& label) const {
  auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) throw DataError("label '" + label + "' not in class set of " + dataset_id);
  return static_cast<std::size_t>(it - classes.begin());
}

bool DatasetManifest::has_class(const std::string& label) const {
  return std::find(classes.begin(), classes.end(), label) != classes.end();
}

nlohmann::ordered_json manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["dataset_id"] = m.dataset_id;
  j["classes"] = m.classes;
  j["targets"] = m.targets;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& c : m.classes) counts[c] = m.counts.count(c) ? m.counts.at(c) : 0;
  j["counts"] = counts;
  return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.dataset_id = j.at("dataset_id").get<std::string>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.targets = j.value("targets", std::vector<std::string>{});
    if (j.contains("counts")) m.counts = j.at("counts").get<std::map<std::string, std::size_t>>();
    if (m.classes.empty()) throw DataError("manifest declares no classes");
    for (const auto& [label, n] : m.counts) {
      if (!m.has_class(label)) throw DataError("manifest counts unknown class '" + label + "'");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  auto m = manifest_from_json(j);
  m.source_path = path;
  return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << manifest_to_json(*this).dump(2) << '\n';
}

std::map<std::string, std::size_t> count_labels(const std::vector<TokenizedPost>& posts) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : posts) ++counts[p.label];
  return counts;
}

nlohmann::ordered_json post_to_json(const TokenizedPost& post) {
  nlohmann::ordered_json j;
  j["id"] = post.id;
  j["tokens"] = post.tokens;
  j["label"] = post.label;
  j["targets"] = post.targets;
  if (post.annotator_rationales) j["annotator_rationales"] = *post.annotator_rationales;
  if (post.rationale) j["rationale"] = *post.rationale;
  if (post.split != Split::kNone) j["split"] = to_string(post.split);
  return j;
}

namespace {

Mask parse_mask(const nlohmann::json& j, std::size_t expected, const std::string& field) {
  if (!j.is_array()) throw DataError(field + " must be an array");
  Mask m;
  m.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
      throw DataError(field + " entries must be 0 or 1");
    }
    m.push_back(static_cast<std::uint8_t>(v.get<int>()));
  }
  if (m.size() != expected) {
    throw DataError(field + " has " + std::to_string(m.size()) + " entries for " + std::to_string(expected) + " tokens");
  }
  return m;
}

}  // namespace

TokenizedPost post_from_json(const nlohmann::json& j, const DatasetManifest& manifest) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  TokenizedPost p;
  try {
    p.id = j.at("id").get<std::string>();
    p.tokens = j.at("tokens").get<std::vector<std::string>>();
    p.label = j.at("label").get<std::string>();
    p.targets = j.value("targets", std::vector<std::string>{});
    if (j.contains("split")) p.split = parse_split(j.at("split").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad field: ") + e.what());
  }
  if (!manifest.has_class(p.label)) throw DataError("unknown label '" + p.label + "'");
  for (const auto& t : p.targets) {
    if (std::find(manifest.targets.begin(), manifest.targets.end(), t) == manifest.targets.end()) {
      throw DataError("unknown target '" + t + "'");
    }
  }
  if (j.contains("annotator_rationales")) {
    const auto& a = j.at("annotator_rationales");
    if (!a.is_array()) throw DataError("annotator_rationales must be an array of masks");
    std::vector<Mask> masks;
    for (const auto& m : a) masks.push_back(parse_mask(m, p.tokens.size(), "annotator_rationales"));
    p.annotator_rationales = std::move(masks);
  }
  if (j.contains("rationale")) p.rationale = parse_mask(j.at("rationale"), p.tokens.size(), "rationale");
  p.dataset_id = manifest.dataset_id;
  return p;
}

std::vector<TokenizedPost> load_jsonl(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<TokenizedPost> posts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed JSON: ") + e.what());
      }
      posts.push_back(post_from_json(j, manifest));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!manifest.counts.empty()) {
    const auto actual = count_labels(posts);
    for (const auto& c : manifest.classes) {
      const auto want = manifest.counts.count(c) ? manifest.counts.at(c) : 0;
      const auto got = actual.count(c) ? actual.at(c) : 0;
      if (want != got) {
        throw DataError("manifest count for '" + c + "' is " + std::to_string(want) + " but " + path.string() +
                        " holds " + std::to_string(got));
      }
    }
  }
  return posts;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<TokenizedPost>& posts) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : posts) out << post_to_json(p).dump() << '\n';
}

std::vector<TokenizedPost> filter_split(const std::vector<TokenizedPost>& posts, Split split) {
  std::vector<TokenizedPost> out;
  std::copy_if(posts.begin(), posts.end(), std::back_inserter(out), [split](const auto& p) { return p.split == split; });
  return out;
}

}  // namespace raft::corpus
