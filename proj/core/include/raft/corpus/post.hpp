#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace raft::corpus {

using Mask = std::vector<std::uint8_t>;

enum class Split { kNone, kTrain, kDev, kTest };

std::string to_string(Split s);
Split parse_split(const std::string& s);

// One datapoint. Every mask has one entry per token (no <cls> slot).
struct TokenizedPost {
  std::string id;
  std::vector<std::string> tokens;
  std::string label;
  std::vector<std::string> targets;
  std::optional<std::vector<Mask>> annotator_rationales;
  std::optional<Mask> rationale;  // ground truth
  std::string dataset_id;
  Split split = Split::kNone;

  bool operator==(const TokenizedPost&) const = default;
};

struct DatasetManifest {
  std::string dataset_id;
  std::vector<std::string> classes;
  std::vector<std::string> targets;
  std::map<std::string, std::size_t> counts;
  std::filesystem::path source_path;

  std::size_t class_index(const std::string& label) const;
  bool has_class(const std::string& label) const;

  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

nlohmann::ordered_json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

// Recomputes per-class counts from posts.
std::map<std::string, std::size_t> count_labels(const std::vector<TokenizedPost>& posts);

// Record fields in schema order: id, tokens, label, targets,
// annotator_rationales?, rationale?, split?.
nlohmann::ordered_json post_to_json(const TokenizedPost& post);

// Throws DataError describing the first violated field.
TokenizedPost post_from_json(const nlohmann::json& j, const DatasetManifest& manifest);

// Validates every record against the manifest. Errors name the 1-based line.
std::vector<TokenizedPost> load_jsonl(const std::filesystem::path& path, const DatasetManifest& manifest);
void write_jsonl(const std::filesystem::path& path, const std::vector<TokenizedPost>& posts);

std::vector<TokenizedPost> filter_split(const std::vector<TokenizedPost>& posts, Split split);

}  // namespace raft::corpus
