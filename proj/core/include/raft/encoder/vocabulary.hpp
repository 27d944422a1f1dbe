#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace raft::encoder {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::size_t kClsId = 2;

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kClsToken = "<cls>";

// Token <-> id map. Ids 0..2 are reserved for <pad>, <unk>, <cls>.
class Vocabulary {
 public:
  Vocabulary();

  // Tokens ordered by descending corpus frequency, ties broken
  // lexicographically; tokens seen fewer than `min_count` times map to <unk>.
  static Vocabulary build(std::span<const std::vector<std::string>> corpus, std::size_t min_count = 1);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  // One token per line, line index = id.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  // <cls> followed by at most `max_words` ids; unknown tokens become <unk>.
  std::vector<std::size_t> encode(std::span<const std::string> words, std::size_t max_words) const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace raft::encoder
