#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace raft::harness {

// Plain-text table with left-aligned text and right-aligned numeric columns.
struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render() const;
};

// Fixed notation with `precision` decimals.
std::string fixed(double v, int precision = 4);

// Pretty-printed with a trailing newline. Creates parent directories.
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace raft::harness
