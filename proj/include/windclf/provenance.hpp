#pragma once

// Provenance stamped on every artifact the CLI writes.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace windclf {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct Provenance {
  std::string command;
  std::string config_hash;  // 16 hex digits
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  /// (file name, content hash) of every input file.
  std::vector<std::pair<std::string, std::string>> inputs;
  std::string tool_version = std::string(kToolVersion);
};

/// FNV-1a of the bytes, as 16 lowercase hex digits.
std::string content_hash(std::string_view bytes);

/// `key: value` lines, suitable as `# ` comments in CSV and text outputs.
std::vector<std::string> header_lines(const Provenance& p);
nlohmann::json to_json(const Provenance& p);

}  // namespace windclf
