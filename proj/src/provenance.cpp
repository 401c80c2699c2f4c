#include "windclf/provenance.hpp"

#include <cstdio>

#include "windclf/scada_data.hpp"

namespace windclf {

std::string content_hash(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::vector<std::string> header_lines(const Provenance& p) {
  std::vector<std::string> lines{"tool: windclf " + p.tool_version, "command: " + p.command,
                                 "config_hash: " + p.config_hash};
  for (const auto& [name, seed] : p.seeds) lines.push_back("seed." + name + ": " + std::to_string(seed));
  for (const auto& [name, hash] : p.inputs) lines.push_back("input: " + name + " " + hash);
  return lines;
}

nlohmann::json to_json(const Provenance& p) {
  nlohmann::json seeds = nlohmann::json::object();
  for (const auto& [name, seed] : p.seeds) seeds[name] = seed;
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& [name, hash] : p.inputs) inputs.push_back({{"file", name}, {"hash", hash}});
  return {{"tool", "windclf"},
          {"tool_version", p.tool_version},
          {"command", p.command},
          {"config_hash", p.config_hash},
          {"seeds", seeds},
          {"inputs", inputs}};
}

}  // namespace windclf
