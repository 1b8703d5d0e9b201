#include "frl/approx/checkpoint.hpp"

#include <fstream>

#include "frl/error.hpp"

namespace frl::approx {

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  nlohmann::json j{{"format", kCheckpointFormat}, {"sections", c.sections}};
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out << j.dump();
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.value("format", std::string{}) != kCheckpointFormat) {
    throw ConfigError("checkpoint " + path.string() + " is not in format " + kCheckpointFormat);
  }
  Checkpoint c;
  c.sections = j.at("sections").get<std::map<std::string, nlohmann::json>>();
  return c;
}

}  // namespace frl::approx
