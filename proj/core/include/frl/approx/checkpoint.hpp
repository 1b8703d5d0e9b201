#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace frl::approx {

inline constexpr const char* kCheckpointFormat = "frl-checkpoint/1";

/// Named JSON sections (networks, optimizers, metadata) in one document.
struct Checkpoint {
  std::map<std::string, nlohmann::json> sections;
};

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
/// Throws ConfigError on a missing file or a different format tag.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace frl::approx
