#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "frl/factored_mdp.hpp"

namespace frl::mdp {

/// JSON interchange for FactoredMdpSpec. Probability tables are nested arrays
/// in row-major order; unknown top-level keys are rejected.
void to_json(nlohmann::json& j, const FactoredMdpSpec& spec);
void from_json(const nlohmann::json& j, FactoredMdpSpec& spec);

FactoredMdpSpec load_spec(const std::filesystem::path& path);
void save_spec(const FactoredMdpSpec& spec, const std::filesystem::path& path);

/// Canonical serialization (stable key order, full double precision).
std::string dump_spec(const FactoredMdpSpec& spec);

}  // namespace frl::mdp
