#include "frl/ope.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "frl/error.hpp"

namespace frl::ope {

double softened_probability(bool greedy, double epsilon, std::size_t num_actions) {
  if (num_actions < 2) throw DomainError("softening needs at least two actions");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("softening epsilon must lie in [0, 1]");
  return greedy ? 1.0 - epsilon : epsilon / static_cast<double>(num_actions - 1);
}

PolicyProbability soften(GreedyPolicy greedy, std::size_t num_actions, double epsilon) {
  softened_probability(true, epsilon, num_actions);  // validates
  return [greedy = std::move(greedy), num_actions, epsilon](const EpisodeStep& step) {
    return softened_probability(greedy(step) == step.action, epsilon, num_actions);
  };
}

double episode_return(const EpisodeLog& e, double discount) {
  double g = 0.0, scale = 1.0;
  for (const auto& st : e.steps) {
    g += scale * st.reward;
    scale *= discount;
  }
  return g;
}

OpeResult wis_ess(const std::vector<EpisodeLog>& episodes, const PolicyProbability& target, const WisOptions& opts) {
  const std::size_t m = episodes.size();
  if (m == 0) throw DomainError("off-policy evaluation needs at least one episode");
  std::size_t horizon = 0;
  for (const auto& e : episodes) horizon = std::max(horizon, e.steps.size());

  // cumulative[j][t] = min(rho_{1:t+1}, clip), carried forward past the episode end.
  std::vector<std::vector<double>> cumulative(m, std::vector<double>(horizon, 0.0));
  OpeResult res;
  for (std::size_t j = 0; j < m; ++j) {
    const auto& steps = episodes[j].steps;
    if (steps.empty()) throw DataError("episode " + std::to_string(j) + " is empty");
    double rho = 1.0;
    bool clipped = false;
    for (std::size_t t = 0; t < horizon; ++t) {
      if (t < steps.size()) {
        const double pb = steps[t].propensity;
        if (!(pb > 0.0 && pb <= 1.0)) {
          throw DataError("episode " + std::to_string(j) + " step " + std::to_string(t) +
                          " has behavior propensity " + std::to_string(pb));
        }
        rho *= target(steps[t]) / pb;
      }
      if (rho > opts.clip) clipped = true;
      cumulative[j][t] = std::min(rho, opts.clip);
    }
    res.clipped += clipped ? 1 : 0;
  }
  res.w.assign(horizon, 0.0);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t j = 0; j < m; ++j) res.w[t] += cumulative[j][t];
    res.w[t] /= static_cast<double>(m);
  }
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t last = (opts.pad_to_horizon ? horizon : episodes[j].steps.size()) - 1;
    const double weight = cumulative[j][last];
    res.final_ratios.push_back(cumulative[j][episodes[j].steps.size() - 1]);
    if (res.w[last] > 0.0) res.wis += weight / res.w[last] * episode_return(episodes[j], opts.discount);
    sum += res.final_ratios.back();
    sum_sq += res.final_ratios.back() * res.final_ratios.back();
  }
  res.wis /= static_cast<double>(m);
  res.ess = sum_sq > 0.0 ? sum * sum / sum_sq : 0.0;
  double ws = 0.0, ws_sq = 0.0;
  for (double x : res.w) {
    ws += x;
    ws_sq += x * x;
  }
  res.ess_per_step = ws_sq > 0.0 ? ws * ws / ws_sq : 0.0;
  if (opts.per_step_ess) std::swap(res.ess, res.ess_per_step);
  return res;
}

std::string select_model(const std::vector<Candidate>& candidates, double ess_cutoff) {
  const Candidate* best = nullptr;
  double max_ess = 0.0;
  for (const auto& c : candidates) {
    max_ess = std::max(max_ess, c.ess);
    if (c.ess < ess_cutoff) continue;
    if (!best || c.wis > best->wis || (c.wis == best->wis && (c.ess > best->ess || (c.ess == best->ess && c.id < best->id)))) {
      best = &c;
    }
  }
  if (!best) {
    throw SelectionError("no candidate reaches ESS cutoff " + std::to_string(ess_cutoff) + " (max available ESS " +
                         std::to_string(max_ess) + ")");
  }
  return best->id;
}

void to_json(nlohmann::json& j, const EpisodeLog& e) {
  j = nlohmann::json{{"schema", kEpisodeSchema}, {"steps", nlohmann::json::array()}};
  for (const auto& s : e.steps) {
    nlohmann::json step{{"state", s.state}, {"action", s.action}, {"reward", s.reward}, {"propensity", s.propensity}};
    if (s.state_index) step["state_index"] = *s.state_index;
    j["steps"].push_back(std::move(step));
  }
  j["final_state"] = e.final_state;
  if (e.final_state_index) j["final_state_index"] = *e.final_state_index;
  j["terminal"] = e.terminal;
}

void from_json(const nlohmann::json& j, EpisodeLog& e) {
  if (j.value("schema", std::string{}) != kEpisodeSchema) {
    throw ConfigError("episode record is not in schema " + std::string(kEpisodeSchema));
  }
  e.steps.clear();
  for (const auto& step : j.at("steps")) {
    EpisodeStep s;
    step.at("state").get_to(s.state);
    step.at("action").get_to(s.action);
    s.reward = step.at("reward").get<double>();
    s.propensity = step.at("propensity").get<double>();
    if (step.contains("state_index")) s.state_index = step.at("state_index").get<std::size_t>();
    e.steps.push_back(std::move(s));
  }
  e.final_state = j.value("final_state", std::vector<double>{});
  e.final_state_index.reset();
  if (j.contains("final_state_index")) e.final_state_index = j.at("final_state_index").get<std::size_t>();
  e.terminal = j.value("terminal", false);
}

void to_json(nlohmann::json& j, const OpeResult& r) {
  j = nlohmann::json{{"wis", r.wis},   {"ess", r.ess},         {"ess_per_step", r.ess_per_step},
                     {"w", r.w},       {"final_ratios", r.final_ratios}, {"clipped", r.clipped}};
}

void save_episodes(const std::vector<EpisodeLog>& episodes, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : episodes) out << nlohmann::json(e).dump() << '\n';
}

std::vector<EpisodeLog> load_episodes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read episode file " + path.string());
  std::vector<EpisodeLog> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<EpisodeLog>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace frl::ope
