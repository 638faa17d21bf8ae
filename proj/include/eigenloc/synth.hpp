#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eigenloc/inference.hpp"
#include "eigenloc/trace.hpp"

namespace eigenloc {

enum class Archetype { commuter, near_home_worker, non_worker, night_shifter };

const char* to_string(Archetype a);

struct ArchetypeMix {
  double commuter = 0.60;
  double near_home_worker = 0.20;
  double non_worker = 0.15;
  double night_shifter = 0.05;
};

struct TowerGrid {
  double spacing_km = 0.8;
  double extent_km = 16.0;
  // Uniform jitter of each grid node, as a fraction of the spacing.
  double jitter = 0.25;
};

struct SynthConfig {
  std::size_t n_agents = 500;
  int days = 60;
  ArchetypeMix archetype_mix;
  TowerGrid tower_grid;
  std::uint64_t rng_seed = 42;
  // Probability that an agent's home-hour events at home are thinned.
  double landline_suppression_prob = 0.3;
  // Fraction of home-hour events at home kept for a thinned agent.
  double landline_keep_rate = 0.05;
  // Base probability of a third-place excursion on a given day.
  double third_place_prob = 0.3;
  // Multiplier on every agent's call-rate curve.
  double rate_scale = 1.0;
  std::string start_date = "2024-03-04";
  std::string timezone = "Asia/Shanghai";
  GeoPoint center{31.23, 121.47};

  // Throws a config error when out of range.
  void validate() const;
};

SynthConfig synth_config_from_json(std::string_view text);
std::string synth_config_json(const SynthConfig& config);

struct AgentProfile {
  std::string user_id;
  Archetype archetype = Archetype::commuter;
  std::string home_tower;
  std::optional<std::string> work_tower;
  std::array<double, kWeekHours> call_rate_curve{};
  std::vector<std::string> third_place_towers;
  double third_place_prob = 0.0;
  bool landline_suppressed = false;
};

struct SynthCorpus {
  std::vector<TraceRecord> records;  // sorted by (user_id, epoch_s, tower_id)
  TowerRegistry registry;
  GroundTruth ground_truth;
  std::vector<AgentProfile> agents;
};

// Seeded corpus with known home/work towers. Agents are generated from per-agent
// derived seeds, so the result does not depend on the thread count.
SynthCorpus generate_corpus(const SynthConfig& config);

}  // namespace eigenloc
