#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eigenloc/eigenbasis.hpp"
#include "eigenloc/error.hpp"
#include "eigenloc/inference.hpp"

namespace eigenloc {

struct PipelineConfig {
  std::string trace_path;
  std::string towers_path;
  std::string ground_truth_path;  // empty: evaluation is skipped
  std::string output_dir = "out";
  std::string timezone;           // mandatory

  double radius_km = 1.0;
  int eigen_k = kDefaultEigenK;
  std::optional<int> cluster_k = 4;  // nullopt selects k by bootstrapped DB index
  double fcm_m = 2.0;
  FcmMode fcm_mode = FcmMode::balanced;
  struct DbBootstrap {
    int k_min = 2;
    int k_max = 8;
    int replicates = 50;
  } db_bootstrap;
  std::uint64_t seed = 0;
  FeatureSpace feature_space = FeatureSpace::reconstructed;
  int n_init = 10;
  unsigned threads = 0;  // 0: hardware concurrency

  // Throws a config error when a field is out of range.
  void validate() const;
};

// Applies the keys present in a JSON document on top of `base`.
PipelineConfig apply_config_json(PipelineConfig base, std::string_view text);
std::string config_json(const PipelineConfig& config);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineSummary {
  std::vector<StageTiming> timings;
  int cluster_k = 0;
  bool auto_k = false;
  bool evaluated = false;
};

// Individual stages. Each reads its predecessors' artifacts from the output
// directory and writes its own.
namespace stages {
void ingest(const PipelineConfig& cfg);
void cluster_towers(const PipelineConfig& cfg);
void features(const PipelineConfig& cfg);
void eigen(const PipelineConfig& cfg);
int select_k(const PipelineConfig& cfg);
int cluster(const PipelineConfig& cfg);
void label(const PipelineConfig& cfg);
void baseline(const PipelineConfig& cfg);
// Returns false when no ground truth was configured.
bool evaluate(const PipelineConfig& cfg);
}  // namespace stages

// Full run: every stage in order plus manifest.json. A failing stage raises
// StageError naming it.
PipelineSummary run_pipeline(const PipelineConfig& cfg);

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, ErrorKind kind, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)), kind_(kind) {}
  const std::string& stage() const { return stage_; }
  ErrorKind kind() const { return kind_; }

 private:
  std::string stage_;
  ErrorKind kind_;
};

// Artifact file names inside the output directory.
namespace artifact {
inline constexpr const char* validation = "validation.json";
inline constexpr const char* trace = "trace.clean.csv";
inline constexpr const char* towers = "towers.clean.csv";
inline constexpr const char* locations = "user_locations.csv";
inline constexpr const char* locations_meta = "user_locations.json";
inline constexpr const char* counts = "presence_counts.csv";
inline constexpr const char* features = "features.csv";
inline constexpr const char* eigenbasis = "eigenbasis.json";
inline constexpr const char* eigenlocations = "eigenlocations.csv";
inline constexpr const char* db_bootstrap = "db_bootstrap.csv";
inline constexpr const char* select_k = "select_k.json";
inline constexpr const char* kmeans = "kmeans.json";
inline constexpr const char* fcm = "fcm.json";
inline constexpr const char* fcm_membership = "fcm_membership.csv";
inline constexpr const char* cluster_roles = "cluster_roles.json";
inline constexpr const char* assignments = "assignments.csv";
inline constexpr const char* baseline = "baseline_assignments.csv";
inline constexpr const char* report = "report.json";
inline constexpr const char* report_table = "report.txt";
inline constexpr const char* density = "density.csv";
inline constexpr const char* manifest = "manifest.json";
}  // namespace artifact

}  // namespace eigenloc
