#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eigenloc/cluster.hpp"
#include "eigenloc/features.hpp"
#include "eigenloc/geo.hpp"

namespace eigenloc {

enum class Role { home, work, third_place, removed };
enum class Source { kmeans, fcm_balanced, fcm_max_inference, fcm_max_accuracy, mfa_baseline };
enum class FcmMode { balanced, max_inference, max_accuracy };

const char* to_string(Role role);
const char* to_string(Source source);
const char* to_string(FcmMode mode);
Role parse_role(std::string_view s);
Source parse_source(std::string_view s);
FcmMode parse_fcm_mode(std::string_view s);
Source source_for(FcmMode mode);

// Hour windows over the 48 week-hour slots used to label cluster centroids.
double work_mass(std::span<const double> curve);  // weekday 9..18
double home_mass(std::span<const double> curve);  // weekday 19..23 and 0..6, weekend 19..23

// Role per cluster from its 48-hour presence curve: the most work-dominant
// curve (W > H) is work; up to two home-dominant curves with above-median total
// mass are home; everything else, including all-zero curves, is third place.
std::vector<Role> label_clusters(const RowMatrix& curves);

struct RoleAssignment {
  LocationKey key;
  Role role = Role::third_place;
  double membership = 1.0;
  Source source = Source::kmeans;
};

std::vector<RoleAssignment> assign_roles_hard(std::span<const LocationKey> keys, const HardClustering& clustering,
                                              std::span<const Role> cluster_roles);

std::vector<RoleAssignment> assign_roles_fuzzy(std::span<const LocationKey> keys, const FuzzyClustering& clustering,
                                               std::span<const Role> cluster_roles, FcmMode mode);

struct MfaResult {
  std::string user_id;
  std::optional<int> home;
  std::optional<int> work;
};

// Per user, the location with the most weekday presences in [00:00, 08:00) and
// [19:00, 24:00) is home and in [09:00, 18:00) is work. Ties go to the lower
// location id. Users without weekday records get no inference. `counts` must be
// grouped by user.
std::vector<MfaResult> mfa_baseline(std::span<const PresenceCounts> counts);

// One assignment row per inferred role (home and work may share a location).
std::vector<RoleAssignment> mfa_assignments(std::span<const MfaResult> results);

struct GroundTruth {
  struct Entry {
    std::string home_tower;
    std::optional<std::string> work_tower;
  };
  std::map<std::string, Entry> users;
};

// CSV `user_id,role,tower_id` with role in {home, work}.
GroundTruth parse_ground_truth(std::istream& in);
void write_ground_truth_csv(std::ostream& out, const GroundTruth& truth);

struct RoleMetrics {
  std::size_t total = 0;     // users with ground truth for the role
  std::size_t inferred = 0;  // of those, users with an inference
  std::size_t correct = 0;
  std::optional<double> accuracy() const;
  double inference_rate() const;
};

struct EvalMetrics {
  RoleMetrics home;
  RoleMetrics work;
  std::size_t excluded_users = 0;  // ground truth tower unknown to the registry
};

inline constexpr double kMatchRadiusKm = 1.0;

EvalMetrics evaluate(std::span<const RoleAssignment> assignments, const GroundTruth& truth,
                     std::span<const UserLocation> locations, const TowerRegistry& registry);

// Representative inferred location per user for a role, if any.
std::map<std::string, const UserLocation*> representatives(std::span<const RoleAssignment> assignments, Role role,
                                                           std::span<const UserLocation> locations);

struct MethodReport {
  std::string method;
  EvalMetrics metrics;
};

struct ComparisonReport {
  std::vector<MethodReport> methods;
  std::string baseline = "mfa_baseline";

  // (acc - acc_baseline) / acc_baseline, or nullopt when undefined.
  std::optional<double> improvement(const MethodReport& m, Role role) const;
  const MethodReport* find(std::string_view method) const;
};

std::string comparison_json(const ComparisonReport& report);
std::string comparison_table(const ComparisonReport& report);

// cell_lat,cell_lon,home_count,work_count over representative home/work centroids.
void write_density_csv(std::ostream& out, std::span<const RoleAssignment> assignments,
                       std::span<const UserLocation> locations, double cell_deg = 0.01);

void write_assignments_csv(std::ostream& out, std::span<const RoleAssignment> assignments);
std::vector<RoleAssignment> read_assignments_csv(std::istream& in);

}  // namespace eigenloc
