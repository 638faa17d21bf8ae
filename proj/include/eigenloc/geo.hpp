#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "eigenloc/trace.hpp"

namespace eigenloc {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kDefaultRadiusKm = 1.0;

// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

struct TowerUsage {
  std::string tower_id;
  std::size_t active_days = 0;   // distinct local dates with at least one record
  std::size_t record_count = 0;
};

// Usage per tower for one user, ordered by descending active days, then
// descending record count, then ascending tower id.
std::vector<TowerUsage> rank_towers(std::span<const TraceRecord> user_records);

struct TowerCluster {
  std::string leader;
  std::vector<std::string> members;  // rank order, leader first
};

struct LeaderClustering {
  std::vector<TowerCluster> clusters;  // founding order
  std::size_t missing_towers = 0;      // ranked towers absent from the registry
};

// Single pass over the ranked towers: each joins the first cluster whose leader
// lies within radius_km, otherwise it founds a new cluster.
LeaderClustering leader_cluster(std::span<const TowerUsage> ranked, const TowerRegistry& registry,
                                double radius_km = kDefaultRadiusKm);

// Degree-space mean of member coordinates weighted by record count.
GeoPoint weighted_centroid(const TowerCluster& cluster, std::span<const TowerUsage> usage,
                           const TowerRegistry& registry);

struct UserLocation {
  std::string user_id;
  int location_id = 0;
  std::vector<std::string> member_towers;  // sorted
  std::string leader_tower;
  GeoPoint centroid;
  std::size_t presence_count = 0;

  bool has_member(std::string_view tower_id) const;
};

struct UserLocations {
  std::vector<UserLocation> locations;
  // Location id of each input record, aligned with the record span.
  std::vector<int> record_location;
};

// Maps every record of one user onto the cluster containing its tower. Records
// whose tower belongs to no cluster get location -1 and are not counted.
UserLocations assign_presences(std::span<const TraceRecord> user_records, const LeaderClustering& clusters,
                               std::span<const TowerUsage> usage, const TowerRegistry& registry);

// Runs ranking, leader clustering and assignment for every user of a corpus
// sorted by user id. Users are processed in parallel.
struct LocationIndex {
  std::vector<UserLocation> locations;  // sorted by (user_id, location_id)
  std::vector<int> record_location;     // aligned with corpus records
  std::size_t missing_towers = 0;
};

LocationIndex build_user_locations(std::span<const TraceRecord> records, const TowerRegistry& registry,
                                   double radius_km = kDefaultRadiusKm);

// Contiguous [begin, end) ranges of records sharing a user id.
std::vector<std::pair<std::size_t, std::size_t>> user_ranges(std::span<const TraceRecord> records);

// user_id,location_id,leader_tower,centroid_lat,centroid_lon,presence_count,member_towers
void write_user_locations_csv(std::ostream& out, std::span<const UserLocation> locations);
std::vector<UserLocation> read_user_locations_csv(std::istream& in);

// Record-to-location mapping rebuilt from member tower sets (used when the
// locations come from an artifact rather than a fresh clustering run).
std::vector<int> map_records(std::span<const TraceRecord> records, std::span<const UserLocation> locations);

}  // namespace eigenloc
