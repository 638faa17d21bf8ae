#include "eigenloc/geo.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <unordered_map>

#include "eigenloc/error.hpp"
#include "eigenloc/parallel.hpp"
#include "eigenloc/text.hpp"

namespace eigenloc {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

const TowerUsage* find_usage(std::span<const TowerUsage> usage, std::string_view id) {
  for (const auto& u : usage)
    if (u.tower_id == id) return &u;
  return nullptr;
}

}  // namespace

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double lat1 = a.lat_deg * kDegToRad;
  const double lat2 = b.lat_deg * kDegToRad;
  const double dlat = lat2 - lat1;
  const double dlon = (b.lon_deg - a.lon_deg) * kDegToRad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double h = std::clamp(s1 * s1 + std::cos(lat1) * std::cos(lat2) * s2 * s2, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

std::vector<TowerUsage> rank_towers(std::span<const TraceRecord> user_records) {
  std::map<std::string_view, std::pair<std::set<std::int64_t>, std::size_t>> acc;
  for (const auto& r : user_records) {
    auto& [days, count] = acc[r.tower_id];
    days.insert(r.local_day());
    ++count;
  }
  std::vector<TowerUsage> out;
  out.reserve(acc.size());
  for (const auto& [id, v] : acc) out.push_back({std::string(id), v.first.size(), v.second});
  std::sort(out.begin(), out.end(), [](const TowerUsage& a, const TowerUsage& b) {
    if (a.active_days != b.active_days) return a.active_days > b.active_days;
    if (a.record_count != b.record_count) return a.record_count > b.record_count;
    return a.tower_id < b.tower_id;
  });
  return out;
}

LeaderClustering leader_cluster(std::span<const TowerUsage> ranked, const TowerRegistry& registry,
                                double radius_km) {
  if (!(radius_km > 0.0)) fail(ErrorKind::config, "leader_cluster: radius_km must be positive");
  LeaderClustering out;
  std::vector<GeoPoint> leader_pos;
  for (const auto& usage : ranked) {
    const GeoPoint* p = registry.find(usage.tower_id);
    if (!p) {
      ++out.missing_towers;
      continue;
    }
    bool joined = false;
    for (std::size_t c = 0; c < out.clusters.size(); ++c) {
      if (haversine_km(leader_pos[c], *p) <= radius_km) {
        out.clusters[c].members.push_back(usage.tower_id);
        joined = true;
        break;
      }
    }
    if (!joined) {
      out.clusters.push_back({usage.tower_id, {usage.tower_id}});
      leader_pos.push_back(*p);
    }
  }
  return out;
}

GeoPoint weighted_centroid(const TowerCluster& cluster, std::span<const TowerUsage> usage,
                           const TowerRegistry& registry) {
  double w_sum = 0.0, lat = 0.0, lon = 0.0;
  for (const auto& id : cluster.members) {
    const GeoPoint* p = registry.find(id);
    const TowerUsage* u = find_usage(usage, id);
    if (!p || !u) continue;
    const auto w = static_cast<double>(u->record_count);
    w_sum += w;
    lat += w * p->lat_deg;
    lon += w * p->lon_deg;
  }
  if (w_sum <= 0.0) {
    // No usage information: fall back to the leader position.
    const GeoPoint* p = registry.find(cluster.leader);
    return p ? *p : GeoPoint{};
  }
  return {lat / w_sum, lon / w_sum};
}

bool UserLocation::has_member(std::string_view tower_id) const {
  return std::binary_search(member_towers.begin(), member_towers.end(), tower_id);
}

UserLocations assign_presences(std::span<const TraceRecord> user_records, const LeaderClustering& clusters,
                               std::span<const TowerUsage> usage, const TowerRegistry& registry) {
  UserLocations out;
  std::unordered_map<std::string_view, int> tower_to_loc;
  const std::string user = user_records.empty() ? std::string() : user_records.front().user_id;
  for (std::size_t c = 0; c < clusters.clusters.size(); ++c) {
    const auto& cl = clusters.clusters[c];
    UserLocation loc;
    loc.user_id = user;
    loc.location_id = static_cast<int>(c);
    loc.leader_tower = cl.leader;
    loc.member_towers = cl.members;
    std::sort(loc.member_towers.begin(), loc.member_towers.end());
    loc.centroid = weighted_centroid(cl, usage, registry);
    out.locations.push_back(std::move(loc));
    for (const auto& m : cl.members) tower_to_loc.emplace(m, static_cast<int>(c));
  }
  out.record_location.reserve(user_records.size());
  for (const auto& r : user_records) {
    const auto it = tower_to_loc.find(r.tower_id);
    const int loc = it == tower_to_loc.end() ? -1 : it->second;
    out.record_location.push_back(loc);
    if (loc >= 0) ++out.locations[static_cast<std::size_t>(loc)].presence_count;
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> user_ranges(std::span<const TraceRecord> records) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= records.size(); ++i) {
    if (i == records.size() || records[i].user_id != records[begin].user_id) {
      ranges.emplace_back(begin, i);
      begin = i;
    }
  }
  if (records.empty()) ranges.clear();
  return ranges;
}

LocationIndex build_user_locations(std::span<const TraceRecord> records, const TowerRegistry& registry,
                                   double radius_km) {
  const auto ranges = user_ranges(records);
  std::vector<UserLocations> per_user(ranges.size());
  std::vector<std::size_t> missing(ranges.size(), 0);
  parallel_for(ranges.size(), [&](std::size_t u0, std::size_t u1) {
    for (std::size_t u = u0; u < u1; ++u) {
      const auto span = records.subspan(ranges[u].first, ranges[u].second - ranges[u].first);
      const auto ranked = rank_towers(span);
      const auto clusters = leader_cluster(ranked, registry, radius_km);
      missing[u] = clusters.missing_towers;
      per_user[u] = assign_presences(span, clusters, ranked, registry);
    }
  });

  LocationIndex index;
  index.record_location.reserve(records.size());
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    for (auto& loc : per_user[u].locations) index.locations.push_back(std::move(loc));
    index.record_location.insert(index.record_location.end(), per_user[u].record_location.begin(),
                                 per_user[u].record_location.end());
    index.missing_towers += missing[u];
  }
  return index;
}

void write_user_locations_csv(std::ostream& out, std::span<const UserLocation> locations) {
  out << "user_id,location_id,leader_tower,centroid_lat,centroid_lon,presence_count,member_towers\n";
  for (const auto& l : locations) {
    out << l.user_id << ',' << l.location_id << ',' << l.leader_tower << ',' << fixed9(l.centroid.lat_deg) << ','
        << fixed9(l.centroid.lon_deg) << ',' << l.presence_count << ',' << join(l.member_towers, "|") << '\n';
  }
}

std::vector<UserLocation> read_user_locations_csv(std::istream& in) {
  std::string line;
  if (!read_line(in, line) ||
      line != "user_id,location_id,leader_tower,centroid_lat,centroid_lon,presence_count,member_towers") {
    fail(ErrorKind::schema, "user locations: unexpected header");
  }
  std::vector<UserLocation> out;
  while (read_line(in, line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    const auto loc_id = f.size() == 7 ? parse_int(f[1]) : std::nullopt;
    const auto lat = f.size() == 7 ? parse_double(f[3]) : std::nullopt;
    const auto lon = f.size() == 7 ? parse_double(f[4]) : std::nullopt;
    const auto count = f.size() == 7 ? parse_int(f[5]) : std::nullopt;
    if (!loc_id || !lat || !lon || !count) fail(ErrorKind::input, "user locations: malformed row '" + line + "'");
    UserLocation l;
    l.user_id = std::string(f[0]);
    l.location_id = static_cast<int>(*loc_id);
    l.leader_tower = std::string(f[2]);
    l.centroid = {*lat, *lon};
    l.presence_count = static_cast<std::size_t>(*count);
    for (auto t : split_fields(f[6], '|'))
      if (!t.empty()) l.member_towers.emplace_back(t);
    std::sort(l.member_towers.begin(), l.member_towers.end());
    out.push_back(std::move(l));
  }
  return out;
}

std::vector<int> map_records(std::span<const TraceRecord> records, std::span<const UserLocation> locations) {
  std::unordered_map<std::string, std::unordered_map<std::string, int>> lookup;
  for (const auto& l : locations)
    for (const auto& t : l.member_towers) lookup[l.user_id][t] = l.location_id;
  std::vector<int> out(records.size(), -1);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto u = lookup.find(records[i].user_id);
    if (u == lookup.end()) continue;
    const auto t = u->second.find(records[i].tower_id);
    if (t != u->second.end()) out[i] = t->second;
  }
  return out;
}

}  // namespace eigenloc
