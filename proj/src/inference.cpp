#include "eigenloc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "eigenloc/error.hpp"
#include "eigenloc/text.hpp"

namespace eigenloc {
namespace {

using Index = Eigen::Index;

double sum_range(std::span<const double> curve, int first, int last) {
  double s = 0.0;
  for (int h = first; h <= last; ++h) s += curve[static_cast<std::size_t>(h)];
  return s;
}

std::uint64_t sum_counts(const HourCounts& c, int first, int last) {
  std::uint64_t s = 0;
  for (int h = first; h <= last; ++h) s += c[static_cast<std::size_t>(h)];
  return s;
}

// Index of the largest entry, ties to the lower index; `skip` is excluded.
Index row_argmax(const RowMatrix& m, Index row, Index skip = -1) {
  Index arg = -1;
  for (Index c = 0; c < m.cols(); ++c) {
    if (c == skip) continue;
    if (arg < 0 || m(row, c) > m(row, arg)) arg = c;
  }
  return arg;
}

std::map<std::pair<std::string, int>, const UserLocation*> location_lookup(std::span<const UserLocation> locations) {
  std::map<std::pair<std::string, int>, const UserLocation*> out;
  for (const auto& l : locations) out[{l.user_id, l.location_id}] = &l;
  return out;
}

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << (*v * 100.0) << '%';
  return os.str();
}

std::string ratio(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << *v;
  return os.str();
}

}  // namespace

const char* to_string(Role role) {
  switch (role) {
    case Role::home: return "home";
    case Role::work: return "work";
    case Role::third_place: return "third_place";
    case Role::removed: return "removed";
  }
  return "third_place";
}

const char* to_string(Source source) {
  switch (source) {
    case Source::kmeans: return "kmeans";
    case Source::fcm_balanced: return "fcm_balanced";
    case Source::fcm_max_inference: return "fcm_max_inference";
    case Source::fcm_max_accuracy: return "fcm_max_accuracy";
    case Source::mfa_baseline: return "mfa_baseline";
  }
  return "kmeans";
}

const char* to_string(FcmMode mode) {
  switch (mode) {
    case FcmMode::balanced: return "balanced";
    case FcmMode::max_inference: return "max_inference";
    case FcmMode::max_accuracy: return "max_accuracy";
  }
  return "balanced";
}

Role parse_role(std::string_view s) {
  if (s == "home") return Role::home;
  if (s == "work") return Role::work;
  if (s == "third_place") return Role::third_place;
  if (s == "removed") return Role::removed;
  fail(ErrorKind::input, "unknown role '" + std::string(s) + "'");
}

Source parse_source(std::string_view s) {
  if (s == "kmeans") return Source::kmeans;
  if (s == "fcm_balanced") return Source::fcm_balanced;
  if (s == "fcm_max_inference") return Source::fcm_max_inference;
  if (s == "fcm_max_accuracy") return Source::fcm_max_accuracy;
  if (s == "mfa_baseline") return Source::mfa_baseline;
  fail(ErrorKind::input, "unknown source '" + std::string(s) + "'");
}

FcmMode parse_fcm_mode(std::string_view s) {
  if (s == "balanced") return FcmMode::balanced;
  if (s == "max_inference") return FcmMode::max_inference;
  if (s == "max_accuracy") return FcmMode::max_accuracy;
  fail(ErrorKind::config, "unknown fcm mode '" + std::string(s) + "'");
}

Source source_for(FcmMode mode) {
  switch (mode) {
    case FcmMode::balanced: return Source::fcm_balanced;
    case FcmMode::max_inference: return Source::fcm_max_inference;
    case FcmMode::max_accuracy: return Source::fcm_max_accuracy;
  }
  return Source::fcm_balanced;
}

double work_mass(std::span<const double> curve) { return sum_range(curve, 9, 18); }

double home_mass(std::span<const double> curve) {
  return sum_range(curve, 19, 23) + sum_range(curve, 0, 6) + sum_range(curve, 24 + 19, 24 + 23);
}

std::vector<Role> label_clusters(const RowMatrix& curves) {
  if (curves.cols() != kWeekHours) fail(ErrorKind::contract, "label_clusters: centroids must be 48-hour curves");
  const Index k = curves.rows();
  std::vector<Role> roles(static_cast<std::size_t>(k), Role::third_place);
  if (k == 0) return roles;

  std::vector<double> w(static_cast<std::size_t>(k)), h(static_cast<std::size_t>(k)), mass(static_cast<std::size_t>(k));
  std::vector<bool> zero(static_cast<std::size_t>(k));
  for (Index c = 0; c < k; ++c) {
    const auto i = static_cast<std::size_t>(c);
    std::vector<double> row(curves.row(c).data(), curves.row(c).data() + kWeekHours);
    w[i] = work_mass(row);
    h[i] = home_mass(row);
    mass[i] = curves.row(c).sum();
    zero[i] = curves.row(c).cwiseAbs().maxCoeff() == 0.0;
  }

  std::optional<std::size_t> work;
  for (std::size_t c = 0; c < roles.size(); ++c) {
    if (zero[c] || !(w[c] > h[c])) continue;
    if (!work || w[c] - h[c] > w[*work] - h[*work]) work = c;
  }
  if (work) roles[*work] = Role::work;

  const double median_mass = quantile(mass, 0.5);
  std::vector<std::size_t> homes;
  for (std::size_t c = 0; c < roles.size(); ++c)
    if (c != work && !zero[c] && h[c] > w[c] && mass[c] > median_mass) homes.push_back(c);
  std::stable_sort(homes.begin(), homes.end(), [&](std::size_t a, std::size_t b) { return h[a] > h[b]; });
  for (std::size_t i = 0; i < homes.size() && i < 2; ++i) roles[homes[i]] = Role::home;
  return roles;
}

std::vector<RoleAssignment> assign_roles_hard(std::span<const LocationKey> keys, const HardClustering& clustering,
                                              std::span<const Role> cluster_roles) {
  if (keys.size() != clustering.assignment.size())
    fail(ErrorKind::contract, "assign_roles_hard: key count does not match clustering");
  std::vector<RoleAssignment> out;
  out.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto c = static_cast<std::size_t>(clustering.assignment[i]);
    out.push_back({keys[i], cluster_roles[c], 1.0, Source::kmeans});
  }
  return out;
}

std::vector<RoleAssignment> assign_roles_fuzzy(std::span<const LocationKey> keys, const FuzzyClustering& clustering,
                                               std::span<const Role> cluster_roles, FcmMode mode) {
  const RowMatrix& u = clustering.membership;
  if (keys.size() != static_cast<std::size_t>(u.rows()))
    fail(ErrorKind::contract, "assign_roles_fuzzy: key count does not match clustering");
  if (cluster_roles.size() != static_cast<std::size_t>(u.cols()))
    fail(ErrorKind::contract, "assign_roles_fuzzy: one role per cluster required");

  const Source source = source_for(mode);
  std::vector<RoleAssignment> out;
  out.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const Index c = row_argmax(u, static_cast<Index>(i));
    out.push_back({keys[i], cluster_roles[static_cast<std::size_t>(c)], u(static_cast<Index>(i), c), source});
  }

  if (mode == FcmMode::max_inference) {
    std::vector<double> third;
    for (const auto& a : out)
      if (a.role == Role::third_place) third.push_back(a.membership);
    if (!third.empty()) {
      const double median = quantile(third, 0.5);
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].role != Role::third_place || !(out[i].membership < median) || u.cols() < 2) continue;
        const auto row = static_cast<Index>(i);
        const Index second = row_argmax(u, row, row_argmax(u, row));
        const Role r = cluster_roles[static_cast<std::size_t>(second)];
        if (r == Role::third_place) continue;
        out[i].role = r;
        out[i].membership = u(row, second);
      }
    }
  } else if (mode == FcmMode::max_accuracy) {
    for (Role role : {Role::home, Role::work, Role::third_place}) {
      std::vector<double> winners;
      for (const auto& a : out)
        if (a.role == role) winners.push_back(a.membership);
      if (winners.empty()) continue;
      const double q1 = quantile(winners, 0.25);
      for (auto& a : out)
        if (a.role == role && a.membership < q1) a.role = Role::removed;
    }
  }
  return out;
}

std::vector<MfaResult> mfa_baseline(std::span<const PresenceCounts> counts) {
  std::vector<MfaResult> out;
  std::size_t b = 0;
  while (b < counts.size()) {
    std::size_t e = b + 1;
    while (e < counts.size() && counts[e].key.user_id == counts[b].key.user_id) ++e;

    MfaResult res;
    res.user_id = counts[b].key.user_id;
    std::uint64_t weekday_total = 0;
    for (std::size_t i = b; i < e; ++i) weekday_total += sum_counts(counts[i].counts, 0, 23);
    if (weekday_total > 0) {
      std::optional<std::size_t> home, work;
      std::uint64_t best_home = 0, best_work = 0;
      for (std::size_t i = b; i < e; ++i) {
        const auto& c = counts[i];
        const std::uint64_t hm = sum_counts(c.counts, 0, 7) + sum_counts(c.counts, 19, 23);
        const std::uint64_t wm = sum_counts(c.counts, 9, 17);
        const auto better = [&](const std::optional<std::size_t>& cur, std::uint64_t cur_v, std::uint64_t v) {
          return !cur || v > cur_v || (v == cur_v && c.key.location_id < counts[*cur].key.location_id);
        };
        if (better(home, best_home, hm)) {
          home = i;
          best_home = hm;
        }
        if (better(work, best_work, wm)) {
          work = i;
          best_work = wm;
        }
      }
      res.home = counts[*home].key.location_id;
      res.work = counts[*work].key.location_id;
    }
    out.push_back(std::move(res));
    b = e;
  }
  return out;
}

std::vector<RoleAssignment> mfa_assignments(std::span<const MfaResult> results) {
  std::vector<RoleAssignment> out;
  for (const auto& r : results) {
    if (r.home) out.push_back({{r.user_id, *r.home}, Role::home, 1.0, Source::mfa_baseline});
    if (r.work) out.push_back({{r.user_id, *r.work}, Role::work, 1.0, Source::mfa_baseline});
  }
  return out;
}

GroundTruth parse_ground_truth(std::istream& in) {
  if (!in) fail(ErrorKind::input, "ground truth: unreadable source");
  std::string line;
  if (!read_line(in, line) || trim(line) != "user_id,role,tower_id")
    fail(ErrorKind::input, "ground truth: expected header 'user_id,role,tower_id'");
  GroundTruth truth;
  std::map<std::string, std::optional<std::string>> homes;
  std::map<std::string, std::string> works;
  while (read_line(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 3) fail(ErrorKind::input, "ground truth: malformed row '" + line + "'");
    const std::string user(trim(f[0]));
    const auto role = trim(f[1]);
    const std::string tower(trim(f[2]));
    if (role == "home") homes[user] = tower;
    else if (role == "work") works[user] = tower;
    else fail(ErrorKind::input, "ground truth: role must be home or work");
  }
  for (const auto& [user, tower] : homes) truth.users[user].home_tower = *tower;
  for (const auto& [user, tower] : works) {
    if (!homes.count(user)) fail(ErrorKind::input, "ground truth: user " + user + " has work but no home");
    truth.users[user].work_tower = tower;
  }
  return truth;
}

void write_ground_truth_csv(std::ostream& out, const GroundTruth& truth) {
  out << "user_id,role,tower_id\n";
  for (const auto& [user, e] : truth.users) {
    out << user << ",home," << e.home_tower << '\n';
    if (e.work_tower) out << user << ",work," << *e.work_tower << '\n';
  }
}

std::optional<double> RoleMetrics::accuracy() const {
  if (inferred == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(inferred);
}

double RoleMetrics::inference_rate() const {
  return total == 0 ? 0.0 : static_cast<double>(inferred) / static_cast<double>(total);
}

std::map<std::string, const UserLocation*> representatives(std::span<const RoleAssignment> assignments, Role role,
                                                           std::span<const UserLocation> locations) {
  const auto lookup = location_lookup(locations);
  std::map<std::string, std::pair<double, const UserLocation*>> best;
  for (const auto& a : assignments) {
    if (a.role != role) continue;
    const auto it = lookup.find({a.key.user_id, a.key.location_id});
    if (it == lookup.end()) continue;
    const UserLocation* loc = it->second;
    auto [slot, inserted] = best.try_emplace(a.key.user_id, a.membership, loc);
    if (inserted) continue;
    auto& [m, cur] = slot->second;
    const bool better = a.membership > m ||
                        (a.membership == m && (loc->presence_count > cur->presence_count ||
                                               (loc->presence_count == cur->presence_count &&
                                                loc->location_id < cur->location_id)));
    if (better) slot->second = {a.membership, loc};
  }
  std::map<std::string, const UserLocation*> out;
  for (const auto& [user, v] : best) out[user] = v.second;
  return out;
}

EvalMetrics evaluate(std::span<const RoleAssignment> assignments, const GroundTruth& truth,
                     std::span<const UserLocation> locations, const TowerRegistry& registry) {
  const auto homes = representatives(assignments, Role::home, locations);
  const auto works = representatives(assignments, Role::work, locations);

  const auto score = [&](RoleMetrics& m, const std::map<std::string, const UserLocation*>& reps,
                         const std::string& user, const std::string& tower, const GeoPoint& point) {
    ++m.total;
    const auto it = reps.find(user);
    if (it == reps.end()) return;
    ++m.inferred;
    const UserLocation& loc = *it->second;
    if (loc.has_member(tower) || haversine_km(loc.centroid, point) <= kMatchRadiusKm) ++m.correct;
  };

  EvalMetrics metrics;
  for (const auto& [user, entry] : truth.users) {
    const GeoPoint* home_pt = registry.find(entry.home_tower);
    const GeoPoint* work_pt = entry.work_tower ? registry.find(*entry.work_tower) : nullptr;
    if (!home_pt || (entry.work_tower && !work_pt)) {
      ++metrics.excluded_users;
      continue;
    }
    score(metrics.home, homes, user, entry.home_tower, *home_pt);
    if (entry.work_tower) score(metrics.work, works, user, *entry.work_tower, *work_pt);
  }
  return metrics;
}

const MethodReport* ComparisonReport::find(std::string_view method) const {
  for (const auto& m : methods)
    if (m.method == method) return &m;
  return nullptr;
}

std::optional<double> ComparisonReport::improvement(const MethodReport& m, Role role) const {
  const MethodReport* base = find(baseline);
  if (!base) return std::nullopt;
  const auto pick = [role](const EvalMetrics& e) { return role == Role::work ? e.work.accuracy() : e.home.accuracy(); };
  const auto a = pick(m.metrics);
  const auto b = pick(base->metrics);
  if (!a || !b || *b == 0.0) return std::nullopt;
  return (*a - *b) / *b;
}

std::string comparison_json(const ComparisonReport& report) {
  nlohmann::ordered_json j;
  j["schema"] = "eigenloc.report";
  j["schema_version"] = 1;
  j["baseline"] = report.baseline;
  auto methods = nlohmann::ordered_json::array();
  for (const auto& m : report.methods) {
    nlohmann::ordered_json e;
    e["method"] = m.method;
    const auto role_json = [&](const RoleMetrics& r, Role role) {
      nlohmann::ordered_json o;
      o["accuracy"] = optional_number(r.accuracy());
      o["inference_rate"] = r.inference_rate();
      o["inferred"] = r.inferred;
      o["correct"] = r.correct;
      o["total"] = r.total;
      o["improvement"] = m.method == report.baseline ? nlohmann::ordered_json(nullptr)
                                                     : optional_number(report.improvement(m, role));
      return o;
    };
    e["home"] = role_json(m.metrics.home, Role::home);
    e["work"] = role_json(m.metrics.work, Role::work);
    e["excluded_users"] = m.metrics.excluded_users;
    methods.push_back(e);
  }
  j["methods"] = methods;
  return j.dump(2);
}

std::string comparison_table(const ComparisonReport& report) {
  std::vector<std::array<std::string, 5>> rows;
  rows.push_back({"Method", "Metric", "Home", "Workplace", "Improvement (home & work)"});
  for (const auto& m : report.methods) {
    std::string imp = "NA";
    if (m.method != report.baseline) {
      imp = percent(report.improvement(m, Role::home)) + " & " + percent(report.improvement(m, Role::work));
    }
    rows.push_back({m.method, "Accuracy", ratio(m.metrics.home.accuracy()), ratio(m.metrics.work.accuracy()), imp});
    rows.push_back({"", "Inference rate", percent(m.metrics.home.inference_rate()),
                    percent(m.metrics.work.inference_rate()), ""});
  }
  std::array<std::size_t, 5> width{};
  for (const auto& r : rows)
    for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < 5; ++c) {
      line += r[c];
      if (c + 1 < 5) line += std::string(width[c] - r[c].size() + 2, ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << '\n';
  }
  return os.str();
}

void write_density_csv(std::ostream& out, std::span<const RoleAssignment> assignments,
                       std::span<const UserLocation> locations, double cell_deg) {
  if (!(cell_deg > 0.0)) fail(ErrorKind::config, "density: cell size must be positive");
  std::map<std::pair<long long, long long>, std::pair<std::size_t, std::size_t>> grid;
  const auto cell = [&](const GeoPoint& p) {
    return std::pair{static_cast<long long>(std::floor(p.lat_deg / cell_deg)),
                     static_cast<long long>(std::floor(p.lon_deg / cell_deg))};
  };
  for (const auto& [user, loc] : representatives(assignments, Role::home, locations)) ++grid[cell(loc->centroid)].first;
  for (const auto& [user, loc] : representatives(assignments, Role::work, locations)) ++grid[cell(loc->centroid)].second;
  out << "cell_lat,cell_lon,home_count,work_count\n";
  for (const auto& [c, n] : grid) {
    out << fixed9(static_cast<double>(c.first) * cell_deg) << ',' << fixed9(static_cast<double>(c.second) * cell_deg)
        << ',' << n.first << ',' << n.second << '\n';
  }
}

void write_assignments_csv(std::ostream& out, std::span<const RoleAssignment> assignments) {
  out << "user_id,location_id,role,membership,source\n";
  for (const auto& a : assignments) {
    out << a.key.user_id << ',' << a.key.location_id << ',' << to_string(a.role) << ',' << fixed9(a.membership) << ','
        << to_string(a.source) << '\n';
  }
}

std::vector<RoleAssignment> read_assignments_csv(std::istream& in) {
  std::string line;
  if (!read_line(in, line) || line != "user_id,location_id,role,membership,source")
    fail(ErrorKind::schema, "assignments: unexpected header");
  std::vector<RoleAssignment> out;
  while (read_line(in, line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    const auto loc = f.size() == 5 ? parse_int(f[1]) : std::nullopt;
    const auto mem = f.size() == 5 ? parse_double(f[3]) : std::nullopt;
    if (!loc || !mem) fail(ErrorKind::input, "assignments: malformed row '" + line + "'");
    out.push_back({{std::string(f[0]), static_cast<int>(*loc)}, parse_role(f[2]), *mem, parse_source(f[4])});
  }
  return out;
}

}  // namespace eigenloc
