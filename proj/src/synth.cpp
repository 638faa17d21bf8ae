#include "eigenloc/synth.hpp"

#include <absl/time/civil_time.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include <json.hpp>

#include "eigenloc/error.hpp"
#include "eigenloc/geo.hpp"
#include "eigenloc/parallel.hpp"
#include "eigenloc/random.hpp"

namespace eigenloc {
namespace {

constexpr double kKmPerDegree = kEarthRadiusKm * std::numbers::pi / 180.0;
constexpr double kTowerNoiseProb = 0.2;
constexpr double kNoiseRadiusKm = 1.0;

struct Tower {
  std::string id;
  GeoPoint pos;
};

struct Layout {
  std::vector<Tower> towers;
  std::vector<std::vector<std::size_t>> within_1km;  // includes the tower itself
};

Layout make_layout(const SynthConfig& cfg) {
  Rng rng(derive_seed(cfg.rng_seed, {0x70e3}));
  const auto& g = cfg.tower_grid;
  const int per_side = static_cast<int>(std::floor(g.extent_km / g.spacing_km + 1e-9)) + 1;
  const double half = 0.5 * g.spacing_km * (per_side - 1);
  const double lon_km = kKmPerDegree * std::cos(cfg.center.lat_deg * std::numbers::pi / 180.0);

  Layout layout;
  for (int iy = 0; iy < per_side; ++iy) {
    for (int ix = 0; ix < per_side; ++ix) {
      const double x = ix * g.spacing_km - half + rng.uniform(-g.jitter, g.jitter) * g.spacing_km;
      const double y = iy * g.spacing_km - half + rng.uniform(-g.jitter, g.jitter) * g.spacing_km;
      char id[16];
      std::snprintf(id, sizeof id, "T%05zu", layout.towers.size());
      layout.towers.push_back({id, {cfg.center.lat_deg + y / kKmPerDegree, cfg.center.lon_deg + x / lon_km}});
    }
  }
  const std::size_t n = layout.towers.size();
  layout.within_1km.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (haversine_km(layout.towers[i].pos, layout.towers[j].pos) <= kNoiseRadiusKm) layout.within_1km[i].push_back(j);
  return layout;
}

double distance(const Layout& l, std::size_t a, std::size_t b) {
  return haversine_km(l.towers[a].pos, l.towers[b].pos);
}

// Expected events per hour for someone awake in the day.
double day_rate(int hour, bool weekend) {
  if (hour <= 5) return 0.08;
  if (hour == 6) return 0.2;
  if (hour <= 8) return 0.5;
  if (hour <= 17) return weekend ? 0.7 : 0.6;
  if (hour <= 21) return 0.8;
  if (hour == 22) return 0.5;
  return 0.25;
}

// Night workers are active through the night and sleep in the morning.
double night_rate(int hour, bool weekend) {
  if (weekend) return day_rate(hour, true);
  if (hour >= 22 || hour <= 5) return 0.6;
  if (hour <= 7) return 0.3;
  if (hour <= 13) return 0.08;
  return 0.6;
}

bool home_hour(int hour) { return hour <= 7 || hour >= 19; }

enum class Place { home, work, third };

struct DayPlan {
  std::array<Place, 24> place{};
  std::array<std::size_t, 24> third{};  // index into third_place_towers
};

void excursion(DayPlan& plan, Rng& rng, std::size_t n_third, int first, int last, int length) {
  if (n_third == 0) return;
  const int start = first + static_cast<int>(rng.index(static_cast<std::size_t>(last - first + 1)));
  const std::size_t which = rng.index(n_third);
  for (int h = start; h < start + length && h < 24; ++h) {
    plan.place[static_cast<std::size_t>(h)] = Place::third;
    plan.third[static_cast<std::size_t>(h)] = which;
  }
}

DayPlan plan_day(const AgentProfile& a, bool weekend, Rng& rng) {
  DayPlan plan;
  plan.place.fill(Place::home);
  const std::size_t n3 = a.third_place_towers.size();
  const double p = a.third_place_prob;
  if (weekend) {
    if (rng.bernoulli(std::min(1.0, 2.0 * p))) excursion(plan, rng, n3, 10, 14, 3);
    return plan;
  }
  switch (a.archetype) {
    case Archetype::commuter:
    case Archetype::near_home_worker:
      for (int h = 9; h <= 17; ++h) plan.place[static_cast<std::size_t>(h)] = Place::work;
      if (rng.bernoulli(p)) excursion(plan, rng, n3, 19, 20, 2);
      break;
    case Archetype::non_worker:
      if (rng.bernoulli(std::min(1.0, 1.5 * p))) excursion(plan, rng, n3, 9, 16, 3);
      break;
    case Archetype::night_shifter:
      for (int h : {0, 1, 2, 3, 4, 5, 22, 23}) plan.place[static_cast<std::size_t>(h)] = Place::work;
      if (rng.bernoulli(p)) excursion(plan, rng, n3, 15, 17, 2);
      break;
  }
  return plan;
}

std::vector<Archetype> allocate_archetypes(const SynthConfig& cfg) {
  const std::array<double, 4> mix{cfg.archetype_mix.commuter, cfg.archetype_mix.near_home_worker,
                                  cfg.archetype_mix.non_worker, cfg.archetype_mix.night_shifter};
  const std::array<Archetype, 4> kinds{Archetype::commuter, Archetype::near_home_worker, Archetype::non_worker,
                                       Archetype::night_shifter};
  const auto n = static_cast<double>(cfg.n_agents);
  std::array<std::size_t, 4> count{};
  std::array<double, 4> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    count[i] = static_cast<std::size_t>(std::floor(mix[i] * n));
    rem[i] = mix[i] * n - static_cast<double>(count[i]);
    assigned += count[i];
  }
  // Largest remainder, ties to the earlier archetype.
  while (assigned < cfg.n_agents) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 4; ++i)
      if (rem[i] > rem[best]) best = i;
    ++count[best];
    rem[best] = -1.0;
    ++assigned;
  }
  std::vector<Archetype> out;
  for (std::size_t i = 0; i < 4; ++i) out.insert(out.end(), count[i], kinds[i]);
  Rng rng(derive_seed(cfg.rng_seed, {0xa7c4}));
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.index(i)]);
  return out;
}

std::size_t pick_tower(const Layout& l, Rng& rng, auto&& accept) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const std::size_t t = rng.index(l.towers.size());
    if (accept(t)) return t;
  }
  fail(ErrorKind::config, "synth: tower grid too small for the requested geometry");
}

struct AgentTowers {
  std::size_t home = 0;
  std::optional<std::size_t> work;
  std::vector<std::size_t> third;
};

AgentProfile make_profile(const SynthConfig& cfg, const Layout& l, std::size_t index, Archetype kind, Rng& rng,
                          AgentTowers& towers) {
  AgentProfile a;
  char id[16];
  std::snprintf(id, sizeof id, "u%05zu", index + 1);
  a.user_id = id;
  a.archetype = kind;

  towers.home = rng.index(l.towers.size());
  if (kind == Archetype::commuter || kind == Archetype::night_shifter) {
    towers.work = pick_tower(l, rng, [&](std::size_t t) { return distance(l, t, towers.home) > 2.0; });
  } else if (kind == Archetype::near_home_worker) {
    std::vector<std::size_t> near;
    for (std::size_t t : l.within_1km[towers.home])
      if (t != towers.home) near.push_back(t);
    towers.work = near.empty() ? towers.home : near[rng.index(near.size())];
  }
  const std::size_t n_third = 1 + rng.index(3);
  for (std::size_t i = 0; i < n_third; ++i) {
    towers.third.push_back(pick_tower(l, rng, [&](std::size_t t) {
      if (distance(l, t, towers.home) <= 1.5) return false;
      if (towers.work && distance(l, t, *towers.work) <= 1.5) return false;
      for (std::size_t o : towers.third)
        if (distance(l, t, o) <= 1.5) return false;
      return true;
    }));
  }

  a.home_tower = l.towers[towers.home].id;
  if (towers.work) a.work_tower = l.towers[*towers.work].id;
  for (std::size_t t : towers.third) a.third_place_towers.push_back(l.towers[t].id);
  a.third_place_prob = cfg.third_place_prob;
  a.landline_suppressed = rng.bernoulli(cfg.landline_suppression_prob);

  const double activity = rng.uniform(0.6, 1.6) * cfg.rate_scale;
  for (int slot = 0; slot < kWeekHours; ++slot) {
    const bool weekend = slot >= 24;
    const int hour = slot % 24;
    const double base = kind == Archetype::night_shifter ? night_rate(hour, weekend) : day_rate(hour, weekend);
    a.call_rate_curve[static_cast<std::size_t>(slot)] = base * activity;
  }
  return a;
}

EventType draw_event_type(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.5) return EventType::call;
  if (u < 0.8) return EventType::sms;
  return EventType::data;
}

std::vector<TraceRecord> simulate_agent(const SynthConfig& cfg, const Layout& l, const AgentProfile& a,
                                        const AgentTowers& towers, const TimeZone& tz, absl::CivilDay start,
                                        Rng& rng) {
  std::vector<TraceRecord> out;
  for (int d = 0; d < cfg.days; ++d) {
    const absl::CivilDay day = start + d;
    const absl::Weekday wd = absl::GetWeekday(day);
    const bool weekend = wd == absl::Weekday::saturday || wd == absl::Weekday::sunday;
    const DayPlan plan = plan_day(a, weekend, rng);
    for (int h = 0; h < 24; ++h) {
      const auto hh = static_cast<std::size_t>(h);
      const Place place = plan.place[hh];
      double rate = a.call_rate_curve[static_cast<std::size_t>(weekend ? 24 + h : h)];
      if (a.landline_suppressed && place == Place::home && home_hour(h)) rate *= cfg.landline_keep_rate;
      const std::uint32_t n = rng.poisson(rate);
      const std::size_t anchor = place == Place::home   ? towers.home
                                 : place == Place::work ? *towers.work
                                                        : towers.third[plan.third[hh]];
      const std::int64_t hour_start =
          absl::ToUnixSeconds(absl::FromCivil(absl::CivilSecond(day.year(), day.month(), day.day(), h, 0, 0), tz.zone()));
      for (std::uint32_t e = 0; e < n; ++e) {
        TraceRecord r;
        r.user_id = a.user_id;
        r.epoch_s = hour_start + static_cast<std::int64_t>(rng.index(3600));
        r.utc_offset_s = tz.offset_at(r.epoch_s);
        std::size_t tower = anchor;
        if (rng.bernoulli(kTowerNoiseProb)) {
          const auto& near = l.within_1km[anchor];
          tower = near[rng.index(near.size())];
        }
        r.tower_id = l.towers[tower].id;
        r.event_type = draw_event_type(rng);
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

bool record_less(const TraceRecord& a, const TraceRecord& b) {
  return std::tie(a.user_id, a.epoch_s, a.tower_id, a.event_type) <
         std::tie(b.user_id, b.epoch_s, b.tower_id, b.event_type);
}

}  // namespace

const char* to_string(Archetype a) {
  switch (a) {
    case Archetype::commuter: return "commuter";
    case Archetype::near_home_worker: return "near_home_worker";
    case Archetype::non_worker: return "non_worker";
    case Archetype::night_shifter: return "night_shifter";
  }
  return "commuter";
}

void SynthConfig::validate() const {
  const auto bad = [](const std::string& what) { fail(ErrorKind::config, "synth config: " + what); };
  if (n_agents == 0) bad("n_agents must be positive");
  if (days < 1) bad("days must be positive");
  const auto& m = archetype_mix;
  for (double p : {m.commuter, m.near_home_worker, m.non_worker, m.night_shifter})
    if (!(p >= 0.0 && p <= 1.0)) bad("archetype proportions must lie in [0, 1]");
  if (std::abs(m.commuter + m.near_home_worker + m.non_worker + m.night_shifter - 1.0) > 1e-9)
    bad("archetype proportions must sum to 1");
  if (!(tower_grid.spacing_km > 0.0)) bad("tower grid spacing must be positive");
  if (!(tower_grid.extent_km >= tower_grid.spacing_km)) bad("tower grid extent must cover at least one spacing");
  if (!(tower_grid.jitter >= 0.0 && tower_grid.jitter < 0.5)) bad("tower grid jitter must lie in [0, 0.5)");
  for (double p : {landline_suppression_prob, landline_keep_rate, third_place_prob})
    if (!(p >= 0.0 && p <= 1.0)) bad("probabilities must lie in [0, 1]");
  if (!(rate_scale > 0.0 && rate_scale <= 50.0)) bad("rate_scale must lie in (0, 50]");
  if (!center.valid()) bad("center outside valid coordinates");
  absl::CivilDay day;
  if (!absl::ParseCivilTime(start_date, &day)) bad("start_date must be YYYY-MM-DD");
}

SynthConfig synth_config_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorKind::config, "synth config: invalid JSON document");
  SynthConfig c;
  try {
    c.n_agents = j.value("n_agents", c.n_agents);
    c.days = j.value("days", c.days);
    if (j.contains("archetype_mix")) {
      const auto& m = j.at("archetype_mix");
      c.archetype_mix.commuter = m.value("commuter", 0.0);
      c.archetype_mix.near_home_worker = m.value("near_home_worker", 0.0);
      c.archetype_mix.non_worker = m.value("non_worker", 0.0);
      c.archetype_mix.night_shifter = m.value("night_shifter", 0.0);
    }
    if (j.contains("tower_grid")) {
      const auto& g = j.at("tower_grid");
      c.tower_grid.spacing_km = g.value("spacing_km", c.tower_grid.spacing_km);
      c.tower_grid.extent_km = g.value("extent_km", c.tower_grid.extent_km);
      c.tower_grid.jitter = g.value("jitter", c.tower_grid.jitter);
    }
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.landline_suppression_prob = j.value("landline_suppression_prob", c.landline_suppression_prob);
    c.landline_keep_rate = j.value("landline_keep_rate", c.landline_keep_rate);
    c.third_place_prob = j.value("third_place_prob", c.third_place_prob);
    c.rate_scale = j.value("rate_scale", c.rate_scale);
    c.start_date = j.value("start_date", c.start_date);
    c.timezone = j.value("timezone", c.timezone);
    if (j.contains("center")) {
      c.center.lat_deg = j.at("center").value("lat", c.center.lat_deg);
      c.center.lon_deg = j.at("center").value("lon", c.center.lon_deg);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string synth_config_json(const SynthConfig& c) {
  nlohmann::ordered_json j;
  j["n_agents"] = c.n_agents;
  j["days"] = c.days;
  j["archetype_mix"] = {{"commuter", c.archetype_mix.commuter},
                        {"near_home_worker", c.archetype_mix.near_home_worker},
                        {"non_worker", c.archetype_mix.non_worker},
                        {"night_shifter", c.archetype_mix.night_shifter}};
  j["tower_grid"] = {{"spacing_km", c.tower_grid.spacing_km},
                     {"extent_km", c.tower_grid.extent_km},
                     {"jitter", c.tower_grid.jitter}};
  j["rng_seed"] = c.rng_seed;
  j["landline_suppression_prob"] = c.landline_suppression_prob;
  j["landline_keep_rate"] = c.landline_keep_rate;
  j["third_place_prob"] = c.third_place_prob;
  j["rate_scale"] = c.rate_scale;
  j["start_date"] = c.start_date;
  j["timezone"] = c.timezone;
  j["center"] = {{"lat", c.center.lat_deg}, {"lon", c.center.lon_deg}};
  return j.dump(2);
}

SynthCorpus generate_corpus(const SynthConfig& config) {
  config.validate();
  const TimeZone tz = TimeZone::load(config.timezone);
  absl::CivilDay start;
  absl::ParseCivilTime(config.start_date, &start);

  const Layout layout = make_layout(config);
  const std::vector<Archetype> kinds = allocate_archetypes(config);

  const std::size_t n = config.n_agents;
  std::vector<AgentProfile> agents(n);
  std::vector<std::vector<TraceRecord>> per_agent(n);
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      Rng rng(derive_seed(config.rng_seed, {1, i}));
      AgentTowers towers;
      agents[i] = make_profile(config, layout, i, kinds[i], rng, towers);
      per_agent[i] = simulate_agent(config, layout, agents[i], towers, tz, start, rng);
    }
  });

  SynthCorpus corpus;
  for (const auto& t : layout.towers) corpus.registry.insert(t.id, t.pos);
  std::size_t total = 0;
  for (const auto& v : per_agent) total += v.size();
  corpus.records.reserve(total);
  for (auto& v : per_agent) std::move(v.begin(), v.end(), std::back_inserter(corpus.records));
  std::sort(corpus.records.begin(), corpus.records.end(), record_less);

  for (const auto& a : agents) {
    auto& entry = corpus.ground_truth.users[a.user_id];
    entry.home_tower = a.home_tower;
    entry.work_tower = a.work_tower;
  }
  corpus.agents = std::move(agents);
  return corpus;
}

}  // namespace eigenloc
