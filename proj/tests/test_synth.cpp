#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "eigenloc/error.hpp"
#include "eigenloc/geo.hpp"
#include "eigenloc/parallel.hpp"
#include "eigenloc/random.hpp"
#include "eigenloc/synth.hpp"

using namespace eigenloc;

namespace {

SynthConfig small(std::size_t agents = 100, int days = 21) {
  SynthConfig c;
  c.n_agents = agents;
  c.days = days;
  return c;
}

std::string dump(const SynthCorpus& c) {
  std::ostringstream out;
  write_trace_csv(out, c.records);
  write_tower_csv(out, c.registry);
  write_ground_truth_csv(out, c.ground_truth);
  return out.str();
}

}  // namespace

TEST_SUITE("rng") {
  TEST_CASE("engine is the standard 64-bit Mersenne Twister") {
    Rng rng(5489);
    std::uint64_t x = 0;
    for (int i = 0; i < 10000; ++i) x = rng.next_u64();
    CHECK(x == 9981545732273789042ull);
  }

  TEST_CASE("variates are defined by explicit transforms") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i) {
      const double u = a.uniform();
      CHECK(u == static_cast<double>(b.next_u64() >> 11) / 9007199254740992.0);
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
    }
    Rng c(9);
    for (int i = 0; i < 1000; ++i) CHECK(c.index(7) < 7);
  }

  TEST_CASE("poisson mean and derived seeds") {
    Rng rng(1);
    double s = 0;
    for (int i = 0; i < 20000; ++i) s += rng.poisson(2.5);
    CHECK(std::abs(s / 20000 - 2.5) < 0.05);
    CHECK(rng.poisson(0.0) == 0);
    CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
  }
}

TEST_SUITE("synth") {
  TEST_CASE("same seed, byte-identical corpus") {
    CHECK(dump(generate_corpus(small(60))) == dump(generate_corpus(small(60))));
    auto other = small(60);
    other.rng_seed = 43;
    CHECK(dump(generate_corpus(other)) != dump(generate_corpus(small(60))));
  }

  TEST_CASE("parallel generation equals serial generation") {
    set_thread_count(1);
    const auto serial = dump(generate_corpus(small(80)));
    set_thread_count(4);
    const auto parallel = dump(generate_corpus(small(80)));
    set_thread_count(0);
    CHECK(serial == parallel);
  }

  TEST_CASE("commuters are at work on weekday working hours") {
    auto cfg = small(200, 60);
    cfg.landline_suppression_prob = 0.0;
    const auto corpus = generate_corpus(cfg);
    std::map<std::string, const AgentProfile*> agents;
    for (const auto& a : corpus.agents) agents[a.user_id] = &a;
    std::size_t total = 0, at_work = 0;
    for (const auto& r : corpus.records) {
      const auto* a = agents.at(r.user_id);
      if (a->archetype != Archetype::commuter) continue;
      if (r.local_weekday() >= 5 || r.local_hour() < 10 || r.local_hour() >= 17) continue;
      ++total;
      if (haversine_km(*corpus.registry.find(r.tower_id), *corpus.registry.find(*a->work_tower)) <= 1.0) ++at_work;
    }
    REQUIRE(total > 1000);
    CHECK(static_cast<double>(at_work) >= 0.9 * static_cast<double>(total));
  }

  TEST_CASE("non-worker mix has no work truth") {
    auto cfg = small(50, 7);
    cfg.archetype_mix = {0.0, 0.0, 1.0, 0.0};
    const auto corpus = generate_corpus(cfg);
    for (const auto& [u, e] : corpus.ground_truth.users) CHECK(!e.work_tower);
  }

  TEST_CASE("profiles satisfy their geometry and the truth is consistent") {
    const auto corpus = generate_corpus(small(300, 14));
    std::map<std::string, std::set<std::string>> seen;
    for (const auto& r : corpus.records) seen[r.user_id].insert(r.tower_id);
    std::map<Archetype, int> mix;
    for (const auto& a : corpus.agents) {
      ++mix[a.archetype];
      const GeoPoint home = *corpus.registry.find(a.home_tower);
      if (a.archetype == Archetype::commuter) {
        REQUIRE(a.work_tower);
        CHECK(*a.work_tower != a.home_tower);
        CHECK(haversine_km(home, *corpus.registry.find(*a.work_tower)) > 2.0);
      }
      if (a.archetype == Archetype::near_home_worker)
        CHECK(haversine_km(home, *corpus.registry.find(*a.work_tower)) <= 1.0);
      if (a.archetype == Archetype::non_worker) CHECK(!a.work_tower);
      for (double r : a.call_rate_curve) CHECK(r >= 0.0);
      CHECK(seen[a.user_id].count(a.home_tower) == 1);
      if (a.work_tower) CHECK(seen[a.user_id].count(*a.work_tower) == 1);
      const auto& truth = corpus.ground_truth.users.at(a.user_id);
      CHECK(truth.home_tower == a.home_tower);
      CHECK(corpus.registry.contains(truth.home_tower));
    }
    CHECK(mix[Archetype::commuter] == 180);
    CHECK(mix[Archetype::near_home_worker] == 60);
    CHECK(mix[Archetype::non_worker] == 45);
    CHECK(mix[Archetype::night_shifter] == 15);
  }

  TEST_CASE("doubling call rates roughly doubles the record count") {
    auto cfg = small(100, 21);
    const double base = static_cast<double>(generate_corpus(cfg).records.size());
    cfg.rate_scale = 2.0;
    const double doubled = static_cast<double>(generate_corpus(cfg).records.size());
    CHECK(doubled / base > 1.8);
    CHECK(doubled / base < 2.2);
  }

  TEST_CASE("invalid configurations") {
    auto zero = small();
    zero.n_agents = 0;
    CHECK_THROWS_AS(generate_corpus(zero), Error);
    auto mix = small();
    mix.archetype_mix.commuter = 0.7;
    CHECK_THROWS_AS(generate_corpus(mix), Error);
    auto grid = small();
    grid.tower_grid.spacing_km = 0.0;
    CHECK_THROWS_AS(generate_corpus(grid), Error);
    try {
      synth_config_from_json("{\"n_agents\": \"many\"}");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
    }
  }

  TEST_CASE("config JSON round trip") {
    auto cfg = small(123, 9);
    cfg.rng_seed = 77;
    cfg.archetype_mix = {0.5, 0.25, 0.25, 0.0};
    const auto back = synth_config_from_json(synth_config_json(cfg));
    CHECK(back.n_agents == 123);
    CHECK(back.days == 9);
    CHECK(back.rng_seed == 77);
    CHECK(back.archetype_mix.near_home_worker == 0.25);
    CHECK(synth_config_json(back) == synth_config_json(cfg));
  }
}
