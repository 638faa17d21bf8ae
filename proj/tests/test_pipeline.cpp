#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "eigenloc/artifacts.hpp"
#include "eigenloc/error.hpp"
#include "eigenloc/features.hpp"
#include "eigenloc/pipeline.hpp"
#include "eigenloc/synth.hpp"

using namespace eigenloc;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() / ("eigenloc_test_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root / "in");
    SynthConfig sc;
    sc.n_agents = 60;
    sc.days = 21;
    const auto corpus = generate_corpus(sc);
    std::ofstream(root / "in/trace.csv") << [&] { std::ostringstream o; write_trace_csv(o, corpus.records); return o.str(); }();
    std::ofstream(root / "in/towers.csv") << [&] { std::ostringstream o; write_tower_csv(o, corpus.registry); return o.str(); }();
    std::ofstream(root / "in/truth.csv") << [&] { std::ostringstream o; write_ground_truth_csv(o, corpus.ground_truth); return o.str(); }();
  }
  ~Workspace() { fs::remove_all(root); }

  PipelineConfig config(const std::string& out) const {
    PipelineConfig c;
    c.trace_path = (root / "in/trace.csv").string();
    c.towers_path = (root / "in/towers.csv").string();
    c.ground_truth_path = (root / "in/truth.csv").string();
    c.output_dir = (root / out).string();
    c.timezone = "Asia/Shanghai";
    c.seed = 5;
    c.n_init = 3;
    c.db_bootstrap.replicates = 5;
    return c;
  }
};

std::string slurp(const fs::path& p) { return read_text(p); }

const Workspace& workspace() {
  static Workspace w;
  return w;
}

const char* const kNumericArtifacts[] = {
    artifact::trace,        artifact::towers,         artifact::locations,   artifact::counts,
    artifact::features,     artifact::eigenbasis,     artifact::eigenlocations, artifact::kmeans,
    artifact::fcm,          artifact::fcm_membership, artifact::cluster_roles,  artifact::assignments,
    artifact::baseline,     artifact::report,         artifact::report_table,   artifact::density,
    artifact::validation,   artifact::locations_meta,
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EIGENLOC_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("full run writes every artifact and seven stage timings") {
    const auto& w = workspace();
    const auto cfg = w.config("full");
    const auto summary = run_pipeline(cfg);
    CHECK(summary.timings.size() == 7);
    CHECK(summary.cluster_k == 4);
    CHECK(summary.evaluated);
    for (const char* name : kNumericArtifacts) CHECK_MESSAGE(fs::exists(fs::path(cfg.output_dir) / name), name);
    const auto m = nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / artifact::manifest));
    CHECK(m.at("stages").size() == 7);
    CHECK(m.at("config").at("timezone") == "Asia/Shanghai");
    CHECK(m.at("cluster_k_selection") == "fixed");
    for (const auto& e : fs::directory_iterator(cfg.output_dir)) CHECK(e.path().extension() != ".partial");
    const auto report = nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / artifact::report));
    CHECK(report.at("methods").size() == 5);
  }

  TEST_CASE("identical runs give byte-identical artifacts, regardless of threads") {
    const auto& w = workspace();
    auto a = w.config("det_a");
    auto b = w.config("det_b");
    a.threads = 1;
    b.threads = 3;
    run_pipeline(a);
    run_pipeline(b);
    for (const char* name : kNumericArtifacts)
      CHECK_MESSAGE(slurp(fs::path(a.output_dir) / name) == slurp(fs::path(b.output_dir) / name), name);
  }

  TEST_CASE("stage-by-stage run equals the pipeline run") {
    const auto& w = workspace();
    const auto whole = w.config("whole");
    const auto parts = w.config("parts");
    run_pipeline(whole);
    stages::ingest(parts);
    stages::cluster_towers(parts);
    stages::features(parts);
    stages::eigen(parts);
    stages::cluster(parts);
    stages::label(parts);
    stages::baseline(parts);
    stages::evaluate(parts);
    for (const char* name : kNumericArtifacts)
      CHECK_MESSAGE(slurp(fs::path(whole.output_dir) / name) == slurp(fs::path(parts.output_dir) / name), name);

    // Rerunning eigen on unchanged features reproduces the dump.
    const std::string before = slurp(fs::path(parts.output_dir) / artifact::eigenbasis);
    stages::eigen(parts);
    CHECK(slurp(fs::path(parts.output_dir) / artifact::eigenbasis) == before);
  }

  TEST_CASE("auto k records the bootstrap selection") {
    const auto& w = workspace();
    auto cfg = w.config("auto");
    cfg.cluster_k.reset();
    cfg.db_bootstrap.k_max = 5;
    const auto s = run_pipeline(cfg);
    CHECK(s.auto_k);
    CHECK(s.timings.size() == 8);
    const auto m = nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / artifact::manifest));
    CHECK(m.at("cluster_k_selection") == "bootstrap_davies_bouldin");
    const auto sel = nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / artifact::select_k));
    CHECK(m.at("cluster_k") == sel.at("selected_k"));
    CHECK(sel.at("summary").size() == 4);
  }

  TEST_CASE("missing ground truth skips evaluation") {
    const auto& w = workspace();
    auto cfg = w.config("nogt");
    cfg.ground_truth_path.clear();
    const auto s = run_pipeline(cfg);
    CHECK(!s.evaluated);
    const auto r = nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / artifact::report));
    CHECK(r.at("note") == "no ground truth");
  }

  TEST_CASE("failures name the stage") {
    const auto& w = workspace();
    auto cfg = w.config("fail");
    cfg.trace_path = (w.root / "in/missing.csv").string();
    try {
      run_pipeline(cfg);
      FAIL("expected an error");
    } catch (const StageError& e) {
      CHECK(e.stage() == "ingest");
      CHECK(e.kind() == ErrorKind::input);
    }
  }

  TEST_CASE("schema version mismatch is an explicit error") {
    const auto& w = workspace();
    const auto cfg = w.config("schema");
    run_pipeline(cfg);
    const fs::path basis = fs::path(cfg.output_dir) / artifact::eigenbasis;
    auto j = nlohmann::json::parse(slurp(basis));
    j["schema_version"] = 99;
    std::ofstream(basis) << j.dump();
    try {
      stages::cluster(cfg);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::schema);
    }
  }

  TEST_CASE("config file, defaults and validation") {
    PipelineConfig base;
    const auto c = apply_config_json(base, R"({"timezone": "UTC", "cluster_k": "auto", "eigen_k": 6,
                                             "db_bootstrap": {"replicates": 9}, "paths": {"output_dir": "x"}})");
    CHECK(c.timezone == "UTC");
    CHECK(!c.cluster_k);
    CHECK(c.eigen_k == 6);
    CHECK(c.db_bootstrap.replicates == 9);
    CHECK(c.db_bootstrap.k_max == 8);
    CHECK(c.output_dir == "x");
    CHECK(c.radius_km == 1.0);
    c.validate();
    const auto back = apply_config_json(PipelineConfig{}, config_json(c));
    CHECK(config_json(back) == config_json(c));

    const auto kind_of = [](auto&& f) {
      try {
        f();
      } catch (const Error& e) {
        return e.kind();
      }
      return ErrorKind::contract;
    };
    CHECK(kind_of([] { PipelineConfig{}.validate(); }) == ErrorKind::config);  // no timezone
    CHECK(kind_of([&] { apply_config_json(base, "{\"eigen_k\": \"eight\"}"); }) == ErrorKind::config);
    CHECK(kind_of([&] { apply_config_json(base, "[1,2]"); }) == ErrorKind::config);
    CHECK(kind_of([&] {
            auto bad = c;
            bad.eigen_k = 49;
            bad.validate();
          }) == ErrorKind::config);
  }
}

TEST_SUITE("cli") {
  TEST_CASE("synth then pipeline, exit codes and overrides") {
    const auto& w = workspace();
    const fs::path dir = w.root / "cli";
    REQUIRE(run_cli("synth --agents 40 --days 14 -o " + (dir / "s").string()) == 0);
    const std::string inputs = " --trace " + (dir / "s/trace.csv").string() + " --towers " + (dir / "s/towers.csv").string() +
                               " --ground-truth " + (dir / "s/ground_truth.csv").string();

    CHECK(run_cli("pipeline --timezone Asia/Shanghai --n-init 2 -o " + (dir / "o").string() + inputs) == 0);
    CHECK(fs::exists(dir / "o" / artifact::manifest));

    // Config file with flag override: the flag wins.
    std::ofstream(dir / "cfg.json") << R"({"timezone": "Asia/Shanghai", "eigen_k": 5, "paths": {"output_dir": "ignored"}})";
    CHECK(run_cli("eigen -c " + (dir / "cfg.json").string() + " --eigen-k 3 -o " + (dir / "o").string()) == 0);
    std::ifstream csv(dir / "o" / artifact::eigenlocations);
    std::string line;
    int rows = -1;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 3 * 48);

    // Environment overrides the file but not the flag.
    const std::string env = "EIGENLOC_OUTPUT_DIR=" + (dir / "env").string() + " ";
    const std::string cmd = env + EIGENLOC_CLI + " synth --agents 10 --days 7 >/dev/null 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(dir / "env/trace.csv"));

    CHECK(run_cli("pipeline" + inputs + " -o " + (dir / "o2").string()) == 2);           // no timezone
    CHECK(run_cli("pipeline --timezone Nowhere/City" + inputs) == 2);                    // bad zone
    CHECK(run_cli("pipeline --timezone UTC --radius-km -1" + inputs) == 2);              // out of range
    CHECK(run_cli("frobnicate") == 2);                                                  // unknown subcommand
    CHECK(run_cli("ingest --timezone UTC --trace /nonexistent --towers /nonexistent -o " + (dir / "o3").string()) == 3);
    CHECK(run_cli("eigen --timezone UTC -o " + (dir / "empty").string()) == 3);          // no features artifact

    // A stage that cannot run on well-formed input: one feature row has no covariance.
    fs::create_directories(dir / "one");
    {
      PresenceVector v;
      v.key = {"u", 0};
      v.nhp[3] = 1.0;
      std::ofstream out(dir / "one" / artifact::features);
      write_features_csv(out, assemble_matrix({v}));
    }
    CHECK(run_cli("eigen --timezone UTC -o " + (dir / "one").string()) == 4);
  }
}
