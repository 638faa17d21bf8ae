// eigenloc: home/work inference from cell-tower traces.
#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "eigenloc/artifacts.hpp"
#include "eigenloc/error.hpp"
#include "eigenloc/parallel.hpp"
#include "eigenloc/pipeline.hpp"
#include "eigenloc/synth.hpp"

namespace {

using namespace eigenloc;

constexpr int kExitConfig = 2;
constexpr int kExitInput = 3;
constexpr int kExitStage = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return kExitConfig;
    case ErrorKind::input:
    case ErrorKind::empty_corpus:
    case ErrorKind::schema:
      return kExitInput;
    default:
      return kExitStage;
  }
}

// Flag values; unset optionals leave the file/default value alone.
struct Flags {
  std::string config_path;
  std::optional<std::string> trace, towers, ground_truth, output_dir, timezone;
  std::optional<double> radius_km, fcm_m;
  std::optional<int> eigen_k, k_min, k_max, replicates, n_init;
  std::optional<std::string> cluster_k, fcm_mode, feature_space;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool no_ground_truth = false;

  // synth only
  std::optional<std::size_t> agents;
  std::optional<int> days;
};

PipelineConfig resolve(const Flags& f) {
  PipelineConfig c;
  if (!f.config_path.empty()) c = apply_config_json(c, read_text(f.config_path));
  if (const char* env = std::getenv("EIGENLOC_OUTPUT_DIR"); env && *env) c.output_dir = env;

  if (f.trace) c.trace_path = *f.trace;
  if (f.towers) c.towers_path = *f.towers;
  if (f.ground_truth) c.ground_truth_path = *f.ground_truth;
  if (f.no_ground_truth) c.ground_truth_path.clear();
  if (f.output_dir) c.output_dir = *f.output_dir;
  if (f.timezone) c.timezone = *f.timezone;
  if (f.radius_km) c.radius_km = *f.radius_km;
  if (f.eigen_k) c.eigen_k = *f.eigen_k;
  if (f.cluster_k) {
    if (*f.cluster_k == "auto") {
      c.cluster_k.reset();
    } else {
      try {
        c.cluster_k = std::stoi(*f.cluster_k);
      } catch (const std::exception&) {
        fail(ErrorKind::config, "--cluster-k must be an integer or \"auto\"");
      }
    }
  }
  if (f.fcm_m) c.fcm_m = *f.fcm_m;
  if (f.fcm_mode) c.fcm_mode = parse_fcm_mode(*f.fcm_mode);
  if (f.k_min) c.db_bootstrap.k_min = *f.k_min;
  if (f.k_max) c.db_bootstrap.k_max = *f.k_max;
  if (f.replicates) c.db_bootstrap.replicates = *f.replicates;
  if (f.seed) c.seed = *f.seed;
  if (f.feature_space) c.feature_space = parse_feature_space(*f.feature_space);
  if (f.n_init) c.n_init = *f.n_init;
  if (f.threads) c.threads = *f.threads;
  c.validate();
  return c;
}

void run_synth(const Flags& f) {
  SynthConfig sc;
  if (!f.config_path.empty()) sc = synth_config_from_json(read_text(f.config_path));
  if (f.agents) sc.n_agents = *f.agents;
  if (f.days) sc.days = *f.days;
  if (f.seed) sc.rng_seed = *f.seed;
  sc.validate();
  std::string dir = "synth";
  if (const char* env = std::getenv("EIGENLOC_OUTPUT_DIR"); env && *env) dir = env;
  if (f.output_dir) dir = *f.output_dir;

  const SynthCorpus corpus = generate_corpus(sc);
  ArtifactWriter w(dir);
  write_trace_csv(w.open("trace.csv"), corpus.records);
  write_tower_csv(w.open("towers.csv"), corpus.registry);
  write_ground_truth_csv(w.open("ground_truth.csv"), corpus.ground_truth);
  w.write_text("synth_config.json", synth_config_json(sc));
  w.commit();
  std::cout << "wrote " << corpus.records.size() << " records for " << corpus.agents.size() << " agents to " << dir
            << "\n";
}

void add_pipeline_flags(CLI::App* app, Flags& f) {
  app->add_option("--trace", f.trace, "Trace CSV (user_id,timestamp,tower_id,event_type)");
  app->add_option("--towers", f.towers, "Tower registry CSV (tower_id,lat,lon)");
  app->add_option("--ground-truth", f.ground_truth, "Ground-truth CSV (user_id,role,tower_id)");
  app->add_flag("--no-ground-truth", f.no_ground_truth, "Skip evaluation even if the config names ground truth");
  app->add_option("--timezone", f.timezone, "IANA time zone of the trace, e.g. Asia/Shanghai");
  app->add_option("--radius-km", f.radius_km, "Leader clustering radius");
  app->add_option("--eigen-k", f.eigen_k, "Number of eigenlocations kept");
  app->add_option("--cluster-k", f.cluster_k, "Cluster count or \"auto\"");
  app->add_option("--fcm-m", f.fcm_m, "Fuzzifier");
  app->add_option("--fcm-mode", f.fcm_mode, "balanced | max_inference | max_accuracy");
  app->add_option("--k-min", f.k_min, "Bootstrap DB: smallest k");
  app->add_option("--k-max", f.k_max, "Bootstrap DB: largest k");
  app->add_option("--replicates", f.replicates, "Bootstrap DB: replicate count");
  app->add_option("--feature-space", f.feature_space, "reconstructed | raw_nhp | coefficients");
  app->add_option("--n-init", f.n_init, "clustering restarts (k-means and FCM)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eigenloc: home and workplace inference from cell-tower traces"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags flags;
  app.add_option("-c,--config", flags.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("-o,--output-dir", flags.output_dir, "Artifact directory (env EIGENLOC_OUTPUT_DIR)");
  app.add_option("--seed", flags.seed, "Master seed");
  app.add_option("--threads", flags.threads, "Worker threads (0: all cores)");

  struct Stage {
    const char* name;
    const char* help;
    std::function<void(const PipelineConfig&)> run;
  };
  const Stage stage_list[] = {
      {"ingest", "Validate the trace and tower registry", stages::ingest},
      {"cluster-towers", "Group each user's towers into user locations", stages::cluster_towers},
      {"features", "Build normalized hourly presence vectors", stages::features},
      {"eigen", "Fit the eigenlocation basis", stages::eigen},
      {"select-k",
       "Pick the cluster count by bootstrapped Davies-Bouldin index",
       [](const PipelineConfig& c) {
         std::cout << "selected k = " << stages::select_k(c) << "\n";
       }},
      {"cluster", "Run K-means and fuzzy C-means", [](const PipelineConfig& c) { stages::cluster(c); }},
      {"label", "Label clusters and assign roles", stages::label},
      {"baseline", "Most-frequent-appearance baseline", stages::baseline},
      {"evaluate", "Score assignments against ground truth",
       [](const PipelineConfig& c) {
         if (stages::evaluate(c))
           std::cout << read_text(std::filesystem::path(c.output_dir) / artifact::report_table);
         else
           std::cout << "no ground truth: evaluation skipped\n";
       }},
  };

  std::function<int()> action;
  for (const Stage& s : stage_list) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_pipeline_flags(sub, flags);
    sub->callback([&action, &flags, run = s.run, name = std::string(s.name)] {
      action = [&flags, run, name] {
        const PipelineConfig cfg = resolve(flags);
        set_thread_count(cfg.threads);
        try {
          run(cfg);
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::config) throw;
          throw StageError(name, e.kind(), e.what());
        }
        return 0;
      };
    });
  }

  CLI::App* pipeline = app.add_subcommand("pipeline", "Run every stage and write manifest.json");
  add_pipeline_flags(pipeline, flags);
  pipeline->callback([&] {
    action = [&flags] {
      const PipelineSummary s = run_pipeline(resolve(flags));
      for (const auto& t : s.timings) std::cout << t.stage << ": " << t.seconds << " s\n";
      std::cout << "k = " << s.cluster_k << (s.auto_k ? " (auto)" : "") << "\n";
      if (!s.evaluated) std::cout << "no ground truth: evaluation skipped\n";
      return 0;
    };
  });

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic corpus with ground truth");
  synth->add_option("--agents", flags.agents, "Number of agents");
  synth->add_option("--days", flags.days, "Number of days");
  synth->callback([&] {
    action = [&flags] {
      run_synth(flags);
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    return action();
  } catch (const StageError& e) {
    std::cerr << "eigenloc: " << e.what() << "\n";
    const int rc = exit_code(e.kind());
    return rc == kExitInput ? kExitInput : kExitStage;
  } catch (const Error& e) {
    std::cerr << "eigenloc: " << to_string(e.kind()) << " error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "eigenloc: " << e.what() << "\n";
    return kExitStage;
  }
}
