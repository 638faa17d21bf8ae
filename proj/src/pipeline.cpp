#include "eigenloc/pipeline.hpp"

#include <chrono>
#include <functional>
#include <sstream>

#include "eigenloc/artifacts.hpp"
#include "eigenloc/cluster.hpp"
#include "eigenloc/features.hpp"
#include "eigenloc/geo.hpp"
#include "eigenloc/parallel.hpp"
#include "eigenloc/random.hpp"
#include "eigenloc/text.hpp"
#include "eigenloc/trace.hpp"

namespace eigenloc {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr const char* kVersion = "1.0.0";

// Child seeds of the configured seed for each randomised step.
enum SeedStream : std::uint64_t { kKMeansStream = 1, kFcmStream = 2, kBootstrapStream = 3 };

fs::path out_path(const PipelineConfig& cfg, const char* name) { return fs::path(cfg.output_dir) / name; }

struct LoadedCorpus {
  TowerRegistry registry;
  std::vector<TraceRecord> records;
};

// Reads the cleaned trace and tower files written by ingest.
LoadedCorpus load_clean_corpus(const PipelineConfig& cfg) {
  read_artifact_json(out_path(cfg, artifact::validation), "eigenloc.validation");
  const TimeZone tz = TimeZone::load(cfg.timezone);
  LoadedCorpus c;
  {
    auto in = open_input(out_path(cfg, artifact::towers));
    c.registry = parse_tower_registry(in).registry;
  }
  auto in = open_input(out_path(cfg, artifact::trace));
  c.records = parse_trace(in, c.registry, tz).records;
  return c;
}

FeatureMatrix load_features(const PipelineConfig& cfg) {
  auto in = open_input(out_path(cfg, artifact::features));
  return read_features_csv(in);
}

Eigenbasis load_basis(const PipelineConfig& cfg) {
  return eigenbasis_from_json(read_text(out_path(cfg, artifact::eigenbasis)));
}

std::vector<UserLocation> load_locations(const PipelineConfig& cfg) {
  read_artifact_json(out_path(cfg, artifact::locations_meta), "eigenloc.user_locations");
  auto in = open_input(out_path(cfg, artifact::locations));
  return read_user_locations_csv(in);
}

RowMatrix clustering_points(const PipelineConfig& cfg, const FeatureMatrix& fm, const Eigenbasis& basis) {
  return clustering_input(fm.values(), basis, cfg.eigen_k, cfg.feature_space);
}

ojson roles_json(const std::vector<Role>& roles) {
  auto a = ojson::array();
  for (Role r : roles) a.push_back(to_string(r));
  return a;
}

std::string membership_header(int k) {
  std::string h = "user_id,location_id";
  for (int c = 0; c < k; ++c) h += ",c" + std::to_string(c);
  return h;
}

void write_membership_csv(std::ostream& out, const FeatureMatrix& fm, const RowMatrix& u) {
  out << membership_header(static_cast<int>(u.cols())) << '\n';
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    out << fm.key(i).user_id << ',' << fm.key(i).location_id;
    for (Eigen::Index c = 0; c < u.cols(); ++c) out << ',' << fixed9(u(static_cast<Eigen::Index>(i), c));
    out << '\n';
  }
}

RowMatrix read_membership_csv(std::istream& in, const FeatureMatrix& fm, int k) {
  std::string line;
  if (!read_line(in, line) || line != membership_header(k)) fail(ErrorKind::schema, "fcm membership: unexpected header");
  RowMatrix u(static_cast<Eigen::Index>(fm.rows()), k);
  std::size_t row = 0;
  while (read_line(in, line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (row >= fm.rows() || f.size() != static_cast<std::size_t>(2 + k) || f[0] != fm.key(row).user_id ||
        parse_int(f[1]) != std::optional<long long>(fm.key(row).location_id))
      fail(ErrorKind::input, "fcm membership: rows do not match features");
    for (int c = 0; c < k; ++c) {
      const auto v = parse_double(f[static_cast<std::size_t>(2 + c)]);
      if (!v) fail(ErrorKind::input, "fcm membership: bad value");
      u(static_cast<Eigen::Index>(row), c) = *v;
    }
    ++row;
  }
  if (row != fm.rows()) fail(ErrorKind::input, "fcm membership: row count does not match features");
  return u;
}

std::vector<RoleAssignment> load_assignments(const fs::path& path) {
  auto in = open_input(path);
  return read_assignments_csv(in);
}

}  // namespace

void PipelineConfig::validate() const {
  const auto bad = [](const std::string& what) { fail(ErrorKind::config, "config: " + what); };
  if (timezone.empty()) bad("timezone is required");
  TimeZone::load(timezone);
  if (output_dir.empty()) bad("output_dir is required");
  if (!(radius_km > 0.0 && radius_km <= 50.0)) bad("radius_km must lie in (0, 50]");
  if (eigen_k < 1 || eigen_k > kWeekHours) bad("eigen_k must lie in [1, 48]");
  if (cluster_k && (*cluster_k < 1 || *cluster_k > 64)) bad("cluster_k must lie in [1, 64] or be \"auto\"");
  if (!(fcm_m > 1.0 && fcm_m <= 10.0)) bad("fcm_m must lie in (1, 10]");
  if (db_bootstrap.k_min < 2 || db_bootstrap.k_max < db_bootstrap.k_min || db_bootstrap.k_max > 64)
    bad("db_bootstrap needs 2 <= k_min <= k_max <= 64");
  if (db_bootstrap.replicates < 1 || db_bootstrap.replicates > 10000) bad("db_bootstrap.replicates must lie in [1, 10000]");
  if (n_init < 1 || n_init > 1000) bad("n_init must lie in [1, 1000]");
}

PipelineConfig apply_config_json(PipelineConfig c, std::string_view text) {
  const auto j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorKind::config, "config: invalid JSON document");
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.trace_path = p.value("trace", c.trace_path);
      c.towers_path = p.value("towers", c.towers_path);
      c.ground_truth_path = p.value("ground_truth", c.ground_truth_path);
      c.output_dir = p.value("output_dir", c.output_dir);
    }
    c.timezone = j.value("timezone", c.timezone);
    c.radius_km = j.value("radius_km", c.radius_km);
    c.eigen_k = j.value("eigen_k", c.eigen_k);
    if (j.contains("cluster_k")) {
      const auto& k = j.at("cluster_k");
      if (k.is_string()) {
        if (k.get<std::string>() != "auto") fail(ErrorKind::config, "config: cluster_k must be an integer or \"auto\"");
        c.cluster_k.reset();
      } else {
        c.cluster_k = k.get<int>();
      }
    }
    c.fcm_m = j.value("fcm_m", c.fcm_m);
    if (j.contains("fcm_mode")) c.fcm_mode = parse_fcm_mode(j.at("fcm_mode").get<std::string>());
    if (j.contains("db_bootstrap")) {
      const auto& d = j.at("db_bootstrap");
      c.db_bootstrap.k_min = d.value("k_min", c.db_bootstrap.k_min);
      c.db_bootstrap.k_max = d.value("k_max", c.db_bootstrap.k_max);
      c.db_bootstrap.replicates = d.value("replicates", c.db_bootstrap.replicates);
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("feature_space")) c.feature_space = parse_feature_space(j.at("feature_space").get<std::string>());
    c.n_init = j.value("n_init", c.n_init);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("config: ") + e.what());
  }
  return c;
}

std::string config_json(const PipelineConfig& c) {
  ojson j;
  j["paths"] = {{"trace", c.trace_path},
                {"towers", c.towers_path},
                {"ground_truth", c.ground_truth_path},
                {"output_dir", c.output_dir}};
  j["timezone"] = c.timezone;
  j["radius_km"] = c.radius_km;
  j["eigen_k"] = c.eigen_k;
  j["cluster_k"] = c.cluster_k ? ojson(*c.cluster_k) : ojson("auto");
  j["fcm_m"] = c.fcm_m;
  j["fcm_mode"] = to_string(c.fcm_mode);
  j["db_bootstrap"] = {{"k_min", c.db_bootstrap.k_min},
                       {"k_max", c.db_bootstrap.k_max},
                       {"replicates", c.db_bootstrap.replicates}};
  j["seed"] = c.seed;
  j["feature_space"] = to_string(c.feature_space);
  j["n_init"] = c.n_init;
  j["threads"] = c.threads;
  return j.dump(2);
}

namespace stages {

void ingest(const PipelineConfig& cfg) {
  const TimeZone tz = TimeZone::load(cfg.timezone);
  ParsedRegistry reg;
  {
    auto in = open_input(cfg.towers_path);
    reg = parse_tower_registry(in);
  }
  auto in = open_input(cfg.trace_path);
  const TraceCorpus corpus = parse_trace(in, reg.registry, tz);

  ojson j = artifact_header("eigenloc.validation");
  const ojson report = ojson::parse(validation_report_json(corpus.report, tz));
  for (auto it = report.begin(); it != report.end(); ++it) j[it.key()] = it.value();
  j["timezone"] = tz.name();
  j["towers"] = {{"total_rows", reg.report.total_rows},
                 {"kept", reg.registry.size()},
                 {"bad_coordinate", reg.report.bad_coordinate},
                 {"malformed_line", reg.report.malformed_line},
                 {"duplicates", reg.report.duplicates}};

  ArtifactWriter w(cfg.output_dir);
  w.write_text(artifact::validation, j.dump(2));
  write_trace_csv(w.open(artifact::trace), corpus.records);
  write_tower_csv(w.open(artifact::towers), reg.registry);
  w.commit();
}

void cluster_towers(const PipelineConfig& cfg) {
  const LoadedCorpus c = load_clean_corpus(cfg);
  const LocationIndex index = build_user_locations(c.records, c.registry, cfg.radius_km);

  ojson meta = artifact_header("eigenloc.user_locations");
  meta["radius_km"] = cfg.radius_km;
  meta["locations"] = index.locations.size();
  meta["missing_towers"] = index.missing_towers;

  ArtifactWriter w(cfg.output_dir);
  write_user_locations_csv(w.open(artifact::locations), index.locations);
  w.write_text(artifact::locations_meta, meta.dump(2));
  w.commit();
}

void features(const PipelineConfig& cfg) {
  const LoadedCorpus c = load_clean_corpus(cfg);
  const auto locations = load_locations(cfg);
  const auto mapping = map_records(c.records, locations);
  const auto counts = count_presences(c.records, mapping, locations);
  const FeatureMatrix fm = assemble_matrix(normalize_all(counts));

  ArtifactWriter w(cfg.output_dir);
  write_counts_csv(w.open(artifact::counts), counts);
  write_features_csv(w.open(artifact::features), fm);
  w.commit();
}

void eigen(const PipelineConfig& cfg) {
  const FeatureMatrix fm = load_features(cfg);
  const Eigenbasis basis = fit_eigenbasis(fm.values());
  ArtifactWriter w(cfg.output_dir);
  w.write_text(artifact::eigenbasis, eigenbasis_json(basis));
  write_eigenlocations_csv(w.open(artifact::eigenlocations), basis, cfg.eigen_k);
  w.commit();
}

int select_k(const PipelineConfig& cfg) {
  const FeatureMatrix fm = load_features(cfg);
  const RowMatrix x = clustering_points(cfg, fm, load_basis(cfg));

  BootstrapOptions opt;
  opt.k_min = cfg.db_bootstrap.k_min;
  opt.k_max = cfg.db_bootstrap.k_max;
  opt.replicates = cfg.db_bootstrap.replicates;
  opt.seed = derive_seed(cfg.seed, {kBootstrapStream});
  opt.n_init = cfg.n_init;
  const DbBootstrapResult result = bootstrap_db(x, opt);
  const int k = eigenloc::select_k(result);

  ojson j = artifact_header("eigenloc.select_k");
  j["k_min"] = opt.k_min;
  j["k_max"] = opt.k_max;
  j["replicates"] = opt.replicates;
  j["seed"] = cfg.seed;
  auto summary = ojson::array();
  for (int kk = opt.k_min; kk <= opt.k_max; ++kk) {
    const auto s = result.summary(kk);
    summary.push_back({{"k", kk}, {"q1", s.q1}, {"median", s.median}, {"q3", s.q3}});
  }
  j["summary"] = summary;
  j["selected_k"] = k;

  ArtifactWriter w(cfg.output_dir);
  write_db_bootstrap_csv(w.open(artifact::db_bootstrap), result);
  w.write_text(artifact::select_k, j.dump(2));
  w.commit();
  return k;
}

int cluster(const PipelineConfig& cfg) {
  const FeatureMatrix fm = load_features(cfg);
  const Eigenbasis basis = load_basis(cfg);
  const RowMatrix x = clustering_points(cfg, fm, basis);

  int k = 0;
  if (cfg.cluster_k) {
    k = *cfg.cluster_k;
  } else {
    const auto sel = read_artifact_json(out_path(cfg, artifact::select_k), "eigenloc.select_k");
    k = sel.at("selected_k").get<int>();
  }

  KMeansOptions ko;
  ko.k = k;
  ko.seed = derive_seed(cfg.seed, {kKMeansStream});
  ko.n_init = cfg.n_init;
  const HardClustering hard = kmeans(x, ko);

  FcmOptions fo;
  fo.k = k;
  fo.m = cfg.fcm_m;
  fo.seed = derive_seed(cfg.seed, {kFcmStream});
  fo.n_init = cfg.n_init;
  const FuzzyClustering fuzzy = fcm(x, fo);

  ojson kj = artifact_header("eigenloc.kmeans");
  kj["k"] = k;
  kj["seed"] = cfg.seed;
  kj["feature_space"] = to_string(cfg.feature_space);
  kj["eigen_k"] = cfg.eigen_k;
  kj["objective"] = hard.objective;
  kj["iterations"] = hard.iterations;
  kj["centroids"] = matrix_to_json(hard.centroids);
  kj["curves"] = matrix_to_json(centroid_curves(hard.centroids, basis, cfg.feature_space));
  kj["assignment"] = hard.assignment;

  ojson fj = artifact_header("eigenloc.fcm");
  fj["k"] = k;
  fj["m"] = cfg.fcm_m;
  fj["seed"] = cfg.seed;
  fj["feature_space"] = to_string(cfg.feature_space);
  fj["eigen_k"] = cfg.eigen_k;
  fj["objective"] = fuzzy.objective;
  fj["iterations"] = fuzzy.iterations;
  fj["centroids"] = matrix_to_json(fuzzy.centroids);
  fj["curves"] = matrix_to_json(centroid_curves(fuzzy.centroids, basis, cfg.feature_space));

  ArtifactWriter w(cfg.output_dir);
  w.write_text(artifact::kmeans, kj.dump(1));
  w.write_text(artifact::fcm, fj.dump(1));
  write_membership_csv(w.open(artifact::fcm_membership), fm, fuzzy.membership);
  w.commit();
  return k;
}

void label(const PipelineConfig& cfg) {
  const FeatureMatrix fm = load_features(cfg);
  const auto kj = read_artifact_json(out_path(cfg, artifact::kmeans), "eigenloc.kmeans");
  const auto fj = read_artifact_json(out_path(cfg, artifact::fcm), "eigenloc.fcm");

  HardClustering hard;
  hard.k = kj.at("k").get<int>();
  hard.assignment = kj.at("assignment").get<std::vector<int>>();
  if (hard.assignment.size() != fm.rows()) fail(ErrorKind::input, "kmeans artifact does not match features");
  const auto hard_roles = label_clusters(matrix_from_json(kj.at("curves")));

  FuzzyClustering fuzzy;
  fuzzy.k = fj.at("k").get<int>();
  {
    auto in = open_input(out_path(cfg, artifact::fcm_membership));
    fuzzy.membership = read_membership_csv(in, fm, fuzzy.k);
  }
  const auto fuzzy_roles = label_clusters(matrix_from_json(fj.at("curves")));

  std::vector<RoleAssignment> all = assign_roles_hard(fm.keys(), hard, hard_roles);
  for (FcmMode mode : {FcmMode::balanced, FcmMode::max_inference, FcmMode::max_accuracy}) {
    auto part = assign_roles_fuzzy(fm.keys(), fuzzy, fuzzy_roles, mode);
    all.insert(all.end(), part.begin(), part.end());
  }

  ojson rj = artifact_header("eigenloc.cluster_roles");
  rj["kmeans"] = roles_json(hard_roles);
  rj["fcm"] = roles_json(fuzzy_roles);

  ArtifactWriter w(cfg.output_dir);
  w.write_text(artifact::cluster_roles, rj.dump(2));
  write_assignments_csv(w.open(artifact::assignments), all);
  w.commit();
}

void baseline(const PipelineConfig& cfg) {
  auto in = open_input(out_path(cfg, artifact::counts));
  const auto counts = read_counts_csv(in);
  const auto results = mfa_baseline(counts);
  ArtifactWriter w(cfg.output_dir);
  write_assignments_csv(w.open(artifact::baseline), mfa_assignments(results));
  w.commit();
}

bool evaluate(const PipelineConfig& cfg) {
  const auto locations = load_locations(cfg);
  auto assignments = load_assignments(out_path(cfg, artifact::assignments));
  const auto base = load_assignments(out_path(cfg, artifact::baseline));

  std::map<Source, std::vector<RoleAssignment>> by_source;
  for (auto& a : base) by_source[a.source].push_back(a);
  for (auto& a : assignments) by_source[a.source].push_back(a);

  ArtifactWriter w(cfg.output_dir);
  write_density_csv(w.open(artifact::density), by_source[Source::kmeans], locations);
  write_density_csv(w.open("density_fcm.csv"), by_source[source_for(cfg.fcm_mode)], locations);

  if (cfg.ground_truth_path.empty()) {
    ojson j = artifact_header("eigenloc.report");
    j["note"] = "no ground truth";
    j["methods"] = ojson::array();
    w.write_text(artifact::report, j.dump(2));
    w.write_text(artifact::report_table, "no ground truth\n");
    w.commit();
    return false;
  }

  GroundTruth truth;
  {
    auto in = open_input(cfg.ground_truth_path);
    truth = parse_ground_truth(in);
  }
  TowerRegistry registry;
  {
    auto in = open_input(out_path(cfg, artifact::towers));
    registry = parse_tower_registry(in).registry;
  }

  ComparisonReport report;
  for (Source s : {Source::mfa_baseline, Source::kmeans, Source::fcm_balanced, Source::fcm_max_inference,
                   Source::fcm_max_accuracy}) {
    const auto it = by_source.find(s);
    if (it == by_source.end()) continue;
    report.methods.push_back({to_string(s), eigenloc::evaluate(it->second, truth, locations, registry)});
  }
  w.write_text(artifact::report, comparison_json(report));
  w.write_text(artifact::report_table, comparison_table(report));
  w.commit();
  return true;
}

}  // namespace stages

PipelineSummary run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  set_thread_count(cfg.threads);

  PipelineSummary summary;
  summary.auto_k = !cfg.cluster_k;
  const auto run = [&](const std::string& name, const std::function<void()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const Error& e) {
      throw StageError(name, e.kind(), e.what());
    } catch (const std::exception& e) {
      throw StageError(name, ErrorKind::contract, e.what());
    }
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    summary.timings.push_back({name, dt.count()});
  };

  run("ingest", [&] { stages::ingest(cfg); });
  run("cluster-towers", [&] { stages::cluster_towers(cfg); });
  run("features", [&] { stages::features(cfg); });
  run("eigen", [&] { stages::eigen(cfg); });
  if (summary.auto_k) run("select-k", [&] { stages::select_k(cfg); });
  run("cluster", [&] { summary.cluster_k = stages::cluster(cfg); });
  run("label", [&] { stages::label(cfg); });
  run("evaluate", [&] {
    stages::baseline(cfg);
    summary.evaluated = stages::evaluate(cfg);
  });

  ojson m = artifact_header("eigenloc.manifest");
  m["version"] = kVersion;
  m["config"] = ojson::parse(config_json(cfg));
  m["threads"] = thread_count();
  auto timings = ojson::array();
  for (const auto& t : summary.timings) timings.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  m["stages"] = timings;
  m["cluster_k"] = summary.cluster_k;
  m["cluster_k_selection"] = summary.auto_k ? "bootstrap_davies_bouldin" : "fixed";
  m["evaluation"] = summary.evaluated ? "completed" : "skipped: no ground truth";

  ArtifactWriter w(cfg.output_dir);
  w.write_text(artifact::manifest, m.dump(2));
  w.commit();
  return summary;
}

}  // namespace eigenloc
