#include "strokesig/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "strokesig/curves.hpp"
#include "strokesig/sampling.hpp"
#include "strokesig/shap.hpp"
#include "strokesig/svg.hpp"

namespace strokesig {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(const char* data, std::size_t len, std::uint64_t h) {
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& stage) {
  return splitmix(cfg.root_seed ^
                  fnv1a(stage.data(), stage.size(), 0xcbf29ce484222325ULL));
}

std::uint64_t patient_seed(std::uint64_t stage, const std::string& pid) {
  return splitmix(stage ^ fnv1a(pid.data(), pid.size(), 0xcbf29ce484222325ULL));
}

struct Paths {
  fs::path out;
  explicit Paths(const PipelineConfig& cfg) : out(cfg.out_dir) {}

  fs::path records() const { return out / "cohort.jsonl"; }
  fs::path variables() const { return out / "variables.json"; }
  fs::path ground_truth() const { return out / "ground_truth.json"; }
  fs::path split() const { return out / "split.json"; }
  fs::path curveset_dir() const { return out / "curvesets"; }
  fs::path curveset(const std::string& pid) const {
    return curveset_dir() / (pid + ".bin");
  }
  fs::path population_stats() const { return out / "population_stats.json"; }
  fs::path discovery_bin() const { return out / "discovery_X.bin"; }
  fs::path discovery_meta() const { return out / "discovery_X.meta.json"; }
  fs::path ica_model() const { return out / "ica_model.bin"; }
  fs::path discovery_sources_bin() const { return out / "sources_discovery.bin"; }
  fs::path discovery_sources_meta() const {
    return out / "sources_discovery.meta.json";
  }
  fs::path criteria_used() const { return out / "criteria_used.json"; }
  fs::path coincidence_report() const { return out / "coincidence_report.csv"; }
  fs::path labels() const { return out / "labels.csv"; }
  fs::path model() const { return out / "model.bin"; }
  fs::path trial_log() const { return out / "trial_log.csv"; }
  fs::path metrics() const { return out / "metrics.json"; }
  fs::path test_scores() const { return out / "test_scores.csv"; }
  fs::path proj_bin(const std::string& which) const {
    return out / ("proj_" + which + ".bin");
  }
  fs::path proj_meta(const std::string& which) const {
    return out / ("proj_" + which + ".meta.json");
  }
  fs::path shap_csv() const { return out / "shap_test.csv"; }
  fs::path ranking(const std::string& stat) const {
    return out / ("ranking_" + stat + ".csv");
  }
  fs::path waterfall_json() const { return out / "waterfall.json"; }
  fs::path signatures_json() const { return out / "signatures.json"; }
  fs::path report_dir() const { return out / "report"; }
  fs::path manifest(const std::string& stage) const {
    return out / (stage + ".manifest.json");
  }
};

void require_artifact(const fs::path& p, const std::string& producing_cmd) {
  if (!fs::exists(p))
    throw std::runtime_error("missing artifact " + p.string() +
                             "; run `pipeline " + producing_cmd + "` first");
}

json config_to_json(const PipelineConfig& c) {
  return json{
      {"root_seed", c.root_seed},
      {"out_dir", c.out_dir},
      {"generator",
       {{"n_patients", c.generator.n_patients},
        {"n_condition", c.generator.n_condition},
        {"n_measurement", c.generator.n_measurement},
        {"n_medication", c.generator.n_medication},
        {"n_demographic", c.generator.n_demographic},
        {"k_true", c.generator.k_true},
        {"include_stroke_cluster", c.generator.include_stroke_cluster},
        {"mean_record_years", c.generator.mean_record_years},
        {"record_years_jitter", c.generator.record_years_jitter},
        {"visits_per_year", c.generator.visits_per_year},
        {"base_condition_rate", c.generator.base_condition_rate},
        {"base_stroke_rate", c.generator.base_stroke_rate},
        {"risk_effect", c.generator.risk_effect},
        {"mixing_scale", c.generator.mixing_scale},
        {"measurement_noise_sd", c.generator.measurement_noise_sd}}},
      {"test_fraction", c.test_fraction},
      {"curves",
       {{"rash_bandwidth_days", c.curves.rash_bandwidth_days},
        {"rash_n_shifts", c.curves.rash_n_shifts},
        {"condition_baseline_rate", c.curves.condition_baseline_rate}}},
      {"sampling_density_per_year", c.sampling_density_per_year},
      {"ica",
       {{"k", c.ica_k},
        {"nonlinearity",
         c.ica.nonlinearity == IcaNonlinearity::LogCosh ? "logcosh" : "cube"},
        {"tol", c.ica.tol},
        {"max_iter", c.ica.max_iter}}},
      {"labeling",
       {{"preset", c.labeling_preset},
        {"criteria_path", c.criteria_path},
        {"refine", c.refine_criteria}}},
      {"train",
       {{"budget", c.search_budget},
        {"strategy", c.search_strategy == SearchStrategy::Random ? "random"
                     : c.search_strategy == SearchStrategy::Grid
                         ? "grid"
                         : "coordinate_refine"},
        {"cv_folds", c.cv_folds},
        {"final_n_trees", c.final_n_trees},
        {"space",
         {{"n_trees", c.search_space.n_trees},
          {"max_depth", c.search_space.max_depth},
          {"min_samples_leaf", c.search_space.min_samples_leaf},
          {"max_features", c.search_space.max_features}}}}},
      {"explain",
       {{"top_sources", c.explain_top_sources},
        {"top_variables", c.explain_top_variables}}}};
}

std::string config_hash(const PipelineConfig& c) {
  json j = config_to_json(c);
  j.erase("out_dir");  // hash semantic parameters, not artifact location
  return hash_string(j.dump());
}

void write_manifest(const PipelineConfig& cfg, const Paths& paths,
                    const std::string& stage,
                    const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs) {
  json m = {{"stage", stage},
            {"config_hash", config_hash(cfg)},
            {"root_seed", cfg.root_seed}};
  json in = json::object(), out = json::object();
  for (const auto& p : inputs) in[p.filename().string()] = hash_file(p.string());
  for (const auto& p : outputs)
    out[p.filename().string()] = hash_file(p.string());
  m["inputs"] = std::move(in);
  m["outputs"] = std::move(out);
  std::ofstream f(paths.manifest(stage));
  f << m.dump(2) << "\n";
}

void check_staleness(const PipelineConfig& cfg, const Paths& paths,
                     const std::string& upstream_stage) {
  const auto p = paths.manifest(upstream_stage);
  if (!fs::exists(p)) return;
  std::ifstream in(p);
  json m;
  in >> m;
  if (m.value("config_hash", "") != config_hash(cfg))
    std::cerr << "warning: artifact from stage '" << upstream_stage
              << "' was produced with a different configuration (stale?)\n";
}

std::map<std::string, std::string> read_split(const Paths& paths) {
  std::ifstream in(paths.split());
  json j;
  in >> j;
  return j.at("assignment").get<std::map<std::string, std::string>>();
}

CodeCriteria criteria_from_config(const PipelineConfig& cfg) {
  if (!cfg.criteria_path.empty()) return read_criteria_json(cfg.criteria_path);
  if (cfg.labeling_preset == "general_is")
    return CodeCriteria::general_is_default();
  if (cfg.labeling_preset == "cryptogenic")
    return CodeCriteria::cryptogenic_default();
  throw std::runtime_error("unknown labeling preset: " + cfg.labeling_preset);
}

// Streamed column collection so only one curveset is resident at a time.
struct ColumnAccumulator {
  std::vector<Eigen::VectorXd> cols;
  std::vector<ColumnMeta> meta;

  void add(const Curveset& cs, const std::vector<Day>& dates) {
    auto sorted = dates;
    std::sort(sorted.begin(), sorted.end());
    for (Day d : sorted) {
      if (d < cs.start_date || d >= cs.start_date + cs.days())
        throw std::logic_error("sampled date outside curveset span");
      cols.push_back(cs.column_at(d));
      meta.push_back({cs.patient_id, d});
    }
  }

  DataMatrix finish() const {
    if (cols.empty()) throw std::runtime_error("no samples collected");
    DataMatrix x;
    x.values.resize(cols[0].size(), static_cast<int>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
      x.values.col(static_cast<int>(j)) = cols[j];
    x.columns = meta;
    return x;
  }
};

}  // namespace

std::string hash_string(const std::string& data) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a(data.data(), data.size(), 0xcbf29ce484222325ULL)));
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash missing file " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  char out[20];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  in >> j;

  PipelineConfig c;
  c.root_seed = j.at("root_seed").get<std::uint64_t>();  // seeds are explicit
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    c.generator.n_patients = g.value("n_patients", c.generator.n_patients);
    c.generator.n_condition = g.value("n_condition", c.generator.n_condition);
    c.generator.n_measurement =
        g.value("n_measurement", c.generator.n_measurement);
    c.generator.n_medication =
        g.value("n_medication", c.generator.n_medication);
    c.generator.n_demographic =
        g.value("n_demographic", c.generator.n_demographic);
    c.generator.k_true = g.value("k_true", c.generator.k_true);
    c.generator.include_stroke_cluster =
        g.value("include_stroke_cluster", c.generator.include_stroke_cluster);
    c.generator.mean_record_years =
        g.value("mean_record_years", c.generator.mean_record_years);
    c.generator.record_years_jitter =
        g.value("record_years_jitter", c.generator.record_years_jitter);
    c.generator.visits_per_year =
        g.value("visits_per_year", c.generator.visits_per_year);
    c.generator.base_condition_rate =
        g.value("base_condition_rate", c.generator.base_condition_rate);
    c.generator.base_stroke_rate =
        g.value("base_stroke_rate", c.generator.base_stroke_rate);
    c.generator.risk_effect = g.value("risk_effect", c.generator.risk_effect);
    c.generator.mixing_scale =
        g.value("mixing_scale", c.generator.mixing_scale);
    c.generator.measurement_noise_sd =
        g.value("measurement_noise_sd", c.generator.measurement_noise_sd);
  }
  c.test_fraction = j.value("test_fraction", c.test_fraction);
  if (j.contains("curves")) {
    const auto& cv = j["curves"];
    c.curves.rash_bandwidth_days =
        cv.value("rash_bandwidth_days", c.curves.rash_bandwidth_days);
    c.curves.rash_n_shifts = cv.value("rash_n_shifts", c.curves.rash_n_shifts);
    c.curves.condition_baseline_rate =
        cv.value("condition_baseline_rate", c.curves.condition_baseline_rate);
  }
  c.sampling_density_per_year =
      j.value("sampling_density_per_year", c.sampling_density_per_year);
  if (j.contains("ica")) {
    const auto& i = j["ica"];
    c.ica_k = i.value("k", c.ica_k);
    const std::string nl = i.value("nonlinearity", "logcosh");
    c.ica.nonlinearity =
        nl == "cube" ? IcaNonlinearity::Cube : IcaNonlinearity::LogCosh;
    c.ica.tol = i.value("tol", c.ica.tol);
    c.ica.max_iter = i.value("max_iter", c.ica.max_iter);
  }
  if (j.contains("labeling")) {
    const auto& l = j["labeling"];
    c.labeling_preset = l.value("preset", c.labeling_preset);
    c.criteria_path = l.value("criteria_path", c.criteria_path);
    c.refine_criteria = l.value("refine", c.refine_criteria);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    c.search_budget = t.value("budget", c.search_budget);
    const std::string s = t.value("strategy", "random");
    c.search_strategy = s == "grid"              ? SearchStrategy::Grid
                        : s == "coordinate_refine"
                            ? SearchStrategy::CoordinateRefine
                            : SearchStrategy::Random;
    c.cv_folds = t.value("cv_folds", c.cv_folds);
    c.final_n_trees = t.value("final_n_trees", c.final_n_trees);
    if (t.contains("space")) {
      const auto& sp = t["space"];
      if (sp.contains("n_trees"))
        c.search_space.n_trees = sp["n_trees"].get<std::vector<int>>();
      if (sp.contains("max_depth"))
        c.search_space.max_depth = sp["max_depth"].get<std::vector<int>>();
      if (sp.contains("min_samples_leaf"))
        c.search_space.min_samples_leaf =
            sp["min_samples_leaf"].get<std::vector<int>>();
      if (sp.contains("max_features"))
        c.search_space.max_features =
            sp["max_features"].get<std::vector<double>>();
    }
  }
  if (j.contains("explain")) {
    c.explain_top_sources =
        j["explain"].value("top_sources", c.explain_top_sources);
    c.explain_top_variables =
        j["explain"].value("top_variables", c.explain_top_variables);
  }
  return c;
}

void save_pipeline_config(const PipelineConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << config_to_json(cfg).dump(2) << "\n";
}

void run_synth(const PipelineConfig& cfg) {
  Paths paths(cfg);
  fs::create_directories(paths.out);
  auto [cohort, truth] = generate_cohort(cfg.generator, stage_seed(cfg, "synth"));
  write_cohort_jsonl(cohort, paths.records().string(),
                     paths.variables().string());

  json gt;
  gt["planted_risk_source"] = truth.planted_risk_source;
  json mixing = json::array();
  for (int i = 0; i < truth.true_mixing.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < truth.true_mixing.cols(); ++j)
      row.push_back(truth.true_mixing(i, j));
    mixing.push_back(std::move(row));
  }
  gt["true_mixing"] = std::move(mixing);
  json acts = json::object();
  for (std::size_t p = 0; p < truth.true_source_activations.size(); ++p) {
    json v = json::array();
    for (int i = 0; i < truth.true_source_activations[p].size(); ++i)
      v.push_back(truth.true_source_activations[p](i));
    acts[cohort.records[p].patient_id] = std::move(v);
  }
  gt["activations"] = std::move(acts);
  std::ofstream out(paths.ground_truth());
  out << gt.dump() << "\n";

  write_manifest(cfg, paths, "synth", {},
                 {paths.records(), paths.variables(), paths.ground_truth()});
}

void run_split(const PipelineConfig& cfg) {
  Paths paths(cfg);
  require_artifact(paths.records(), "synth");
  check_staleness(cfg, paths, "synth");
  auto cohort = read_cohort_jsonl(paths.records().string(),
                                  paths.variables().string());
  const std::uint64_t seed = stage_seed(cfg, "split");
  json assignment = json::object();
  for (const auto& rec : cohort.records) {
    const double u =
        (patient_seed(seed, rec.patient_id) >> 11) * 0x1.0p-53;
    assignment[rec.patient_id] = u < cfg.test_fraction ? "test" : "train";
  }
  std::ofstream out(paths.split());
  out << json{{"assignment", assignment}}.dump() << "\n";
  write_manifest(cfg, paths, "split", {paths.records()}, {paths.split()});
}

void run_curves(const PipelineConfig& cfg) {
  Paths paths(cfg);
  require_artifact(paths.records(), "synth");
  require_artifact(paths.split(), "split");
  check_staleness(cfg, paths, "synth");
  auto cohort = read_cohort_jsonl(paths.records().string(),
                                  paths.variables().string());
  auto split = read_split(paths);

  // Population medians from the discovery portion only (no test leakage).
  Cohort discovery;
  discovery.variable_dictionary = cohort.variable_dictionary;
  for (const auto& rec : cohort.records)
    if (split[rec.patient_id] != "test") discovery.records.push_back(rec);
  auto stats = compute_population_stats(discovery);
  {
    json j = json::object();
    for (const auto& [var, med] : stats.measurement_median) j[var] = med;
    std::ofstream out(paths.population_stats());
    out << json{{"measurement_median", j}}.dump(2) << "\n";
  }

  fs::create_directories(paths.curveset_dir());
  const std::uint64_t seed = stage_seed(cfg, "curves");
  for (const auto& rec : cohort.records) {
    auto cs = build_curveset(rec, cohort.variable_dictionary, stats,
                             cfg.curves, patient_seed(seed, rec.patient_id));
    write_curveset(cs, paths.curveset(rec.patient_id).string());
  }
  write_manifest(cfg, paths, "curves", {paths.records()},
                 {paths.population_stats()});
}

void run_sample(const PipelineConfig& cfg) {
  Paths paths(cfg);
  require_artifact(paths.records(), "synth");
  require_artifact(paths.split(), "split");
  require_artifact(paths.population_stats(), "curves");
  check_staleness(cfg, paths, "curves");
  auto cohort = read_cohort_jsonl(paths.records().string(),
                                  paths.variables().string());
  auto split = read_split(paths);
  const std::uint64_t seed = stage_seed(cfg, "sample");

  ColumnAccumulator acc;
  for (const auto& rec : cohort.records) {
    if (split[rec.patient_id] == "test") continue;
    auto dates =
        sample_times(rec.record_start, rec.record_end,
                     cfg.sampling_density_per_year, /*force=*/false,
                     patient_seed(seed, rec.patient_id));
    if (dates.empty()) continue;
    require_artifact(paths.curveset(rec.patient_id), "curves");
    auto cs = read_curveset(paths.curveset(rec.patient_id).string());
    acc.add(cs, dates);
  }
  DataMatrix x = acc.finish();

  // Leakage guard: no test patient may appear in the discovery matrix.
  for (const auto& c : x.columns)
    if (split[c.patient_id] == "test")
      throw std::logic_error("leakage: test patient in discovery matrix");

  std::vector<VariableKind> kinds;
  for (const auto& v : cohort.variable_dictionary) kinds.push_back(v.kind);
  auto [xs, stats] = standardize(x, kinds);
  write_matrix(xs, &stats, paths.discovery_bin().string(),
               paths.discovery_meta().string());
  write_manifest(cfg, paths, "sample", {paths.records(), paths.split()},
                 {paths.discovery_bin(), paths.discovery_meta()});
}

void run_ica(const PipelineConfig& cfg) {
  Paths paths(cfg);
  require_artifact(paths.discovery_bin(), "sample");
  check_staleness(cfg, paths, "sample");
  auto [x, stats] = read_matrix(paths.discovery_bin().string(),
                                paths.discovery_meta().string());
  const int k = std::min({cfg.ica_k, x.rows(), x.cols()});
  IcaOptions opts = cfg.ica;
  opts.seed = stage_seed(cfg, "ica");
  auto [model, sources] = fit_ica(x, k, opts);
  if (!model.report.converged)
    std::cerr << "warning: FastICA did not converge (delta="
              << model.report.final_delta << ")\n";
  write_ica_model(model, paths.ica_model().string());

  DataMatrix s;
  s.values = sources.values;
  s.columns = sources.columns;
  write_matrix(s, nullptr, paths.discovery_sources_bin().string(),
               paths.discovery_sources_meta().string());
  write_manifest(cfg, paths, "ica", {paths.discovery_bin()},
                 {paths.ica_model(), paths.discovery_sources_bin()});
}

void run_label(const PipelineConfig& cfg) {
  Paths paths(cfg);
  require_artifact(paths.records(), "synth");
  require_artifact(paths.split(), "split");
  auto cohort = read_cohort_jsonl(paths.records().string(),
                                  paths.variables().string());
  auto split = read_split(paths);

  CodeCriteria criteria = criteria_from_config(cfg);
  if (cfg.refine_criteria && !criteria.noncrypto_specific.empty()) {
    Cohort discovery;
    discovery.variable_dictionary = cohort.variable_dictionary;
    for (const auto& rec : cohort.records)
      if (split[rec.patient_id] != "test") discovery.records.push_back(rec);
    auto refined = refine_inclusion_codes(discovery, criteria);
    criteria = refined.criteria;
    std::ofstream rep(paths.coincidence_report());
    rep << "code,n_with_code,n_coinciding,rate,removed\n";
    for (const auto& e : refined.report) {
      rep << e.code << "," << e.n_with_code << "," << e.n_coinciding << ",";
      if (e.rate) rep << *e.rate;
      rep << "," << (e.removed ? 1 : 0) << "\n";
    }
  }
  write_criteria_json(criteria, paths.criteria_used().string());

  std::vector<LabeledRecordRow> rows;
  for (const auto& rec : cohort.records) {
    LabeledRecordRow row;
    row.patient_id = rec.patient_id;
    row.outcome = label_record(rec, criteria);
    row.window = prediction_window(rec, row.outcome);
    rows.push_back(std::move(row));
  }
  write_labels_csv(rows, paths.labels().string());
  write_manifest(cfg, paths, "label", {paths.records(), paths.split()},
                 {paths.labels(), paths.criteria_used()});
}

void run_train(const PipelineConfig& cfg) {
  Paths paths(cfg);
  require_artifact(paths.labels(), "label");
  require_artifact(paths.ica_model(), "ica");
  require_artifact(paths.discovery_meta(), "sample");
  check_staleness(cfg, paths, "ica");
  check_staleness(cfg, paths, "label");

  auto split = read_split(paths);
  auto labels = read_labels_csv(paths.labels().string());
  auto model = read_ica_model(paths.ica_model().string());
  auto [dx, disc_stats] = read_matrix(paths.discovery_bin().string(),
                                      paths.discovery_meta().string());
  const std::uint64_t seed = stage_seed(cfg, "train");

  ColumnAccumulator acc_train, acc_test;
  std::map<std::string, int> label_of;
  for (const auto& row : labels) {
    if (row.window.excluded) continue;
    label_of[row.patient_id] = row.outcome.positive ? 1 : 0;
    auto dates = sample_times(row.window.start, row.window.end,
                              cfg.sampling_density_per_year, /*force=*/true,
                              patient_seed(seed, row.patient_id));
    require_artifact(paths.curveset(row.patient_id), "curves");
    auto cs = read_curveset(paths.curveset(row.patient_id).string());
    (split[row.patient_id] == "test" ? acc_test : acc_train).add(cs, dates);
  }

  auto make_dataset = [&](ColumnAccumulator& acc, const std::string& which) {
    DataMatrix e = acc.finish();
    e = apply_standardization(e, disc_stats);
    SourceMatrix s = project(e, model);
    DataMatrix persist;
    persist.values = s.values;
    persist.columns = s.columns;
    write_matrix(persist, nullptr, paths.proj_bin(which).string(),
                 paths.proj_meta(which).string());
    LabeledDataset data;
    data.features = s.values.transpose();
    for (const auto& c : s.columns) {
      data.labels.push_back(label_of[c.patient_id]);
      data.groups.push_back(c.patient_id);
    }
    return data;
  };
  LabeledDataset train = make_dataset(acc_train, "train");
  LabeledDataset test = make_dataset(acc_test, "test");

  auto search = search_hyperparams(train, cfg.search_space, cfg.search_budget,
                                   cfg.search_strategy, seed, cfg.cv_folds);
  write_trial_log_csv(search, paths.trial_log().string());

  HyperParams final_hp = search.best;
  final_hp.n_trees = std::max(final_hp.n_trees, cfg.final_n_trees);
  final_hp.seed = seed;
  auto forest = fit_forest(train, final_hp);
  write_forest(forest, paths.model().string());

  std::vector<double> test_scores;
  for (int i = 0; i < test.n(); ++i)
    test_scores.push_back(
        forest.predict_proba(test.features.row(i).transpose()));
  const double test_auroc = auroc(test_scores, test.labels);

  {
    std::ofstream out(paths.test_scores());
    auto [px, pstats] = read_matrix(paths.proj_bin("test").string(),
                                    paths.proj_meta("test").string());
    out << "patient_id,date,score,label\n";
    for (int i = 0; i < test.n(); ++i)
      out << px.columns[i].patient_id << ","
          << format_date(px.columns[i].sample_date) << "," << test_scores[i]
          << "," << test.labels[i] << "\n";
  }
  {
    json m = {{"cv_auroc", search.best_auroc},
              {"test_auroc", test_auroc},
              {"n_train_samples", train.n()},
              {"n_test_samples", test.n()},
              {"label_preset", cfg.labeling_preset},
              {"best_hyperparams",
               {{"n_trees", final_hp.n_trees},
                {"max_depth", final_hp.max_depth},
                {"min_samples_leaf", final_hp.min_samples_leaf},
                {"max_features", final_hp.max_features}}}};
    std::ofstream out(paths.metrics());
    out << m.dump(2) << "\n";
  }
  write_manifest(
      cfg, paths, "train",
      {paths.labels(), paths.ica_model(), paths.discovery_bin()},
      {paths.model(), paths.trial_log(), paths.metrics(), paths.test_scores(),
       paths.proj_bin("train"), paths.proj_bin("test")});
}

void run_explain(const PipelineConfig& cfg) {
  Paths paths(cfg);
  require_artifact(paths.model(), "train");
  require_artifact(paths.proj_bin("test"), "train");
  require_artifact(paths.ica_model(), "ica");
  check_staleness(cfg, paths, "train");

  auto forest = read_forest(paths.model().string());
  auto model = read_ica_model(paths.ica_model().string());
  auto [proj, pstats] = read_matrix(paths.proj_bin("test").string(),
                                    paths.proj_meta("test").string());
  auto [disc_sources, dstats] =
      read_matrix(paths.discovery_sources_bin().string(),
                  paths.discovery_sources_meta().string());
  auto cohort = read_cohort_jsonl(paths.records().string(),
                                  paths.variables().string());
  std::vector<std::string> variable_ids;
  for (const auto& v : cohort.variable_dictionary)
    variable_ids.push_back(v.id);

  // One instance per test record: the forced final-year sample (latest date).
  std::map<std::string, int> chosen;
  for (int j = 0; j < proj.cols(); ++j) {
    auto it = chosen.find(proj.columns[j].patient_id);
    if (it == chosen.end() ||
        proj.columns[it->second].sample_date < proj.columns[j].sample_date)
      chosen[proj.columns[j].patient_id] = j;
  }

  const int k = proj.rows();
  Eigen::MatrixXd shap_matrix(chosen.size(), k);
  std::vector<std::string> record_ids;
  ShapVector first_shap;
  int r = 0;
  for (const auto& [pid, j] : chosen) {
    auto sv = tree_shap(forest, proj.values.col(j));
    if (sv.additivity_error() > 1e-9)
      throw std::runtime_error("tree_shap local accuracy violated");
    shap_matrix.row(r) = sv.contributions.transpose();
    record_ids.push_back(pid);
    if (r == 0) first_shap = sv;
    ++r;
  }
  write_shap_csv(shap_matrix, record_ids, paths.shap_csv().string());

  auto ranking_mean = rank_sources(shap_matrix, RankStatistic::MeanAbs);
  auto ranking_max = rank_sources(shap_matrix, RankStatistic::MaxAbs);
  write_ranking_csv(ranking_mean, paths.ranking("mean").string());
  write_ranking_csv(ranking_max, paths.ranking("max").string());

  auto wf = waterfall(first_shap, 8);
  {
    json steps = json::array();
    for (const auto& s : wf.steps)
      steps.push_back({{"source", s.source},
                       {"contribution", s.contribution},
                       {"cumulative", s.cumulative}});
    json j = {{"record", record_ids.empty() ? "" : record_ids.front()},
              {"base_value", wf.base_value},
              {"prediction", wf.prediction},
              {"steps", steps}};
    std::ofstream out(paths.waterfall_json());
    out << j.dump(2) << "\n";
  }

  // Signature descriptions for the top-ranked sources, with per-source
  // expression percentiles to support negative-expression reading.
  json sigs = json::array();
  const int n_top =
      std::min<int>(cfg.explain_top_sources, (int)ranking_mean.entries.size());
  for (int i = 0; i < n_top; ++i) {
    const int src = ranking_mean.entries[i].source;
    Eigen::VectorXd expr = disc_sources.values.row(src).transpose();
    auto sig = describe_signature(model.mixing, src, cfg.explain_top_variables,
                                  variable_ids, &expr);
    json entries = json::array();
    for (const auto& e : sig.entries)
      entries.push_back({{"variable", e.variable_id},
                         {"weight", e.weight},
                         {"normalized_length", e.normalized_length}});
    sigs.push_back({{"source", src},
                    {"rank", i},
                    {"mean_abs_shap", ranking_mean.entries[i].mean_abs},
                    {"max_abs_shap", ranking_mean.entries[i].max_abs},
                    {"entries", entries},
                    {"hist_edges", sig.hist_edges},
                    {"hist_counts", sig.hist_counts}});
  }
  {
    std::ofstream out(paths.signatures_json());
    out << json{{"signatures", sigs}}.dump(2) << "\n";
  }
  write_manifest(cfg, paths, "explain",
                 {paths.model(), paths.proj_bin("test")},
                 {paths.shap_csv(), paths.ranking("mean"),
                  paths.ranking("max"), paths.waterfall_json(),
                  paths.signatures_json()});
}

void run_report(const PipelineConfig& cfg) {
  Paths paths(cfg);
  require_artifact(paths.metrics(), "train");
  require_artifact(paths.test_scores(), "train");
  require_artifact(paths.waterfall_json(), "explain");
  require_artifact(paths.signatures_json(), "explain");
  check_staleness(cfg, paths, "explain");
  fs::create_directories(paths.report_dir());

  json metrics;
  {
    std::ifstream in(paths.metrics());
    in >> metrics;
  }

  std::vector<double> scores;
  std::vector<int> labels;
  {
    std::ifstream in(paths.test_scores());
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string f[4];
      for (int i = 0; i < 4; ++i) std::getline(ss, f[i], ',');
      scores.push_back(std::stod(f[2]));
      labels.push_back(std::stoi(f[3]));
    }
  }
  render_roc_svg(scores, labels, metrics.value("test_auroc", 0.0),
                 (paths.report_dir() / "roc.svg").string());

  {
    std::ifstream in(paths.waterfall_json());
    json j;
    in >> j;
    Waterfall wf;
    wf.base_value = j.at("base_value").get<double>();
    wf.prediction = j.at("prediction").get<double>();
    for (const auto& s : j.at("steps")) {
      wf.steps.push_back({s.at("source").get<int>(),
                          s.at("contribution").get<double>(),
                          s.at("cumulative").get<double>()});
    }
    render_waterfall_svg(wf, (paths.report_dir() / "waterfall.svg").string());
  }

  std::vector<fs::path> outputs = {paths.report_dir() / "roc.svg",
                                   paths.report_dir() / "waterfall.svg"};
  {
    std::ifstream in(paths.signatures_json());
    json j;
    in >> j;
    int emitted = 0;
    for (const auto& s : j.at("signatures")) {
      if (emitted >= 4) break;
      SignatureDescription sig;
      sig.source = s.at("source").get<int>();
      for (const auto& e : s.at("entries")) {
        SignatureEntry entry;
        entry.variable_id = e.at("variable").get<std::string>();
        entry.weight = e.at("weight").get<double>();
        entry.normalized_length = e.at("normalized_length").get<double>();
        sig.entries.push_back(std::move(entry));
      }
      sig.hist_edges = s.at("hist_edges").get<std::vector<double>>();
      sig.hist_counts = s.at("hist_counts").get<std::vector<int>>();
      auto p = paths.report_dir() /
               ("signature_" + std::to_string(sig.source) + ".svg");
      render_signature_svg(sig, p.string());
      outputs.push_back(p);
      ++emitted;
    }
  }

  // Summary bundles the metrics plus the full upstream manifest chain.
  json chain = json::object();
  for (const char* stage : {"synth", "split", "curves", "sample", "ica",
                            "label", "train", "explain"}) {
    const auto p = paths.manifest(stage);
    if (fs::exists(p)) chain[stage] = hash_file(p.string());
  }
  json summary = {{"metrics", metrics}, {"artifact_chain", chain}};
  const auto summary_path = paths.report_dir() / "summary.json";
  {
    std::ofstream out(summary_path);
    out << summary.dump(2) << "\n";
  }
  outputs.push_back(summary_path);
  write_manifest(cfg, paths, "report",
                 {paths.metrics(), paths.test_scores()}, outputs);
}

void run_all(const PipelineConfig& cfg) {
  run_synth(cfg);
  run_split(cfg);
  run_curves(cfg);
  run_sample(cfg);
  run_ica(cfg);
  run_label(cfg);
  run_train(cfg);
  run_explain(cfg);
  run_report(cfg);
}

}  // namespace strokesig
