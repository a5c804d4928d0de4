#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "strokesig/pipeline.hpp"

using namespace strokesig;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PipelineConfig tiny_config(const fs::path& out) {
  PipelineConfig cfg;
  cfg.root_seed = 5;
  cfg.out_dir = out.string();
  cfg.generator.n_patients = 60;
  cfg.generator.mean_record_years = 6.0;
  cfg.ica_k = 8;
  cfg.search_budget = 1;
  cfg.search_space.n_trees = {20};
  cfg.search_space.max_depth = {6};
  cfg.search_space.min_samples_leaf = {5};
  cfg.search_space.max_features = {0.5};
  cfg.final_n_trees = 20;
  cfg.cv_folds = 3;
  return cfg;
}

}  // namespace

TEST_CASE("FNV-1a hashes match the reference values") {
  CHECK(hash_string("") == "cbf29ce484222325");
  CHECK(hash_string("a") == "af63dc4c8601ec8c");
  CHECK(hash_string("foobar") == "85944171f73967e8");
}

TEST_CASE("pipeline config survives a save/load round trip") {
  const auto dir = fresh_dir("strokesig_cfg_test");
  auto cfg = tiny_config(dir / "out");
  cfg.labeling_preset = "general_is";
  cfg.search_strategy = SearchStrategy::Grid;
  cfg.ica.nonlinearity = IcaNonlinearity::Cube;
  const auto p = (dir / "cfg.json").string();
  save_pipeline_config(cfg, p);
  auto back = load_pipeline_config(p);
  CHECK(back.root_seed == cfg.root_seed);
  CHECK(back.generator.n_patients == cfg.generator.n_patients);
  CHECK(back.labeling_preset == "general_is");
  CHECK(back.search_strategy == SearchStrategy::Grid);
  CHECK(back.ica.nonlinearity == IcaNonlinearity::Cube);
  CHECK(back.search_space.n_trees == cfg.search_space.n_trees);
  fs::remove_all(dir);
}

TEST_CASE("missing upstream artifacts name the producing subcommand") {
  const auto dir = fresh_dir("strokesig_missing_test");
  auto cfg = tiny_config(dir / "out");
  try {
    run_split(cfg);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("pipeline synth") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("rerunning a stage rewrites byte-identical artifacts") {
  const auto dir = fresh_dir("strokesig_rerun_test");
  auto cfg = tiny_config(dir / "out");
  run_synth(cfg);
  const auto h1 = hash_file((fs::path(cfg.out_dir) / "cohort.jsonl").string());
  run_synth(cfg);
  const auto h2 = hash_file((fs::path(cfg.out_dir) / "cohort.jsonl").string());
  CHECK(h1 == h2);
  fs::remove_all(dir);
}

TEST_CASE("split probability 0.2 lands near 0.2 on 10,000 patients") {
  const auto dir = fresh_dir("strokesig_split_test");
  auto cfg = tiny_config(dir / "out");
  // Minimal per-patient content: the split only needs patient ids.
  cfg.generator.n_patients = 10000;
  cfg.generator.n_condition = 1;
  cfg.generator.n_measurement = 0;
  cfg.generator.n_medication = 0;
  cfg.generator.n_demographic = 0;
  cfg.generator.k_true = 1;
  cfg.generator.include_stroke_cluster = false;
  cfg.generator.mean_record_years = 1.0;
  cfg.generator.base_condition_rate = 0.01;
  cfg.generator.visits_per_year = 0.5;
  run_synth(cfg);
  run_split(cfg);

  std::ifstream in(fs::path(cfg.out_dir) / "split.json");
  nlohmann::json j;
  in >> j;
  int test_count = 0, total = 0;
  for (const auto& [pid, side] : j.at("assignment").items()) {
    ++total;
    test_count += (side.get<std::string>() == "test");
  }
  CHECK(total == 10000);
  const double frac = static_cast<double>(test_count) / total;
  CHECK(frac > 0.18);
  CHECK(frac < 0.22);
  fs::remove_all(dir);
}

TEST_CASE("stage manifests carry the config hash and artifact hashes") {
  const auto dir = fresh_dir("strokesig_manifest_test");
  auto cfg = tiny_config(dir / "out");
  run_synth(cfg);
  std::ifstream in(fs::path(cfg.out_dir) / "synth.manifest.json");
  REQUIRE(in.good());
  nlohmann::json m;
  in >> m;
  CHECK(m.at("stage") == "synth");
  CHECK(m.at("config_hash").get<std::string>().size() == 16);
  CHECK(m.at("outputs").contains("cohort.jsonl"));
  CHECK(m.at("outputs").at("cohort.jsonl") ==
        hash_file((fs::path(cfg.out_dir) / "cohort.jsonl").string()));
  fs::remove_all(dir);
}

TEST_CASE("a small cohort runs end-to-end and enforces the leakage guard") {
  const auto dir = fresh_dir("strokesig_e2e_test");
  auto cfg = tiny_config(dir / "out");
  run_all(cfg);

  const fs::path out(cfg.out_dir);
  for (const char* f :
       {"cohort.jsonl", "split.json", "discovery_X.bin", "ica_model.bin",
        "labels.csv", "model.bin", "metrics.json", "shap_test.csv",
        "report/summary.json", "report/roc.svg"})
    CHECK(fs::exists(out / f));

  // No test patient may appear in the discovery matrix metadata.
  std::ifstream sin(out / "split.json");
  nlohmann::json sj;
  sin >> sj;
  std::ifstream min(out / "discovery_X.meta.json");
  nlohmann::json mj;
  min >> mj;
  for (const auto& c : mj.at("columns"))
    CHECK(sj.at("assignment").at(c.at("patient_id").get<std::string>()) !=
          "test");
  fs::remove_all(dir);
}
