#pragma once

#include <cstdint>
#include <string>

#include "strokesig/forest.hpp"
#include "strokesig/ica.hpp"
#include "strokesig/labeling.hpp"
#include "strokesig/synth.hpp"

namespace strokesig {

// Single configuration document driving every stage; all randomness derives
// from root_seed with per-stage mixing.
struct PipelineConfig {
  std::uint64_t root_seed = 42;
  std::string out_dir = "out";

  GeneratorConfig generator;

  double test_fraction = 0.2;

  CurveParams curves;

  double sampling_density_per_year = 1.0;

  int ica_k = 20;
  IcaOptions ica;

  std::string labeling_preset = "cryptogenic";  // or "general_is"
  std::string criteria_path;  // overrides preset when non-empty
  bool refine_criteria = true;

  HyperParamSpace search_space;
  int search_budget = 3;
  SearchStrategy search_strategy = SearchStrategy::Random;
  int cv_folds = 6;
  int final_n_trees = 200;

  int explain_top_sources = 10;
  int explain_top_variables = 12;
};

PipelineConfig load_pipeline_config(const std::string& path);
void save_pipeline_config(const PipelineConfig& cfg, const std::string& path);

// FNV-1a 64 over file bytes, hex-encoded; used by stage manifests.
std::string hash_file(const std::string& path);
std::string hash_string(const std::string& data);

// Pipeline stages. Each writes its artifacts plus a <stage>.manifest.json
// carrying the config hash and input/output hashes. A missing upstream
// artifact raises an error naming the subcommand that produces it.
void run_synth(const PipelineConfig& cfg);
void run_split(const PipelineConfig& cfg);
void run_curves(const PipelineConfig& cfg);
void run_label(const PipelineConfig& cfg);
void run_sample(const PipelineConfig& cfg);
void run_ica(const PipelineConfig& cfg);
void run_train(const PipelineConfig& cfg);
void run_explain(const PipelineConfig& cfg);
void run_report(const PipelineConfig& cfg);

// All stages in dependency order.
void run_all(const PipelineConfig& cfg);

}  // namespace strokesig
