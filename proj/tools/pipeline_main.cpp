#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "strokesig/pipeline.hpp"

namespace {

// Exit codes: 0 success, 1 input/configuration error, 2 internal error.
constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kInternalError = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-source stroke risk pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;

  const std::map<std::string, std::function<void(const strokesig::PipelineConfig&)>>
      stages = {
          {"synth", strokesig::run_synth},     {"split", strokesig::run_split},
          {"curves", strokesig::run_curves},   {"sample", strokesig::run_sample},
          {"ica", strokesig::run_ica},         {"label", strokesig::run_label},
          {"train", strokesig::run_train},     {"explain", strokesig::run_explain},
          {"report", strokesig::run_report},   {"all", strokesig::run_all},
      };
  const std::map<std::string, std::string> descriptions = {
      {"synth", "generate a synthetic cohort with planted ground truth"},
      {"split", "assign patients to discovery/test partitions"},
      {"curves", "build daily clinical-variable curvesets"},
      {"sample", "sample discovery cross-sections and standardize"},
      {"ica", "fit the FastICA decomposition on the discovery matrix"},
      {"label", "refine code criteria and label records"},
      {"train", "search hyperparameters and fit the risk forest"},
      {"explain", "compute SHAP attributions and source rankings"},
      {"report", "render figures and the summary document"},
      {"all", "run every stage in dependency order"},
  };

  std::string selected;
  for (const auto& [name, fn] : stages) {
    auto* sub = app.add_subcommand(name, descriptions.at(name));
    sub->add_option("--config", config_path, "pipeline configuration (JSON)")
        ->required();
    sub->add_option("--out", out_override,
                    "output directory (overrides config out_dir)");
    sub->callback([&selected, name = name] { selected = name; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    strokesig::PipelineConfig cfg;
    try {
      cfg = strokesig::load_pipeline_config(config_path);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kInputError;
    }
    if (!out_override.empty()) cfg.out_dir = out_override;
    stages.at(selected)(cfg);
    return kOk;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}
