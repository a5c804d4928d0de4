#pragma once

#include <cstdint>
#include <utility>

#include "strokesig/cohort.hpp"

namespace strokesig {

// Generator settings. Sources are patient-level traits mixed linearly into
// the observable variables; condition intensities use an exponential link and
// a designated risk source raises the hazard of a synthetic stroke cluster.
struct GeneratorConfig {
  int n_patients = 2000;
  int n_condition = 24;  // first slots are the stroke cluster when enabled
  int n_measurement = 18;  // slot 0 is an age variable when present
  int n_medication = 12;
  int n_demographic = 6;
  int k_true = 8;
  bool include_stroke_cluster = true;

  double mean_record_years = 8.0;
  double record_years_jitter = 0.5;  // span ~ mean*(1 +/- jitter), uniform
  double visits_per_year = 6.0;
  double base_condition_rate = 0.8;  // events/yr at zero source expression
  double base_stroke_rate = 0.02;    // first-stroke hazard/yr at zero risk
  double risk_effect = 1.6;          // log-hazard slope on the risk source
  double mixing_scale = 1.0;
  double measurement_noise_sd = 0.5;

  int m() const {
    return n_condition + n_measurement + n_medication + n_demographic;
  }
};

// Deterministic given (config, seed). Throws std::invalid_argument on bad
// config (k_true > m, negative rates).
std::pair<Cohort, SyntheticGroundTruth> generate_cohort(
    const GeneratorConfig& config, std::uint64_t seed);

// Plain linear mixture X = A*S + noise with Laplace sources, for source
// recovery oracles that bypass the record pipeline.
struct LinearMixture {
  Eigen::MatrixXd mixing;   // m x k
  Eigen::MatrixXd sources;  // k x n
  Eigen::MatrixXd data;     // m x n
};

LinearMixture make_linear_mixture(int m, int k, int n, double noise_sd,
                                  std::uint64_t seed);

}  // namespace strokesig
