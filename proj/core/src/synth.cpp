#include "strokesig/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace strokesig {

namespace {

constexpr Day kBaseDate = 12784;  // 2005-01-01

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double laplace(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double x = u(rng);
  return (x < 0 ? 1.0 : -1.0) * std::log(1.0 - 2.0 * std::abs(x)) * M_SQRT1_2;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

const char* kStrokeClusterCodes[] = {"I63.9", "I63.52", "G43.6", "I63.3",
                                     "I63.0"};
constexpr int kStrokeClusterSize = 5;

void validate_config(const GeneratorConfig& c) {
  if (c.n_patients < 0 || c.n_condition < 0 || c.n_measurement < 0 ||
      c.n_medication < 0 || c.n_demographic < 0)
    throw std::invalid_argument("generator: negative counts");
  if (c.k_true < 1) throw std::invalid_argument("generator: k_true < 1");
  if (c.k_true > c.m())
    throw std::invalid_argument("generator: k_true exceeds variable count");
  if (c.include_stroke_cluster && c.n_condition < kStrokeClusterSize + 1)
    throw std::invalid_argument(
        "generator: stroke cluster needs at least 6 condition variables");
  if (c.mean_record_years <= 0 || c.visits_per_year < 0 ||
      c.base_condition_rate < 0 || c.base_stroke_rate < 0)
    throw std::invalid_argument("generator: negative rate");
}

std::vector<VariableDescriptor> build_dictionary(const GeneratorConfig& c) {
  std::vector<VariableDescriptor> dict;
  char buf[32];
  int generic = 0;
  for (int i = 0; i < c.n_condition; ++i) {
    if (c.include_stroke_cluster && i < kStrokeClusterSize) {
      dict.push_back({kStrokeClusterCodes[i], VariableKind::Condition,
                      std::string("stroke code ") + kStrokeClusterCodes[i]});
    } else {
      std::snprintf(buf, sizeof(buf), "Q%02d.%d", generic / 10, generic % 10);
      ++generic;
      dict.push_back({buf, VariableKind::Condition,
                      std::string("condition ") + buf});
    }
  }
  for (int i = 0; i < c.n_measurement; ++i) {
    if (i == 0) {
      dict.push_back({"age_years", VariableKind::Measurement, "age (years)"});
    } else {
      std::snprintf(buf, sizeof(buf), "meas_%02d", i);
      dict.push_back({buf, VariableKind::Measurement,
                      std::string("measurement ") + buf});
    }
  }
  for (int i = 0; i < c.n_medication; ++i) {
    std::snprintf(buf, sizeof(buf), "med_%02d", i);
    dict.push_back({buf, VariableKind::Medication,
                    std::string("medication ") + buf});
  }
  for (int i = 0; i < c.n_demographic; ++i) {
    std::snprintf(buf, sizeof(buf), "demo_%02d", i);
    dict.push_back({buf, VariableKind::Demographic,
                    std::string("demographic ") + buf});
  }
  return dict;
}

// Sparse-ish column loadings: a handful of strong weights per source plus a
// small dense background, giving linearly independent columns a.s.
Eigen::MatrixXd draw_mixing(int m, int k, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> small(0.0, 0.15), big(0.0, 1.2);
  std::uniform_int_distribution<int> row(0, m - 1);
  Eigen::MatrixXd a(m, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < m; ++i) a(i, j) = scale * small(rng);
    const int strong = std::min(m, 5);
    for (int s = 0; s < strong; ++s) a(row(rng), j) += scale * big(rng);
  }
  return a;
}

}  // namespace

std::pair<Cohort, SyntheticGroundTruth> generate_cohort(
    const GeneratorConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  const int m = cfg.m();

  Cohort cohort;
  cohort.variable_dictionary = build_dictionary(cfg);

  SyntheticGroundTruth truth;
  std::mt19937_64 root(splitmix64(seed));
  truth.true_mixing = draw_mixing(m, cfg.k_true, cfg.mixing_scale, root);
  truth.planted_risk_source = 0;

  // Make sure the risk source imprints on measurements and conditions even
  // with sparse draws, so the planted signal is learnable downstream.
  if (cfg.mixing_scale > 0) {
    for (int i = 0; i < m; i += 4) {
      if (cohort.variable_dictionary[i].kind == VariableKind::Condition ||
          cohort.variable_dictionary[i].kind == VariableKind::Measurement)
        truth.true_mixing(i, 0) += cfg.mixing_scale * ((i % 8 == 0) ? 0.9 : -0.7);
    }
  }

  std::vector<double> meas_baseline(cfg.n_measurement, 0.0);
  for (int i = 0; i < cfg.n_measurement; ++i)
    meas_baseline[i] = 40.0 + 7.0 * i;

  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int p = 0; p < cfg.n_patients; ++p) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(0x1000 + p)));

    PatientRecord rec;
    char idbuf[24];
    std::snprintf(idbuf, sizeof(idbuf), "P%06d", p);
    rec.patient_id = idbuf;

    const double span_years =
        cfg.mean_record_years *
        (1.0 + cfg.record_years_jitter * (2.0 * unit(rng) - 1.0));
    const int span_days = std::max(30, (int)std::lround(years_to_days(span_years)));
    rec.record_start = kBaseDate + (Day)(unit(rng) * 3650.0);
    rec.record_end = rec.record_start + span_days;

    Eigen::VectorXd s(cfg.k_true);
    for (int j = 0; j < cfg.k_true; ++j) s(j) = laplace(rng);
    truth.true_source_activations.push_back(s);

    Eigen::VectorXd load = truth.true_mixing * s;  // per-variable drive

    // Visit process.
    std::vector<Day> visits;
    {
      std::poisson_distribution<int> nv(
          std::max(1.0, cfg.visits_per_year * span_years));
      int n = std::max(2, nv(rng));
      for (int i = 0; i < n; ++i)
        visits.push_back(rec.record_start + (Day)(unit(rng) * span_days));
      std::sort(visits.begin(), visits.end());
      visits.erase(std::unique(visits.begin(), visits.end()), visits.end());
    }

    // Condition events: homogeneous Poisson per variable with exponential
    // link on the mixed source drive.
    int var = 0;
    for (int i = 0; i < cfg.n_condition; ++i, ++var) {
      const bool stroke_code =
          cfg.include_stroke_cluster && i < kStrokeClusterSize;
      if (stroke_code) continue;  // stroke cluster handled below
      const double lam =
          cfg.base_condition_rate *
          std::exp(std::clamp(load(var), -3.0, 3.0));
      std::poisson_distribution<int> ne(lam * span_years);
      int n = ne(rng);
      for (int e = 0; e < n; ++e) {
        Day d = rec.record_start + (Day)(unit(rng) * span_days);
        rec.condition_events.emplace_back(
            d, CodedConcept{cohort.variable_dictionary[var].id,
                            VariableKind::Condition});
      }
    }

    // Stroke cluster: first-event hazard scaled by the planted risk source.
    if (cfg.include_stroke_cluster) {
      const double hazard =
          cfg.base_stroke_rate *
          std::exp(cfg.risk_effect * s(truth.planted_risk_source));
      std::exponential_distribution<double> tte(std::max(hazard, 1e-12));
      const double t_years = tte(rng);
      auto add_stroke = [&](const char* code, Day d) {
        d = std::clamp<Day>(d, rec.record_start, rec.record_end);
        rec.condition_events.emplace_back(
            d, CodedConcept{code, VariableKind::Condition});
      };
      if (t_years < span_years - 0.1) {
        Day d0 = rec.record_start + (Day)std::lround(years_to_days(t_years));
        const char* code = unit(rng) < 0.7 ? "I63.9" : "I63.52";
        add_stroke(code, d0);
        add_stroke(code, d0 + 3 + (Day)(unit(rng) * 45.0));
        if (unit(rng) < 0.25) add_stroke("G43.6", d0 + (Day)(unit(rng) * 30.0));
        // Some strokes later resolve to a non-cryptogenic etiology.
        if (unit(rng) < 0.12)
          add_stroke(unit(rng) < 0.5 ? "I63.3" : "I63.0",
                     d0 + 10 + (Day)(unit(rng) * 60.0));
      } else if (unit(rng) < 0.04) {
        // Spurious single stroke code (suspected stroke, ruled out).
        add_stroke("I63.9", rec.record_start + (Day)(unit(rng) * span_days));
      } else if (unit(rng) < 0.02) {
        // Clearly non-cryptogenic stroke.
        Day d0 = rec.record_start + (Day)(unit(rng) * span_days);
        add_stroke("I63.3", d0);
        add_stroke("I63.3", std::min<Day>(rec.record_end, d0 + 20));
      }
      std::sort(rec.condition_events.begin(), rec.condition_events.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
    }

    // Measurements observed at a subset of visits with additive noise.
    const Day birth =
        rec.record_start - (Day)std::lround(years_to_days(20.0 + 50.0 * unit(rng)));
    std::normal_distribution<double> noise(0.0, cfg.measurement_noise_sd);
    for (int i = 0; i < cfg.n_measurement; ++i, ++var) {
      const auto& id = cohort.variable_dictionary[var].id;
      auto& obs = rec.measurements[id];
      for (Day v : visits) {
        if (unit(rng) > 0.6) continue;
        double value;
        if (i == 0) {
          value = days_to_years(static_cast<double>(v - birth));
        } else {
          value = meas_baseline[i] + 3.0 * load(var) + noise(rng);
        }
        obs.emplace_back(v, value);
      }
      if (obs.empty()) rec.measurements.erase(id);
    }

    // Medication list snapshots: presence is a patient trait with optional
    // discontinuation partway through the record.
    std::vector<std::size_t> stop_at(cfg.n_medication, visits.size());
    std::vector<bool> on_med(cfg.n_medication, false);
    for (int i = 0; i < cfg.n_medication; ++i, ++var) {
      on_med[i] = unit(rng) < sigmoid(2.0 * load(var) - 1.0);
      if (on_med[i] && unit(rng) < 0.3 && visits.size() > 2)
        stop_at[i] = 1 + (std::size_t)(unit(rng) * (double)(visits.size() - 1));
    }
    for (std::size_t vi = 0; vi < visits.size(); ++vi) {
      std::set<std::string> meds;
      for (int i = 0; i < cfg.n_medication; ++i) {
        if (on_med[i] && vi < stop_at[i])
          meds.insert(cohort.variable_dictionary[cfg.n_condition +
                                                 cfg.n_measurement + i]
                          .id);
      }
      rec.med_snapshots.emplace_back(visits[vi], std::move(meds));
    }

    for (int i = 0; i < cfg.n_demographic; ++i, ++var) {
      rec.demographics[cohort.variable_dictionary[var].id] =
          unit(rng) < sigmoid(1.5 * load(var)) ? 1 : 0;
    }

    cohort.records.push_back(std::move(rec));
  }

  return {std::move(cohort), std::move(truth)};
}

LinearMixture make_linear_mixture(int m, int k, int n, double noise_sd,
                                  std::uint64_t seed) {
  if (k < 1 || k > m || n < 1)
    throw std::invalid_argument("make_linear_mixture: bad shape");
  std::mt19937_64 rng(splitmix64(seed ^ 0xabcdef12345ULL));
  LinearMixture mix;
  mix.mixing = draw_mixing(m, k, 1.0, rng);
  mix.sources.resize(k, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < k; ++i) mix.sources(i, j) = laplace(rng);
  mix.data = mix.mixing * mix.sources;
  if (noise_sd > 0) {
    std::normal_distribution<double> noise(0.0, noise_sd);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) mix.data(i, j) += noise(rng);
  }
  return mix;
}

}  // namespace strokesig
