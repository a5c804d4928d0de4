// Acceptance harness: one criterion per function, one pass/fail line each.
// Exit code is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "strokesig/curves.hpp"
#include "strokesig/forest.hpp"
#include "strokesig/ica.hpp"
#include "strokesig/labeling.hpp"
#include "strokesig/pipeline.hpp"
#include "strokesig/sampling.hpp"
#include "strokesig/shap.hpp"
#include "strokesig/synth.hpp"

using namespace strokesig;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << name;
  if (!detail.empty()) std::cout << " — " << detail;
  std::cout << "\n" << std::flush;
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// --- 1. End-to-end pipeline on the full-size synthetic cohort ---------------

fs::path g_e2e_out;  // reused by the SHAP criterion

void criterion_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineConfig cfg;
  cfg.root_seed = 42;
  g_e2e_out = fresh_dir("strokesig_accept_e2e") / "out";
  cfg.out_dir = g_e2e_out.string();
  cfg.generator.n_patients = 2000;
  cfg.ica_k = 20;
  cfg.search_budget = 3;
  cfg.search_space.n_trees = {100};
  cfg.search_space.max_depth = {8, 12};
  cfg.search_space.min_samples_leaf = {5, 10};
  cfg.search_space.max_features = {0.5};
  cfg.final_n_trees = 200;
  try {
    run_all(cfg);
  } catch (const std::exception& e) {
    report("end-to-end AUROC", false, std::string("pipeline error: ") + e.what());
    return;
  }
  const double elapsed = seconds_since(t0);

  nlohmann::json metrics;
  std::ifstream in(g_e2e_out / "metrics.json");
  in >> metrics;
  const double auc = metrics.at("test_auroc").get<double>();
  std::ostringstream d;
  d << "holdout AUROC " << auc << " (>= 0.75), " << elapsed << " s (<= 600)";
  report("end-to-end AUROC", auc >= 0.75 && elapsed <= 600.0, d.str());
}

// --- 2. ICA recovery on a planted linear mixture ----------------------------

void criterion_ica_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const int m = 60, k = 8, n = 20000;
  auto mix = make_linear_mixture(m, k, n, 0.05, 4242);
  DataMatrix x;
  x.values = mix.data;
  for (int j = 0; j < n; ++j) x.columns.push_back({"P", j});

  auto [model, s_est] = fit_ica(x, k, IcaOptions{});
  const double amari = amari_index(model.mixing, mix.mixing);

  // Greedy |correlation| matching of estimated to planted sources.
  Eigen::MatrixXd corr(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      Eigen::VectorXd a = s_est.values.row(i), b = mix.sources.row(j);
      a.array() -= a.mean();
      b.array() -= b.mean();
      corr(i, j) = std::abs(a.dot(b) / (a.norm() * b.norm()));
    }
  std::vector<bool> used(k, false);
  double min_corr = 1.0;
  for (int i = 0; i < k; ++i) {
    int best = -1;
    for (int j = 0; j < k; ++j)
      if (!used[j] && (best < 0 || corr(i, j) > corr(i, best))) best = j;
    used[best] = true;
    min_corr = std::min(min_corr, corr(i, best));
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << "Amari " << amari << " (<= 0.05), min matched |corr| " << min_corr
    << " (>= 0.95), " << elapsed << " s (<= 60)";
  report("ICA recovery", amari <= 0.05 && min_corr >= 0.95 && elapsed <= 60.0,
         d.str());
}

// --- 3. SHAP exactness ------------------------------------------------------

void criterion_shap_exactness() {
  std::mt19937_64 rng(777);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u;

  bool ok = true;
  std::ostringstream why;
  int forests = 0, instances = 0;
  for (std::uint64_t rep = 0; rep < 50 && ok; ++rep) {
    const int k = 2 + static_cast<int>(rep % 11);  // up to 12 features
    const int n = 60 + static_cast<int>(rep % 7) * 20;
    LabeledDataset d;
    d.features.resize(n, k);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) d.features(i, j) = g(rng);
      const double s = d.features(i, 0) - 0.7 * d.features(i, k - 1);
      d.labels.push_back(u(rng) < 1.0 / (1.0 + std::exp(-s)) ? 1 : 0);
      d.groups.push_back("G" + std::to_string(i));
    }
    bool two_class = false;
    for (int l : d.labels) two_class |= (l != d.labels[0]);
    if (!two_class) continue;

    HyperParams hp;
    hp.n_trees = 4 + static_cast<int>(rep % 4);
    hp.max_depth = 3 + static_cast<int>(rep % 3);
    hp.min_samples_leaf = 2;
    hp.max_features = 1.0;
    hp.seed = 9000 + rep;
    auto f = fit_forest(d, hp);
    ++forests;

    const int n_inst = 4;
    for (int t = 0; t < n_inst; ++t) {
      Eigen::VectorXd xv(k);
      for (int j = 0; j < k; ++j) xv(j) = g(rng);
      auto fast = tree_shap(f, xv);
      auto slow = brute_force_shap(f, xv);
      ++instances;
      const double diff =
          (fast.contributions - slow.contributions).cwiseAbs().maxCoeff();
      if (diff >= 1e-9 || fast.additivity_error() >= 1e-9 ||
          slow.additivity_error() >= 1e-9) {
        ok = false;
        why << "forest " << rep << ": max diff " << diff << ", additivity "
            << fast.additivity_error();
        break;
      }
    }
  }

  // Local accuracy on every instance of the end-to-end test set.
  int e2e_checked = 0;
  if (ok && !g_e2e_out.empty() && fs::exists(g_e2e_out / "model.bin")) {
    auto forest = read_forest((g_e2e_out / "model.bin").string());
    auto [proj, stats] =
        read_matrix((g_e2e_out / "proj_test.bin").string(),
                    (g_e2e_out / "proj_test.meta.json").string());
    for (int j = 0; j < proj.cols(); ++j) {
      auto sv = tree_shap(forest, proj.values.col(j));
      ++e2e_checked;
      if (sv.additivity_error() >= 1e-9) {
        ok = false;
        why << "local accuracy violated on test column " << j;
        break;
      }
    }
  }

  std::ostringstream d;
  if (ok)
    d << forests << " forests, " << instances
      << " oracle comparisons, local accuracy on " << e2e_checked
      << " test instances";
  else
    d << why.str();
  report("SHAP exactness", ok, d.str());
}

// --- 4. AUROC vs pairwise brute force ---------------------------------------

void criterion_auroc_oracle() {
  std::mt19937_64 rng(31337);
  bool ok = true;
  std::ostringstream why;
  int checked = 0;
  for (int rep = 0; rep < 1000 && ok; ++rep) {
    std::uniform_int_distribution<int> n_d(5, 120);
    // Small value alphabets force heavy ties on many instances.
    std::uniform_int_distribution<int> levels_d(1, 12);
    const int n = n_d(rng);
    const int levels = levels_d(rng);
    std::uniform_int_distribution<int> score_d(0, levels);
    std::uniform_int_distribution<int> label_d(0, 1);
    std::vector<double> s;
    std::vector<int> l;
    bool pos = false, neg = false;
    for (int i = 0; i < n; ++i) {
      s.push_back(static_cast<double>(score_d(rng)));
      l.push_back(label_d(rng));
      (l.back() ? pos : neg) = true;
    }
    if (!pos || !neg) continue;

    double wins = 0;
    long pairs = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (l[i] == 1 && l[j] == 0) {
          ++pairs;
          if (s[i] > s[j]) wins += 1.0;
          else if (s[i] == s[j]) wins += 0.5;
        }
    const double fast = auroc(s, l);
    const double slow = wins / pairs;
    ++checked;
    if (std::abs(fast - slow) >= 1e-12) {
      ok = false;
      why << "instance " << rep << ": fast " << fast << " vs slow " << slow;
    }
  }
  report("AUROC oracle", ok,
         ok ? std::to_string(checked) + " random instances within 1e-12"
            : why.str());
}

// --- 5. PCHIP knot exactness and monotone no-overshoot ----------------------

void criterion_pchip() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> n_d(2, 12);
  std::uniform_int_distribution<int> gap_d(1, 60);
  std::uniform_real_distribution<double> step_d(0.0, 5.0);
  std::uniform_int_distribution<int> dir_d(0, 1);

  bool ok = true;
  std::ostringstream why;
  for (int rep = 0; rep < 1000 && ok; ++rep) {
    const int n = n_d(rng);
    const double sign = dir_d(rng) ? 1.0 : -1.0;
    std::vector<std::pair<Day, double>> obs;
    Day d = 0;
    double v = 10.0;
    for (int i = 0; i < n; ++i) {
      obs.push_back({d, v});
      d += gap_d(rng);
      v += sign * step_d(rng);  // monotone (possibly with flats)
    }
    const Day end = obs.back().first + 10;
    auto curve = pchip_curve(obs, 0, end);

    for (const auto& [od, ov] : obs)
      if (std::abs(curve.at(od) - ov) >= 1e-12) {
        ok = false;
        why << "rep " << rep << ": knot error " << std::abs(curve.at(od) - ov);
        break;
      }
    const double lo = std::min(obs.front().second, obs.back().second);
    const double hi = std::max(obs.front().second, obs.back().second);
    double prev = sign > 0 ? -1e300 : 1e300;
    for (Day day = 0; ok && day <= end; ++day) {
      const double y = curve.at(day);
      if (y < lo - 1e-12 || y > hi + 1e-12) {
        ok = false;
        why << "rep " << rep << ": overshoot at day " << day;
      }
      if (sign > 0 ? y < prev - 1e-12 : y > prev + 1e-12) {
        ok = false;
        why << "rep " << rep << ": monotonicity broken at day " << day;
      }
      prev = y;
    }
  }
  report("PCHIP properties", ok,
         ok ? "1000 monotone sequences: exact knots, no overshoot" : why.str());
}

// --- 6. RASH event-count conservation ---------------------------------------

void criterion_rash() {
  std::mt19937_64 rng(515);
  std::uniform_int_distribution<int> n_events_d(1, 40);
  std::uniform_int_distribution<int> bw_d(30, 500);
  std::uniform_int_distribution<int> shifts_d(1, 24);

  bool ok = true;
  std::ostringstream why;
  for (int rep = 0; rep < 1000 && ok; ++rep) {
    const int bw = bw_d(rng);
    const Day end = 4 * bw + 2000;
    // Interior events only: at least one bandwidth away from both edges.
    std::uniform_int_distribution<int> day_d(bw, static_cast<int>(end) - bw);
    const int n_events = n_events_d(rng);
    std::vector<Day> events;
    for (int i = 0; i < n_events; ++i) events.push_back(day_d(rng));

    auto curve =
        rash_intensity_curve(events, 0, end, bw, shifts_d(rng), 7000 + rep);
    const double integral = curve.values.sum() / kDaysPerYear;
    if (std::abs(integral - n_events) >= 1e-9) {
      ok = false;
      why << "rep " << rep << ": integral " << integral << " for " << n_events
          << " events (bw " << bw << ")";
    }
  }
  report("RASH conservation", ok,
         ok ? "1000 event sets conserved within 1e-9" : why.str());
}

// --- 7. Labeling fixture ----------------------------------------------------

void criterion_labeling_fixture() {
  // Hand-built 12-record cohort. Stage truth with the criteria below:
  //   R0,R1: no stroke code                  -> NoStrokeCode      (2)
  //   R2,R3: only non-refined stroke coding  -> NotSpecific       (2)
  //   R4,R5,R6: exclusion code co-occurs     -> CoOccurring       (3)
  //   R7,R8: one refined instance only       -> SingleStrokeCode  (2)
  //   R9,R10,R11: >= 2 instances, clean      -> Positive          (3)
  //
  // Coincidence arithmetic at threshold 0.30 (record-level carriers):
  //   I63.52: carriers R2,R3,R4,R5; R4,R5 carry exclusions -> 2/4 = 0.50,
  //           removed.
  //   I63.9:  carriers R4,R7,R9,R10,R11; only R4 coincides -> 1/5 = 0.20,
  //           kept.
  //   G43.6:  carriers R5,R8,R9,R10,R11; only R5 coincides -> 1/5 = 0.20,
  //           kept.
  //   I63.8:  carriers R6,R9,R10,R11; only R6 coincides    -> 1/4 = 0.25,
  //           kept.
  //   I63.0/I63.3/I63.4: exclusion leaves self-coincide    -> 1.00, removed.
  auto rec = [](std::vector<std::pair<Day, std::string>> evs) {
    static int i = 0;
    PatientRecord r;
    r.patient_id = "R" + std::to_string(i++);
    r.record_start = 0;
    r.record_end = 5000;
    for (auto& [d, c] : evs)
      r.condition_events.push_back({d, {c, VariableKind::Condition}});
    return r;
  };

  Cohort cohort;
  cohort.records = {
      rec({{10, "I10"}}),                                            // R0
      rec({{10, "E11.9"}, {20, "I10"}}),                             // R1
      rec({{10, "I63.52"}, {40, "I63.52"}}),                         // R2
      rec({{10, "I63.52"}, {40, "I63.52"}, {60, "I63.52"}}),         // R3
      rec({{10, "I63.9"}, {40, "I63.52"}, {80, "I63.3"}}),           // R4
      rec({{10, "G43.6"}, {40, "I63.52"}, {80, "I63.0"}}),           // R5
      rec({{10, "I63.8"}, {90, "I63.4"}}),                           // R6
      rec({{10, "I63.9"}}),                                          // R7
      rec({{10, "G43.6"}}),                                          // R8
      rec({{100, "I63.9"}, {200, "I63.9"}, {300, "G43.6"},
           {400, "I63.8"}}),                                         // R9
      rec({{100, "G43.6"}, {300, "I63.9"}, {500, "I63.8"}}),         // R10
      rec({{2000, "I63.9"}, {2100, "I63.9"}, {2200, "I63.8"},
           {2300, "G43.6"}}),                                        // R11
  };

  CodeCriteria criteria;
  criteria.initial_inclusion = {"G43.6", "I63"};
  criteria.noncrypto_specific = {"I63.0", "I63.1", "I63.3", "I63.4"};
  criteria.coincidence_threshold = 0.30;
  criteria.min_stroke_code_instances = 2;

  auto refined = refine_inclusion_codes(cohort, criteria);

  bool ok = true;
  std::ostringstream why;
  // Exclusion-code leaves trivially coincide with themselves (rate 1.0) and
  // must be dropped alongside the planted 50% offender I63.52.
  std::vector<std::string> expected_removed = {"I63.0", "I63.3", "I63.4",
                                               "I63.52"};
  std::vector<std::string> removed;
  for (const auto& e : refined.report)
    if (e.removed) removed.push_back(e.code);
  std::sort(removed.begin(), removed.end());
  if (removed != expected_removed) {
    ok = false;
    why << "refinement removed {";
    for (const auto& c : removed) why << c << " ";
    why << "} expected {I63.0 I63.3 I63.4 I63.52}";
  }
  if (refined.refined_inclusion.count("I63.9") == 0 ||
      refined.refined_inclusion.count("G43.6") == 0 ||
      refined.refined_inclusion.count("I63.8") == 0) {
    ok = false;
    why << "; expected survivors missing";
  }

  int n_no_code = 0, n_not_specific = 0, n_cooccur = 0, n_single = 0,
      n_positive = 0;
  for (const auto& r : cohort.records) {
    auto out = label_record(r, refined.criteria);
    if (out.positive) {
      ++n_positive;
    } else {
      switch (*out.rejection_stage) {
        case RejectionStage::NoStrokeCode: ++n_no_code; break;
        case RejectionStage::NotSpecific: ++n_not_specific; break;
        case RejectionStage::CoOccurringNonCryptogenic: ++n_cooccur; break;
        case RejectionStage::SingleStrokeCode: ++n_single; break;
      }
    }
  }
  if (n_no_code != 2 || n_not_specific != 2 || n_cooccur != 3 ||
      n_single != 2 || n_positive != 3) {
    ok = false;
    why << "; stage counts " << n_no_code << "/" << n_not_specific << "/"
        << n_cooccur << "/" << n_single << "/" << n_positive
        << " expected 2/2/3/2/3";
  }
  report("labeling fixture", ok,
         ok ? "12 records: stages 2/2/3/2/3, refinement removed exactly "
              "{I63.0, I63.3, I63.4, I63.52}"
            : why.str());
}

// --- 8. Standardization -----------------------------------------------------

void criterion_standardization() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u;
  const int m = 30, n = 500;
  DataMatrix x;
  x.values.resize(m, n);
  std::vector<VariableKind> kinds;
  for (int i = 0; i < m; ++i) {
    if (i % 3 == 0) {
      kinds.push_back(VariableKind::Condition);
      for (int j = 0; j < n; ++j) x.values(i, j) = std::abs(g(rng)) * 2.0;
    } else if (i % 3 == 1) {
      kinds.push_back(VariableKind::Measurement);
      for (int j = 0; j < n; ++j) x.values(i, j) = 70 + 12 * g(rng);
    } else {
      kinds.push_back(i % 2 ? VariableKind::Medication
                            : VariableKind::Demographic);
      for (int j = 0; j < n; ++j) x.values(i, j) = u(rng) < 0.4 ? 1.0 : 0.0;
    }
  }
  for (int j = 0; j < n; ++j) x.columns.push_back({"P", j});

  auto [y, stats] = standardize(x, kinds);
  bool ok = true;
  std::ostringstream why;
  for (int i = 0; i < m; ++i) {
    if (stats.rows[i].transform == RowTransform::Identity) {
      // Binary rows byte-identical.
      if (std::memcmp(y.values.row(i).eval().data(),
                      x.values.row(i).eval().data(), sizeof(double) * n) != 0) {
        ok = false;
        why << "binary row " << i << " modified";
      }
      continue;
    }
    const auto row = y.values.row(i);
    const double mean = row.mean();
    const double sd =
        std::sqrt((row.array() - mean).square().sum() / (n - 1));
    if (std::abs(mean) >= 1e-9 || std::abs(sd - 0.5) >= 1e-9) {
      ok = false;
      why << "row " << i << ": mean " << mean << ", sd " << sd;
    }
  }
  report("standardization", ok,
         ok ? "30 rows: scaled rows mean 0 / sd 0.5, binary rows untouched"
            : why.str());
}

// --- 9. Sampling law --------------------------------------------------------

void criterion_sampling_law() {
  const Day start = 0, end = 3651;  // 3652 days ~ 10 years, inclusive window
  const int trials = 100000;
  long total = 0;
  int final_year_violations = 0;
  for (int t = 0; t < trials; ++t) {
    auto dates = sample_times(start, end, 1.0, true, 40000 + t);
    total += static_cast<long>(dates.size());
    int in_final = 0;
    for (Day d : dates) in_final += (d >= end - 364);
    final_year_violations += (in_final != 1);
  }
  const double years = 3652.0 / kDaysPerYear;
  const double expected = 1.0 + (years - 1.0);  // forced + Poisson mean
  const double var = years - 1.0;               // Poisson remainder variance
  const double se = std::sqrt(var / trials);
  const double mean = static_cast<double>(total) / trials;

  bool ok = final_year_violations == 0 && std::abs(mean - expected) < 3 * se;
  std::ostringstream d;
  d << "final-year violations " << final_year_violations << ", mean " << mean
    << " vs " << expected << " (3 SE = " << 3 * se << ")";
  report("sampling law", ok, d.str());
}

// --- 10. Pipeline determinism -----------------------------------------------

void criterion_determinism() {
  PipelineConfig cfg;
  cfg.root_seed = 17;
  cfg.generator.n_patients = 300;
  cfg.ica_k = 12;
  cfg.search_budget = 2;
  cfg.search_space.n_trees = {50};
  cfg.search_space.max_depth = {6, 10};
  cfg.search_space.min_samples_leaf = {5};
  cfg.search_space.max_features = {0.5};
  cfg.final_n_trees = 50;
  cfg.cv_folds = 4;

  const auto dir_a = fresh_dir("strokesig_accept_det_a") / "out";
  const auto dir_b = fresh_dir("strokesig_accept_det_b") / "out";
  bool ok = true;
  std::ostringstream why;
  try {
    cfg.out_dir = dir_a.string();
    run_all(cfg);
    cfg.out_dir = dir_b.string();
    run_all(cfg);
  } catch (const std::exception& e) {
    report("pipeline determinism", false, e.what());
    return;
  }

  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir_a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir_a);
    const auto other = dir_b / rel;
    if (!fs::exists(other)) {
      ok = false;
      why << rel.string() << " missing in second run; ";
      continue;
    }
    ++compared;
    if (hash_file(entry.path().string()) != hash_file(other.string())) {
      ok = false;
      why << rel.string() << " differs; ";
    }
  }
  std::ostringstream d;
  if (ok)
    d << compared << " artifacts byte-identical across two runs";
  report("pipeline determinism", ok, ok ? d.str() : why.str());
}

}  // namespace

int main() {
  criterion_end_to_end();
  criterion_ica_recovery();
  criterion_shap_exactness();
  criterion_auroc_oracle();
  criterion_pchip();
  criterion_rash();
  criterion_labeling_fixture();
  criterion_standardization();
  criterion_sampling_law();
  criterion_determinism();
  std::cout << (failures == 0 ? "all criteria passed"
                              : std::to_string(failures) + " criteria failed")
            << "\n";
  return failures;
}
