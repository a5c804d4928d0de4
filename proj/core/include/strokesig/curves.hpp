#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "strokesig/cohort.hpp"
#include "strokesig/dates.hpp"

namespace strokesig {

struct DailyCurve {
  Day start_date = 0;
  Eigen::VectorXd values;  // one entry per day

  int length() const { return static_cast<int>(values.size()); }
  double at(Day d) const { return values(d - start_date); }
};

// Dense m x t daily matrix for one record; row order follows the variable
// dictionary.
struct Curveset {
  std::string patient_id;
  Day start_date = 0;
  Eigen::MatrixXd matrix;  // m x t

  int days() const { return static_cast<int>(matrix.cols()); }
  Eigen::VectorXd column_at(Day d) const { return matrix.col(d - start_date); }
};

// Per-measurement-variable population medians, fitted on the discovery
// cohort only.
struct PopulationStats {
  std::map<std::string, double> measurement_median;
};

PopulationStats compute_population_stats(const Cohort& cohort);

struct CurveParams {
  int rash_bandwidth_days = 365;
  int rash_n_shifts = 16;
  double condition_baseline_rate = 1.0 / 20.0;  // events/yr when no data
};

// Annualized event-intensity curve: average of n_shifts histograms with bin
// width bandwidth_days and uniform random offsets, each count divided by the
// bin width in years. Bins are clipped to the window.
DailyCurve rash_intensity_curve(const std::vector<Day>& event_dates,
                                Day window_start, Day window_end,
                                int bandwidth_days, int n_shifts,
                                std::uint64_t seed);

// Shape-preserving cubic Hermite interpolation (Fritsch-Carlson derivative
// rule), constant extrapolation outside the observed span.
DailyCurve pchip_curve(const std::vector<std::pair<Day, double>>& observations,
                       Day window_start, Day window_end);

// Binary adherence: 1 on and between visits where the medication is noted,
// switching 1 -> 0 at the temporal midpoint when a later visit drops it.
DailyCurve adherence_curve(const std::vector<std::pair<Day, bool>>& snapshots,
                           Day window_start, Day window_end);

Curveset build_curveset(const PatientRecord& record,
                        const std::vector<VariableDescriptor>& dict,
                        const PopulationStats& stats, const CurveParams& params,
                        std::uint64_t seed);

// Columnar binary persistence (magic + header + row-major doubles) plus a
// CSV export for debugging.
void write_curveset(const Curveset& cs, const std::string& path);
Curveset read_curveset(const std::string& path);
void write_curveset_csv(const Curveset& cs,
                        const std::vector<VariableDescriptor>& dict,
                        const std::string& path);

}  // namespace strokesig
