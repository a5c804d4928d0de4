#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "strokesig/cohort.hpp"
#include "strokesig/curves.hpp"
#include "strokesig/dates.hpp"

namespace strokesig {

struct ColumnMeta {
  std::string patient_id;
  Day sample_date = 0;
};

// Stacked cross-sections: m x n, columns are patient-state instants.
struct DataMatrix {
  Eigen::MatrixXd values;  // m x n
  std::vector<ColumnMeta> columns;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
};

enum class RowTransform { Identity, CenterScale2SD, LogCenterScale2SD };

struct RowStats {
  RowTransform transform = RowTransform::Identity;
  double offset = 0.0;  // log offset for intensity rows
  double mean = 0.0;
  double sd = 0.0;
  bool degenerate = false;  // scaled row fell back to Identity (sd == 0)
};

struct StandardizationStats {
  std::vector<RowStats> rows;
};

// Log offset for condition intensities: one event-day per year floor.
inline constexpr double kLogIntensityOffset = 1.0 / kDaysPerYear;

// Sampling dates for one record window. Forced mode guarantees exactly one
// date in the final year while keeping the configured average density.
std::vector<Day> sample_times(Day window_start, Day window_end,
                              double samples_per_year, bool force_final_year,
                              std::uint64_t seed);

// Column j = curveset column at the j-th sampled date; ordering is patient
// order then date.
DataMatrix assemble_matrix(const std::vector<const Curveset*>& curvesets,
                           const std::vector<std::vector<Day>>& dates);

// 2-SD standardization: condition rows log-transformed then centered/scaled,
// measurement rows centered/scaled, binary rows untouched. Degenerate rows
// (sd == 0) pass through unchanged with the degeneracy recorded.
std::pair<DataMatrix, StandardizationStats> standardize(
    const DataMatrix& x, const std::vector<VariableKind>& kinds);

// Replay a fitted transform on evaluation data (no refit, no clipping).
DataMatrix apply_standardization(const DataMatrix& x,
                                 const StandardizationStats& stats);

// Columnar binary matrix + JSON sidecar with column metadata and row stats.
void write_matrix(const DataMatrix& x, const StandardizationStats* stats,
                  const std::string& bin_path, const std::string& meta_path);
std::pair<DataMatrix, StandardizationStats> read_matrix(
    const std::string& bin_path, const std::string& meta_path);

}  // namespace strokesig
