#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "strokesig/sampling.hpp"

namespace strokesig {

struct WhiteningTransform {
  Eigen::VectorXd row_mean;     // length m
  Eigen::MatrixXd whitening;    // k x m
  Eigen::MatrixXd dewhitening;  // m x k
  bool reduced = false;         // k was cut to the numerical rank

  int k() const { return static_cast<int>(whitening.rows()); }
};

enum class IcaNonlinearity { LogCosh, Cube };

struct IcaOptions {
  IcaNonlinearity nonlinearity = IcaNonlinearity::LogCosh;
  double tol = 1e-4;
  int max_iter = 200;
  std::uint64_t seed = 0;
};

struct ConvergenceReport {
  int iterations = 0;
  double final_delta = 0.0;
  bool converged = false;
};

struct IcaModel {
  Eigen::MatrixXd mixing;    // m x k
  Eigen::MatrixXd unmixing;  // k x k, orthonormal rows (post-whitening)
  WhiteningTransform whitening;
  ConvergenceReport report;
};

struct SourceMatrix {
  Eigen::MatrixXd values;  // k x n
  std::vector<ColumnMeta> columns;
};

// PCA whitening to the top-k components; eigenvalues below the numerical
// rank tolerance are dropped and k reduced (flagged, not fatal).
std::pair<Eigen::MatrixXd, WhiteningTransform> whiten(const DataMatrix& x,
                                                      int k);

// Symmetric fixed-point FastICA on whitened data. Non-convergence within
// max_iter returns converged=false rather than throwing.
std::pair<Eigen::MatrixXd, SourceMatrix> fast_ica(const Eigen::MatrixXd& z,
                                                  const IcaOptions& opts,
                                                  ConvergenceReport* report);

// A = dewhitening * W^T, so that A*S reconstructs the centered data up to
// the PCA truncation residual.
Eigen::MatrixXd compose_mixing(const WhiteningTransform& wt,
                               const Eigen::MatrixXd& w);

// Whiten + FastICA + sign normalization (largest-magnitude mixing weight of
// each source made positive).
std::pair<IcaModel, SourceMatrix> fit_ica(const DataMatrix& x, int k,
                                          const IcaOptions& opts);

// S = A^+ E realized as whitening followed by the orthonormal unmixing.
SourceMatrix project(const DataMatrix& e, const IcaModel& model);

// Permutation/sign/scale-invariant recovery divergence; 0 iff A_est matches
// A_true up to a scaled permutation.
double amari_index(const Eigen::MatrixXd& a_est, const Eigen::MatrixXd& a_true);

void write_ica_model(const IcaModel& model, const std::string& path);
IcaModel read_ica_model(const std::string& path);

}  // namespace strokesig
