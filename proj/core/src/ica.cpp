#include "strokesig/ica.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace strokesig {

namespace {

using nlohmann::json;

constexpr std::uint32_t kIcaMagic = 0x4943414d;  // "ICAM"

// W <- (W W^T)^(-1/2) W, symmetric orthonormalization.
Eigen::MatrixXd sym_decorrelate(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w * w.transpose());
  Eigen::VectorXd inv_sqrt =
      es.eigenvalues().array().max(1e-300).rsqrt();
  return es.eigenvectors() * inv_sqrt.asDiagonal() *
         es.eigenvectors().transpose() * w;
}

void write_matrix_raw(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      out.write(reinterpret_cast<char*>(&v), 8);
    }
}

Eigen::MatrixXd read_matrix_raw(std::ifstream& in, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double v;
      in.read(reinterpret_cast<char*>(&v), 8);
      m(i, j) = v;
    }
  return m;
}

}  // namespace

std::pair<Eigen::MatrixXd, WhiteningTransform> whiten(const DataMatrix& x,
                                                      int k) {
  const int m = x.rows(), n = x.cols();
  if (k < 1 || k > std::min(m, n))
    throw std::invalid_argument("whiten: k out of range");

  WhiteningTransform wt;
  wt.row_mean = x.values.rowwise().mean();
  Eigen::MatrixXd xc = x.values.colwise() - wt.row_mean;
  Eigen::MatrixXd cov = xc * xc.transpose() / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd& evals = es.eigenvalues();  // ascending
  const double tol = evals(m - 1) * m * 1e-12;

  int rank = 0;
  for (int i = 0; i < m; ++i)
    if (evals(i) > tol) ++rank;
  const int keff = std::min(k, rank);
  if (keff < 1) throw std::invalid_argument("whiten: data has rank zero");
  wt.reduced = keff < k;

  wt.whitening.resize(keff, m);
  wt.dewhitening.resize(m, keff);
  for (int c = 0; c < keff; ++c) {
    const int src = m - 1 - c;  // largest eigenvalues first
    const double lam = evals(src);
    wt.whitening.row(c) = es.eigenvectors().col(src).transpose() / std::sqrt(lam);
    wt.dewhitening.col(c) = es.eigenvectors().col(src) * std::sqrt(lam);
  }
  return {wt.whitening * xc, wt};
}

std::pair<Eigen::MatrixXd, SourceMatrix> fast_ica(const Eigen::MatrixXd& z,
                                                  const IcaOptions& opts,
                                                  ConvergenceReport* report) {
  if (opts.tol <= 0) throw std::invalid_argument("fast_ica: tol must be > 0");
  const int k = static_cast<int>(z.rows());
  const int n = static_cast<int>(z.cols());

  std::mt19937_64 rng(opts.seed * 0x9e3779b97f4a7c15ULL + 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd w(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) w(i, j) = gauss(rng);
  w = sym_decorrelate(w);

  ConvergenceReport rep;
  for (int it = 0; it < opts.max_iter; ++it) {
    Eigen::MatrixXd u = w * z;  // k x n projections
    Eigen::MatrixXd gu(k, n);
    Eigen::VectorXd gprime_mean(k);
    if (opts.nonlinearity == IcaNonlinearity::LogCosh) {
      gu = u.array().tanh();
      gprime_mean = (1.0 - gu.array().square()).rowwise().mean();
    } else {
      gu = u.array().cube();
      gprime_mean = 3.0 * u.array().square().rowwise().mean();
    }
    Eigen::MatrixXd w_new =
        gu * z.transpose() / static_cast<double>(n) -
        gprime_mean.asDiagonal() * w;
    w_new = sym_decorrelate(w_new);

    double delta = 0.0;
    for (int i = 0; i < k; ++i)
      delta = std::max(delta,
                       std::abs(1.0 - std::abs(w_new.row(i).dot(w.row(i)))));
    w = std::move(w_new);
    rep.iterations = it + 1;
    rep.final_delta = delta;
    if (delta < opts.tol) {
      rep.converged = true;
      break;
    }
  }
  if (report) *report = rep;

  SourceMatrix s;
  s.values = w * z;
  return {std::move(w), std::move(s)};
}

Eigen::MatrixXd compose_mixing(const WhiteningTransform& wt,
                               const Eigen::MatrixXd& w) {
  if (w.cols() != wt.k())
    throw std::invalid_argument("compose_mixing: shape mismatch");
  return wt.dewhitening * w.transpose();
}

std::pair<IcaModel, SourceMatrix> fit_ica(const DataMatrix& x, int k,
                                          const IcaOptions& opts) {
  auto [z, wt] = whiten(x, k);
  IcaModel model;
  auto [w, s] = fast_ica(z, opts, &model.report);
  model.whitening = std::move(wt);
  model.unmixing = std::move(w);
  model.mixing = compose_mixing(model.whitening, model.unmixing);

  // Sign convention: the largest-magnitude mixing weight of each source is
  // positive, making signature diagrams and SHAP directions reproducible.
  for (int j = 0; j < model.mixing.cols(); ++j) {
    int imax;
    model.mixing.col(j).cwiseAbs().maxCoeff(&imax);
    if (model.mixing(imax, j) < 0) {
      model.mixing.col(j) = -model.mixing.col(j);
      model.unmixing.row(j) = -model.unmixing.row(j);
      s.values.row(j) = -s.values.row(j);
    }
  }
  s.columns = x.columns;
  return {std::move(model), std::move(s)};
}

SourceMatrix project(const DataMatrix& e, const IcaModel& model) {
  if (e.rows() != model.whitening.row_mean.size())
    throw std::runtime_error("project: row-count mismatch with model");
  SourceMatrix s;
  s.values = model.unmixing * (model.whitening.whitening *
                               (e.values.colwise() - model.whitening.row_mean));
  s.columns = e.columns;
  return s;
}

double amari_index(const Eigen::MatrixXd& a_est,
                   const Eigen::MatrixXd& a_true) {
  if (a_est.rows() != a_true.rows() || a_est.cols() != a_true.cols())
    throw std::invalid_argument("amari_index: shape mismatch");
  const int k = static_cast<int>(a_true.cols());
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a_true);
  if (qr.rank() < k)
    throw std::invalid_argument("amari_index: A_true is rank deficient");

  Eigen::MatrixXd p =
      a_est.completeOrthogonalDecomposition().pseudoInverse() * a_true;
  p = p.cwiseAbs();
  if (k == 1) return 0.0;

  double total = 0.0;
  for (int i = 0; i < k; ++i)
    total += p.row(i).sum() / p.row(i).maxCoeff() - 1.0;
  for (int j = 0; j < k; ++j)
    total += p.col(j).sum() / p.col(j).maxCoeff() - 1.0;
  return total / (2.0 * k * (k - 1));
}

void write_ica_model(const IcaModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  const int m = static_cast<int>(model.mixing.rows());
  const int k = static_cast<int>(model.mixing.cols());
  json meta = {{"m", m},
               {"k", k},
               {"reduced", model.whitening.reduced},
               {"iterations", model.report.iterations},
               {"final_delta", model.report.final_delta},
               {"converged", model.report.converged}};
  std::string header = meta.dump();
  auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
  put32(kIcaMagic);
  put32(1);
  put32(static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_matrix_raw(out, model.whitening.row_mean);
  write_matrix_raw(out, model.whitening.whitening);
  write_matrix_raw(out, model.whitening.dewhitening);
  write_matrix_raw(out, model.unmixing);
  write_matrix_raw(out, model.mixing);
}

IcaModel read_ica_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto get32 = [&] {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  if (get32() != kIcaMagic)
    throw std::runtime_error("not an ICA model file: " + path);
  if (get32() != 1) throw std::runtime_error("unsupported ICA model version");
  std::string header(get32(), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  json meta = json::parse(header);
  const int m = meta.at("m").get<int>();
  const int k = meta.at("k").get<int>();

  IcaModel model;
  model.whitening.reduced = meta.at("reduced").get<bool>();
  model.report.iterations = meta.at("iterations").get<int>();
  model.report.final_delta = meta.at("final_delta").get<double>();
  model.report.converged = meta.at("converged").get<bool>();
  model.whitening.row_mean = read_matrix_raw(in, m, 1);
  model.whitening.whitening = read_matrix_raw(in, k, m);
  model.whitening.dewhitening = read_matrix_raw(in, m, k);
  model.unmixing = read_matrix_raw(in, k, k);
  model.mixing = read_matrix_raw(in, m, k);
  if (!in) throw std::runtime_error("truncated ICA model file: " + path);
  return model;
}

}  // namespace strokesig
