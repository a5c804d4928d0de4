#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "strokesig/sampling.hpp"

using namespace strokesig;

TEST_CASE("forced sampling of a sub-year window yields exactly one date") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto dates = sample_times(0, 182, 1.0, true, s);
    REQUIRE(dates.size() == 1);
    CHECK(dates[0] >= 0);
    CHECK(dates[0] <= 182);
  }
}

TEST_CASE("forced sampling always lands one date in the final year") {
  const Day start = 0, end = 3652;
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto dates = sample_times(start, end, 1.0, true, s);
    int in_final = 0;
    for (Day d : dates) in_final += (d >= end - 364);
    CHECK(in_final == 1);
  }
}

TEST_CASE("unforced short windows follow the Poisson zero probability") {
  const Day len = static_cast<Day>(std::lround(0.1 * kDaysPerYear));
  int zeros = 0;
  const int trials = 100000;
  for (int t = 0; t < trials; ++t)
    zeros += sample_times(0, len, 1.0, false, 1000 + t).empty();
  const double p0 = std::exp(-(len + 1) / kDaysPerYear);  // inclusive window
  CHECK(std::abs(static_cast<double>(zeros) / trials - p0) < 0.01);
}

TEST_CASE("sample_times rejects an empty window") {
  CHECK_THROWS_AS(sample_times(10, 9, 1.0, false, 1), std::invalid_argument);
}

TEST_CASE("sample_times is deterministic given the seed") {
  CHECK(sample_times(0, 4000, 1.5, true, 77) ==
        sample_times(0, 4000, 1.5, true, 77));
}

namespace {

Curveset toy_curveset(const std::string& pid, Day start, int m, int t,
                      double fill) {
  Curveset cs;
  cs.patient_id = pid;
  cs.start_date = start;
  cs.matrix = Eigen::MatrixXd::Constant(m, t, fill);
  for (int j = 0; j < t; ++j) cs.matrix(0, j) = j;  // make columns distinct
  return cs;
}

}  // namespace

TEST_CASE("assemble_matrix: one record, one sample") {
  auto cs = toy_curveset("P1", 100, 3, 50, 2.0);
  auto x = assemble_matrix({&cs}, {{120}});
  REQUIRE(x.cols() == 1);
  CHECK(x.values.col(0) == cs.column_at(120));
  CHECK(x.columns[0].patient_id == "P1");
  CHECK(x.columns[0].sample_date == 120);
}

TEST_CASE("assemble_matrix preserves patient-then-date order and metadata") {
  auto a = toy_curveset("PA", 0, 3, 50, 1.0);
  auto b = toy_curveset("PB", 0, 3, 50, 5.0);
  auto x = assemble_matrix({&a, &b}, {{30, 10}, {5}});
  REQUIRE(x.cols() == 3);
  CHECK(x.columns[0].patient_id == "PA");
  CHECK(x.columns[0].sample_date == 10);  // dates sorted within a patient
  CHECK(x.columns[1].sample_date == 30);
  CHECK(x.columns[2].patient_id == "PB");
  CHECK(x.values(0, 2) == 5.0);
}

TEST_CASE("assemble_matrix duplicates identical columns for repeated dates") {
  auto cs = toy_curveset("P1", 0, 4, 20, 3.0);
  auto x = assemble_matrix({&cs}, {{7, 7}});
  CHECK(x.values.col(0) == x.values.col(1));
}

TEST_CASE("assemble_matrix rejects out-of-span dates") {
  auto cs = toy_curveset("P1", 0, 2, 20, 0.0);
  CHECK_THROWS_AS(assemble_matrix({&cs}, {{25}}), std::logic_error);
}

namespace {

DataMatrix mixed_matrix() {
  DataMatrix x;
  x.values.resize(3, 6);
  x.values.row(0) << 0.1, 0.5, 1.2, 0.05, 2.0, 0.3;  // condition intensity
  x.values.row(1) << 70, 80, 75, 90, 66, 84;         // measurement
  x.values.row(2) << 0, 1, 1, 0, 1, 0;               // binary demographic
  for (int j = 0; j < 6; ++j) x.columns.push_back({"P", j});
  return x;
}

const std::vector<VariableKind> kKinds = {VariableKind::Condition,
                                          VariableKind::Measurement,
                                          VariableKind::Demographic};

}  // namespace

TEST_CASE("standardize: scaled rows get mean 0 and sd 0.5, binary untouched") {
  auto x = mixed_matrix();
  auto [y, stats] = standardize(x, kKinds);

  for (int i : {0, 1}) {
    const auto row = y.values.row(i);
    const double mean = row.mean();
    const double sd = std::sqrt((row.array() - mean).square().sum() /
                                (row.size() - 1));
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(sd - 0.5) < 1e-12);
  }
  CHECK(y.values.row(2) == x.values.row(2));
  CHECK(stats.rows[0].transform == RowTransform::LogCenterScale2SD);
  CHECK(stats.rows[1].transform == RowTransform::CenterScale2SD);
  CHECK(stats.rows[2].transform == RowTransform::Identity);
}

TEST_CASE("standardize: constant scaled row falls back to Identity") {
  auto x = mixed_matrix();
  x.values.row(1).setConstant(42.0);
  auto [y, stats] = standardize(x, kKinds);
  CHECK(y.values.row(1) == x.values.row(1));
  CHECK(stats.rows[1].degenerate);
  CHECK(stats.rows[1].transform == RowTransform::Identity);
}

TEST_CASE("standardize rejects non-finite input") {
  auto x = mixed_matrix();
  x.values(1, 2) = std::nan("");
  CHECK_THROWS_AS(standardize(x, kKinds), std::invalid_argument);
}

TEST_CASE("apply_standardization replays the fitted transform") {
  auto x = mixed_matrix();
  auto [y, stats] = standardize(x, kKinds);
  auto replay = apply_standardization(x, stats);
  CHECK((replay.values - y.values).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("apply_standardization does not clip out-of-range values") {
  auto x = mixed_matrix();
  auto [y, stats] = standardize(x, kKinds);
  DataMatrix e;
  e.values.resize(3, 1);
  e.values << 50.0, 1000.0, 1.0;  // far outside the fitted range
  e.columns.push_back({"Q", 0});
  auto out = apply_standardization(e, stats);
  const double expected =
      (1000.0 - stats.rows[1].mean) / (2.0 * stats.rows[1].sd);
  CHECK(out.values(1, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(out.values(1, 0)) > 10.0);
}

TEST_CASE("apply_standardization rejects row-count mismatch") {
  auto x = mixed_matrix();
  auto [y, stats] = standardize(x, kKinds);
  DataMatrix e;
  e.values = Eigen::MatrixXd::Zero(2, 1);
  e.columns.push_back({"Q", 0});
  CHECK_THROWS_AS(apply_standardization(e, stats), std::runtime_error);
}

TEST_CASE("matrix binary + sidecar round-trips") {
  auto x = mixed_matrix();
  auto [y, stats] = standardize(x, kKinds);
  const auto dir =
      std::filesystem::temp_directory_path() / "strokesig_matrix_test";
  std::filesystem::create_directories(dir);
  write_matrix(y, &stats, (dir / "x.bin").string(), (dir / "x.json").string());
  auto [back, bstats] =
      read_matrix((dir / "x.bin").string(), (dir / "x.json").string());
  CHECK(back.values == y.values);
  REQUIRE(back.columns.size() == y.columns.size());
  CHECK(back.columns[3].patient_id == "P");
  CHECK(back.columns[3].sample_date == 3);
  REQUIRE(bstats.rows.size() == 3);
  CHECK(bstats.rows[0].transform == RowTransform::LogCenterScale2SD);
  CHECK(bstats.rows[0].mean == doctest::Approx(stats.rows[0].mean));
  std::filesystem::remove_all(dir);
}
