#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "strokesig/curves.hpp"

using namespace strokesig;

TEST_CASE("RASH with no events is the zero curve") {
  auto c = rash_intensity_curve({}, 0, 1000, 365, 16, 1);
  CHECK(c.length() == 1001);  // window is day-inclusive on both ends
  CHECK(c.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("RASH conserves one interior event exactly") {
  // Event far from both window edges so no bin mass is clipped away.
  auto c = rash_intensity_curve({2000}, 0, 4000, 365, 16, 42);
  const double integral = c.values.sum() / kDaysPerYear;  // events
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(c.values.minCoeff() >= 0.0);
}

TEST_CASE("RASH is deterministic given the seed") {
  auto a = rash_intensity_curve({100, 700, 701}, 0, 2000, 365, 16, 9);
  auto b = rash_intensity_curve({100, 700, 701}, 0, 2000, 365, 16, 9);
  CHECK(a.values == b.values);
}

TEST_CASE("RASH rejects events outside the window") {
  CHECK_THROWS_AS(rash_intensity_curve({-1}, 0, 100, 365, 4, 1),
                  std::invalid_argument);
}

TEST_CASE("PCHIP with a single observation is constant") {
  auto c = pchip_curve({{50, 5.0}}, 0, 200);
  CHECK(c.values.minCoeff() == 5.0);
  CHECK(c.values.maxCoeff() == 5.0);
}

TEST_CASE("PCHIP with two observations is the linear ramp") {
  auto c = pchip_curve({{100, 0.0}, {110, 10.0}}, 0, 300);
  CHECK(c.at(105) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(c.at(100) == doctest::Approx(0.0));
  CHECK(c.at(110) == doctest::Approx(10.0));
  // Constant extrapolation on both sides.
  CHECK(c.at(0) == doctest::Approx(0.0));
  CHECK(c.at(299) == doctest::Approx(10.0));
}

TEST_CASE("PCHIP never overshoots a plateau") {
  auto c = pchip_curve({{0, 0.0}, {1, 1.0}, {2, 1.0}}, 0, 3);
  for (Day d = 0; d < 3; ++d) CHECK(c.at(d) <= 1.0 + 1e-12);

  auto wide = pchip_curve({{0, 0.0}, {10, 10.0}, {20, 10.0}}, 0, 30);
  double prev = -1;
  for (Day d = 0; d <= 20; ++d) {
    CHECK(wide.at(d) <= 10.0 + 1e-12);
    CHECK(wide.at(d) >= prev - 1e-12);  // monotone data stay monotone
    prev = wide.at(d);
  }
}

TEST_CASE("PCHIP interpolates every knot exactly") {
  std::vector<std::pair<Day, double>> obs = {
      {3, 1.5}, {17, -2.0}, {40, 0.25}, {90, 7.0}};
  auto c = pchip_curve(obs, 0, 120);
  for (const auto& [d, v] : obs)
    CHECK(c.at(d) == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("PCHIP rejects duplicate dates") {
  CHECK_THROWS_AS(pchip_curve({{5, 1.0}, {5, 2.0}}, 0, 10),
                  std::invalid_argument);
}

TEST_CASE("adherence: never noted is the zero function") {
  auto c = adherence_curve({{10, false}, {50, false}}, 0, 100);
  CHECK(c.values.maxCoeff() == 0.0);
}

TEST_CASE("adherence switches off at the temporal midpoint") {
  auto c = adherence_curve({{0, true}, {100, true}, {200, false}}, 0, 300);
  CHECK(c.at(0) == 1.0);
  CHECK(c.at(100) == 1.0);
  CHECK(c.at(149) == 1.0);
  CHECK(c.at(150) == 0.0);
  CHECK(c.at(299) == 0.0);
}

TEST_CASE("adherence persists when present at every visit") {
  auto c = adherence_curve({{20, true}, {80, true}}, 0, 200);
  CHECK(c.at(19) == 0.0);
  CHECK(c.at(20) == 1.0);
  CHECK(c.at(199) == 1.0);  // final state persists to record end
  for (int d = 0; d < 200; ++d)
    CHECK((c.at(d) == 0.0 || c.at(d) == 1.0));
}

namespace {

std::vector<VariableDescriptor> small_dict() {
  return {{"cond_I10", VariableKind::Condition, "I10"},
          {"meas_weight", VariableKind::Measurement, "Weight"},
          {"med_aspirin", VariableKind::Medication, "Aspirin"},
          {"demo_sex", VariableKind::Demographic, "Sex"}};
}

}  // namespace

TEST_CASE("build_curveset applies the imputation rules to an empty record") {
  PatientRecord r;
  r.patient_id = "P1";
  r.record_start = 0;
  r.record_end = 400;
  PopulationStats stats;
  stats.measurement_median["meas_weight"] = 71.0;
  CurveParams params;

  auto cs = build_curveset(r, small_dict(), stats, params, 1);
  CHECK(cs.matrix.rows() == 4);
  CHECK(cs.matrix.cols() == 401);
  CHECK(cs.matrix.row(0).minCoeff() == doctest::Approx(1.0 / 20.0));
  CHECK(cs.matrix.row(0).maxCoeff() == doctest::Approx(1.0 / 20.0));
  CHECK(cs.matrix.row(1).minCoeff() == doctest::Approx(71.0));
  CHECK(cs.matrix.row(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(cs.matrix.row(3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("build_curveset: single measurement gives a constant row") {
  PatientRecord r;
  r.patient_id = "P1";
  r.record_start = 0;
  r.record_end = 365;
  r.measurements["meas_weight"] = {{100, 80.0}};
  PopulationStats stats;
  stats.measurement_median["meas_weight"] = 60.0;

  auto cs = build_curveset(r, small_dict(), stats, CurveParams{}, 1);
  CHECK(cs.matrix.row(1).minCoeff() == doctest::Approx(80.0));
  CHECK(cs.matrix.row(1).maxCoeff() == doctest::Approx(80.0));
}

TEST_CASE("build_curveset rejects unknown variables") {
  PatientRecord r;
  r.patient_id = "P1";
  r.record_start = 0;
  r.record_end = 100;
  r.measurements["meas_unknown"] = {{10, 1.0}};
  CHECK_THROWS_AS(
      build_curveset(r, small_dict(), PopulationStats{}, CurveParams{}, 1),
      std::runtime_error);
}

TEST_CASE("curveset binary round-trip is exact and rewrites byte-identically") {
  Curveset cs;
  cs.patient_id = "P42";
  cs.start_date = 123;
  cs.matrix = Eigen::MatrixXd::Random(5, 37);

  const auto dir =
      std::filesystem::temp_directory_path() / "strokesig_curves_test";
  std::filesystem::create_directories(dir);
  const auto p1 = (dir / "a.bin").string(), p2 = (dir / "b.bin").string();
  write_curveset(cs, p1);
  auto back = read_curveset(p1);
  CHECK(back.patient_id == cs.patient_id);
  CHECK(back.start_date == cs.start_date);
  CHECK(back.matrix == cs.matrix);

  write_curveset(back, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::ostringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  std::filesystem::remove_all(dir);
}
