#include "strokesig/curves.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace strokesig {

namespace {

constexpr std::uint32_t kCurvesetMagic = 0x43525653;  // "CRVS"

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

int window_days(Day start, Day end) {
  if (end < start) throw std::invalid_argument("empty window");
  return static_cast<int>(end - start) + 1;
}

}  // namespace

PopulationStats compute_population_stats(const Cohort& cohort) {
  std::map<std::string, std::vector<double>> pooled;
  for (const auto& rec : cohort.records)
    for (const auto& [var, obs] : rec.measurements)
      for (const auto& [d, v] : obs) pooled[var].push_back(v);
  PopulationStats stats;
  for (auto& [var, vals] : pooled) {
    auto mid = vals.begin() + vals.size() / 2;
    std::nth_element(vals.begin(), mid, vals.end());
    double med = *mid;
    if (vals.size() % 2 == 0) {
      double lo = *std::max_element(vals.begin(), mid);
      med = 0.5 * (med + lo);
    }
    stats.measurement_median[var] = med;
  }
  return stats;
}

DailyCurve rash_intensity_curve(const std::vector<Day>& event_dates,
                                Day window_start, Day window_end,
                                int bandwidth_days, int n_shifts,
                                std::uint64_t seed) {
  if (bandwidth_days < 1 || n_shifts < 1)
    throw std::invalid_argument("rash: bandwidth_days and n_shifts must be >= 1");
  const int t = window_days(window_start, window_end);
  for (Day e : event_dates)
    if (e < window_start || e > window_end)
      throw std::invalid_argument("rash: event outside window");

  DailyCurve curve;
  curve.start_date = window_start;
  curve.values = Eigen::VectorXd::Zero(t);
  if (event_dates.empty()) return curve;

  const double bin_years = bandwidth_days / kDaysPerYear;
  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_real_distribution<double> offset_dist(
      0.0, static_cast<double>(bandwidth_days));

  const int n_bins = t / bandwidth_days + 2;
  std::vector<double> counts(static_cast<std::size_t>(n_bins) + 1);
  for (int s = 0; s < n_shifts; ++s) {
    const double offset = offset_dist(rng);
    std::fill(counts.begin(), counts.end(), 0.0);
    auto bin_of = [&](double day_index) {
      // +1 so events just left of the first offset edge land in bin 0.
      return static_cast<int>(std::floor((day_index - offset) / bandwidth_days)) + 1;
    };
    for (Day e : event_dates) {
      int b = bin_of(static_cast<double>(e - window_start));
      if (b >= 0 && b <= n_bins) counts[b] += 1.0;
    }
    for (int d = 0; d < t; ++d) {
      int b = bin_of(static_cast<double>(d));
      if (b >= 0 && b <= n_bins) curve.values(d) += counts[b] / bin_years;
    }
  }
  curve.values /= static_cast<double>(n_shifts);
  return curve;
}

DailyCurve pchip_curve(const std::vector<std::pair<Day, double>>& obs,
                       Day window_start, Day window_end) {
  if (obs.empty()) throw std::invalid_argument("pchip: no observations");
  const int t = window_days(window_start, window_end);
  const int n = static_cast<int>(obs.size());
  for (int i = 0; i < n; ++i) {
    if (obs[i].first < window_start || obs[i].first > window_end)
      throw std::invalid_argument("pchip: observation outside window");
    if (i > 0 && obs[i].first <= obs[i - 1].first)
      throw std::invalid_argument("pchip: dates not strictly increasing");
  }

  DailyCurve curve;
  curve.start_date = window_start;
  curve.values.resize(t);

  if (n == 1) {
    curve.values.setConstant(obs[0].second);
    return curve;
  }

  std::vector<double> x(n), y(n), h(n - 1), delta(n - 1), deriv(n);
  for (int i = 0; i < n; ++i) {
    x[i] = static_cast<double>(obs[i].first);
    y[i] = obs[i].second;
  }
  for (int i = 0; i < n - 1; ++i) {
    h[i] = x[i + 1] - x[i];
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }

  // Fritsch-Carlson: weighted harmonic mean at interior knots, zero at local
  // extrema; one-sided three-point rule with monotonicity clamps at the ends.
  for (int i = 1; i < n - 1; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) {
      deriv[i] = 0.0;
    } else {
      double w1 = 2.0 * h[i] + h[i - 1];
      double w2 = h[i] + 2.0 * h[i - 1];
      deriv[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (m * d0 <= 0.0)
      m = 0.0;
    else if (d0 * d1 < 0.0 && std::abs(m) > 3.0 * std::abs(d0))
      m = 3.0 * d0;
    return m;
  };
  if (n == 2) {
    deriv[0] = deriv[1] = delta[0];
  } else {
    deriv[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    deriv[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  int seg = 0;
  for (int d = 0; d < t; ++d) {
    const double xd = static_cast<double>(window_start) + d;
    if (xd <= x[0]) {
      curve.values(d) = y[0];
      continue;
    }
    if (xd >= x[n - 1]) {
      curve.values(d) = y[n - 1];
      continue;
    }
    while (xd > x[seg + 1]) ++seg;
    const double u = (xd - x[seg]) / h[seg];
    const double u2 = u * u, u3 = u2 * u;
    curve.values(d) = y[seg] * (2 * u3 - 3 * u2 + 1) +
                      deriv[seg] * h[seg] * (u3 - 2 * u2 + u) +
                      y[seg + 1] * (-2 * u3 + 3 * u2) +
                      deriv[seg + 1] * h[seg] * (u3 - u2);
  }
  return curve;
}

DailyCurve adherence_curve(const std::vector<std::pair<Day, bool>>& snapshots,
                           Day window_start, Day window_end) {
  const int t = window_days(window_start, window_end);
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    if (snapshots[i].first < window_start || snapshots[i].first > window_end)
      throw std::invalid_argument("adherence: snapshot outside window");
    if (i > 0 && snapshots[i].first <= snapshots[i - 1].first)
      throw std::invalid_argument("adherence: dates not strictly increasing");
  }

  DailyCurve curve;
  curve.start_date = window_start;
  curve.values = Eigen::VectorXd::Zero(t);

  // (on_start, off_threshold] half-open intervals; day d is 1 when
  // on_start <= d < off_threshold.
  bool on = false;
  double on_start = 0.0, last_present = 0.0;
  std::vector<std::pair<double, double>> intervals;
  for (const auto& [date, present] : snapshots) {
    const double di = static_cast<double>(date);
    if (present) {
      if (!on) {
        on = true;
        on_start = di;
      }
      last_present = di;
    } else if (on) {
      intervals.emplace_back(on_start, 0.5 * (last_present + di));
      on = false;
    }
  }
  if (on)
    intervals.emplace_back(on_start, static_cast<double>(window_end) + 1.0);

  for (const auto& [a, b] : intervals) {
    int lo = std::max(0, static_cast<int>(std::ceil(a)) - window_start);
    for (int d = lo; d < t; ++d) {
      if (static_cast<double>(window_start) + d >= b) break;
      curve.values(d) = 1.0;
    }
  }
  return curve;
}

Curveset build_curveset(const PatientRecord& record,
                        const std::vector<VariableDescriptor>& dict,
                        const PopulationStats& stats, const CurveParams& params,
                        std::uint64_t seed) {
  const int m = static_cast<int>(dict.size());
  const int t = window_days(record.record_start, record.record_end);

  // Every named variable in the record must exist in the dictionary.
  std::set<std::string> known;
  for (const auto& v : dict) known.insert(v.id);
  for (const auto& [var, obs] : record.measurements)
    if (!known.count(var))
      throw std::runtime_error("curveset: measurement variable not in dictionary: " + var);
  for (const auto& [var, val] : record.demographics)
    if (!known.count(var))
      throw std::runtime_error("curveset: demographic variable not in dictionary: " + var);

  Curveset cs;
  cs.patient_id = record.patient_id;
  cs.start_date = record.record_start;
  cs.matrix.resize(m, t);

  for (int i = 0; i < m; ++i) {
    const auto& var = dict[i];
    switch (var.kind) {
      case VariableKind::Condition: {
        std::vector<Day> events;
        for (const auto& [d, c] : record.condition_events)
          if (c.code == var.id) events.push_back(d);
        if (events.empty()) {
          cs.matrix.row(i).setConstant(params.condition_baseline_rate);
        } else {
          auto curve = rash_intensity_curve(
              events, record.record_start, record.record_end,
              params.rash_bandwidth_days, params.rash_n_shifts,
              mix_seed(seed ^ static_cast<std::uint64_t>(i)));
          cs.matrix.row(i) = curve.values.transpose();
        }
        break;
      }
      case VariableKind::Measurement: {
        auto it = record.measurements.find(var.id);
        if (it == record.measurements.end() || it->second.empty()) {
          auto med = stats.measurement_median.find(var.id);
          cs.matrix.row(i).setConstant(
              med != stats.measurement_median.end() ? med->second : 0.0);
        } else {
          auto curve =
              pchip_curve(it->second, record.record_start, record.record_end);
          cs.matrix.row(i) = curve.values.transpose();
        }
        break;
      }
      case VariableKind::Medication: {
        std::vector<std::pair<Day, bool>> snaps;
        bool ever = false;
        for (const auto& [d, meds] : record.med_snapshots) {
          bool present = meds.count(var.id) > 0;
          ever = ever || present;
          snaps.emplace_back(d, present);
        }
        if (!ever) {
          cs.matrix.row(i).setZero();
        } else {
          auto curve =
              adherence_curve(snaps, record.record_start, record.record_end);
          cs.matrix.row(i) = curve.values.transpose();
        }
        break;
      }
      case VariableKind::Demographic: {
        auto it = record.demographics.find(var.id);
        cs.matrix.row(i).setConstant(
            it != record.demographics.end() ? static_cast<double>(it->second)
                                            : 0.0);
        break;
      }
    }
  }
  return cs;
}

void write_curveset(const Curveset& cs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
  put32(kCurvesetMagic);
  put32(1);  // version
  put32(static_cast<std::uint32_t>(cs.patient_id.size()));
  out.write(cs.patient_id.data(), static_cast<std::streamsize>(cs.patient_id.size()));
  std::int32_t start = cs.start_date;
  out.write(reinterpret_cast<char*>(&start), 4);
  put32(static_cast<std::uint32_t>(cs.matrix.rows()));
  put32(static_cast<std::uint32_t>(cs.matrix.cols()));
  for (int i = 0; i < cs.matrix.rows(); ++i)
    for (int j = 0; j < cs.matrix.cols(); ++j) {
      double v = cs.matrix(i, j);
      out.write(reinterpret_cast<char*>(&v), 8);
    }
}

Curveset read_curveset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto get32 = [&] {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  if (get32() != kCurvesetMagic)
    throw std::runtime_error("not a curveset file: " + path);
  if (get32() != 1) throw std::runtime_error("unsupported curveset version");
  Curveset cs;
  cs.patient_id.resize(get32());
  in.read(cs.patient_id.data(), static_cast<std::streamsize>(cs.patient_id.size()));
  std::int32_t start;
  in.read(reinterpret_cast<char*>(&start), 4);
  cs.start_date = start;
  const int m = static_cast<int>(get32());
  const int t = static_cast<int>(get32());
  cs.matrix.resize(m, t);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < t; ++j) {
      double v;
      in.read(reinterpret_cast<char*>(&v), 8);
      cs.matrix(i, j) = v;
    }
  if (!in) throw std::runtime_error("truncated curveset file: " + path);
  return cs;
}

void write_curveset_csv(const Curveset& cs,
                        const std::vector<VariableDescriptor>& dict,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "variable";
  for (int j = 0; j < cs.matrix.cols(); ++j)
    out << "," << format_date(cs.start_date + j);
  out << "\n";
  for (int i = 0; i < cs.matrix.rows(); ++i) {
    out << (i < static_cast<int>(dict.size()) ? dict[i].id : std::to_string(i));
    for (int j = 0; j < cs.matrix.cols(); ++j) out << "," << cs.matrix(i, j);
    out << "\n";
  }
}

}  // namespace strokesig
