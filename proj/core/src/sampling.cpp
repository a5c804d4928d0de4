#include "strokesig/sampling.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace strokesig {

namespace {

using nlohmann::json;

constexpr std::uint32_t kMatrixMagic = 0x444d5458;  // "DMTX"

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const char* transform_name(RowTransform t) {
  switch (t) {
    case RowTransform::Identity: return "identity";
    case RowTransform::CenterScale2SD: return "center_scale_2sd";
    case RowTransform::LogCenterScale2SD: return "log_center_scale_2sd";
  }
  return "identity";
}

RowTransform transform_from_name(const std::string& s) {
  if (s == "identity") return RowTransform::Identity;
  if (s == "center_scale_2sd") return RowTransform::CenterScale2SD;
  if (s == "log_center_scale_2sd") return RowTransform::LogCenterScale2SD;
  throw std::runtime_error("unknown row transform: " + s);
}

}  // namespace

std::vector<Day> sample_times(Day window_start, Day window_end,
                              double samples_per_year, bool force_final_year,
                              std::uint64_t seed) {
  if (window_end < window_start) throw std::invalid_argument("empty window");
  if (samples_per_year <= 0)
    throw std::invalid_argument("sample density must be positive");

  const int span = static_cast<int>(window_end - window_start) + 1;
  const double years = span / kDaysPerYear;
  std::mt19937_64 rng(mix_seed(seed));
  std::vector<Day> out;

  auto uniform_day = [&](Day lo, Day hi) {
    std::uniform_int_distribution<int> d(0, static_cast<int>(hi - lo));
    return lo + d(rng);
  };

  if (force_final_year) {
    if (years >= 1.0) {
      const Day final_lo = window_end - 364;
      out.push_back(uniform_day(final_lo, window_end));
      const double remainder_years = years - 1.0;
      if (remainder_years > 0 && final_lo > window_start) {
        std::poisson_distribution<int> np(samples_per_year * remainder_years);
        int n = np(rng);
        for (int i = 0; i < n; ++i)
          out.push_back(uniform_day(window_start, final_lo - 1));
      }
    } else {
      out.push_back(uniform_day(window_start, window_end));
    }
  } else {
    std::poisson_distribution<int> np(samples_per_year * years);
    int n = np(rng);
    for (int i = 0; i < n; ++i)
      out.push_back(uniform_day(window_start, window_end));
  }
  std::sort(out.begin(), out.end());
  return out;
}

DataMatrix assemble_matrix(const std::vector<const Curveset*>& curvesets,
                           const std::vector<std::vector<Day>>& dates) {
  if (curvesets.size() != dates.size())
    throw std::invalid_argument("assemble_matrix: size mismatch");
  std::size_t n = 0;
  for (const auto& d : dates) n += d.size();
  if (n == 0) throw std::invalid_argument("assemble_matrix: no samples");

  const int m = curvesets.empty() ? 0 : static_cast<int>(curvesets[0]->matrix.rows());
  DataMatrix x;
  x.values.resize(m, static_cast<int>(n));
  x.columns.reserve(n);

  int col = 0;
  for (std::size_t i = 0; i < curvesets.size(); ++i) {
    const Curveset& cs = *curvesets[i];
    auto sorted = dates[i];
    std::sort(sorted.begin(), sorted.end());
    for (Day d : sorted) {
      if (d < cs.start_date || d >= cs.start_date + cs.days())
        throw std::logic_error("assemble_matrix: sampled date outside curveset span");
      x.values.col(col) = cs.column_at(d);
      x.columns.push_back({cs.patient_id, d});
      ++col;
    }
  }
  return x;
}

std::pair<DataMatrix, StandardizationStats> standardize(
    const DataMatrix& x, const std::vector<VariableKind>& kinds) {
  const int m = x.rows(), n = x.cols();
  if (static_cast<int>(kinds.size()) != m)
    throw std::invalid_argument("standardize: kinds size mismatch");
  if (!x.values.allFinite())
    throw std::invalid_argument("standardize: non-finite input");

  DataMatrix out = x;
  StandardizationStats stats;
  stats.rows.resize(m);

  for (int i = 0; i < m; ++i) {
    RowStats& rs = stats.rows[i];
    const bool is_log = kinds[i] == VariableKind::Condition;
    const bool scaled = is_log || kinds[i] == VariableKind::Measurement;
    if (!scaled || n < 2) {
      rs.transform = RowTransform::Identity;
      rs.degenerate = scaled;
      continue;
    }
    Eigen::RowVectorXd row = x.values.row(i);
    if (is_log) {
      rs.offset = kLogIntensityOffset;
      row = (row.array() + rs.offset).log();
    }
    rs.mean = row.mean();
    const double ss = (row.array() - rs.mean).square().sum();
    rs.sd = std::sqrt(ss / (n - 1));
    if (rs.sd <= 0.0) {
      rs.transform = RowTransform::Identity;
      rs.degenerate = true;
      continue;
    }
    rs.transform =
        is_log ? RowTransform::LogCenterScale2SD : RowTransform::CenterScale2SD;
    out.values.row(i) = (row.array() - rs.mean) / (2.0 * rs.sd);
  }
  return {std::move(out), std::move(stats)};
}

DataMatrix apply_standardization(const DataMatrix& x,
                                 const StandardizationStats& stats) {
  if (static_cast<int>(stats.rows.size()) != x.rows())
    throw std::runtime_error("apply_standardization: row-count mismatch");
  DataMatrix out = x;
  for (int i = 0; i < x.rows(); ++i) {
    const RowStats& rs = stats.rows[i];
    switch (rs.transform) {
      case RowTransform::Identity:
        break;
      case RowTransform::CenterScale2SD:
        out.values.row(i) =
            (x.values.row(i).array() - rs.mean) / (2.0 * rs.sd);
        break;
      case RowTransform::LogCenterScale2SD:
        out.values.row(i) =
            ((x.values.row(i).array() + rs.offset).log() - rs.mean) /
            (2.0 * rs.sd);
        break;
    }
  }
  return out;
}

void write_matrix(const DataMatrix& x, const StandardizationStats* stats,
                  const std::string& bin_path, const std::string& meta_path) {
  {
    std::ofstream out(bin_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + bin_path);
    auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
    put32(kMatrixMagic);
    put32(1);
    put32(static_cast<std::uint32_t>(x.rows()));
    put32(static_cast<std::uint32_t>(x.cols()));
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j) {
        double v = x.values(i, j);
        out.write(reinterpret_cast<char*>(&v), 8);
      }
  }
  json meta;
  json cols = json::array();
  for (const auto& c : x.columns)
    cols.push_back({{"patient_id", c.patient_id},
                    {"date", format_date(c.sample_date)}});
  meta["columns"] = std::move(cols);
  if (stats) {
    json rows = json::array();
    for (const auto& rs : stats->rows)
      rows.push_back({{"transform", transform_name(rs.transform)},
                      {"offset", rs.offset},
                      {"mean", rs.mean},
                      {"sd", rs.sd},
                      {"degenerate", rs.degenerate}});
    meta["row_stats"] = std::move(rows);
  }
  std::ofstream mout(meta_path);
  if (!mout) throw std::runtime_error("cannot open " + meta_path);
  mout << meta.dump(2) << "\n";
}

std::pair<DataMatrix, StandardizationStats> read_matrix(
    const std::string& bin_path, const std::string& meta_path) {
  DataMatrix x;
  {
    std::ifstream in(bin_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + bin_path);
    auto get32 = [&] {
      std::uint32_t v;
      in.read(reinterpret_cast<char*>(&v), 4);
      return v;
    };
    if (get32() != kMatrixMagic)
      throw std::runtime_error("not a data-matrix file: " + bin_path);
    if (get32() != 1) throw std::runtime_error("unsupported matrix version");
    const int m = static_cast<int>(get32());
    const int n = static_cast<int>(get32());
    x.values.resize(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double v;
        in.read(reinterpret_cast<char*>(&v), 8);
        x.values(i, j) = v;
      }
    if (!in) throw std::runtime_error("truncated matrix file: " + bin_path);
  }
  StandardizationStats stats;
  std::ifstream min(meta_path);
  if (!min) throw std::runtime_error("cannot open " + meta_path);
  json meta;
  min >> meta;
  for (const auto& c : meta.at("columns"))
    x.columns.push_back({c.at("patient_id").get<std::string>(),
                         parse_date(c.at("date").get<std::string>())});
  if (meta.contains("row_stats")) {
    for (const auto& r : meta.at("row_stats")) {
      RowStats rs;
      rs.transform = transform_from_name(r.at("transform").get<std::string>());
      rs.offset = r.at("offset").get<double>();
      rs.mean = r.at("mean").get<double>();
      rs.sd = r.at("sd").get<double>();
      rs.degenerate = r.at("degenerate").get<bool>();
      stats.rows.push_back(rs);
    }
  }
  return {std::move(x), std::move(stats)};
}

}  // namespace strokesig
