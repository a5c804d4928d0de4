#include "strokesig/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace strokesig {

namespace {

constexpr int kWidth = 560;
constexpr int kHeight = 420;
constexpr int kMargin = 50;

std::ofstream open_svg(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return out;
}

void axes(std::ofstream& out) {
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin
      << "\" x2=\"" << kWidth - kMargin << "\" y2=\"" << kHeight - kMargin
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\""
      << kMargin << "\" y2=\"" << kHeight - kMargin
      << "\" stroke=\"black\"/>\n";
}

double px(double unit) { return kMargin + unit * (kWidth - 2 * kMargin); }
double py(double unit) {
  return kHeight - kMargin - unit * (kHeight - 2 * kMargin);
}

}  // namespace

void render_roc_svg(const std::vector<double>& scores,
                    const std::vector<int>& labels, double auc,
                    const std::string& path) {
  const int n = static_cast<int>(scores.size());
  int n_pos = 0;
  for (int l : labels) n_pos += l;
  const int n_neg = n - n_pos;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] > scores[b]; });

  auto out = open_svg(path);
  axes(out);
  out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1)
      << "\" y2=\"" << py(1)
      << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n";

  std::ostringstream pts;
  pts << px(0) << "," << py(0);
  int tp = 0, fp = 0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (int q = i; q < j; ++q) (labels[order[q]] ? tp : fp)++;
    pts << " " << px(static_cast<double>(fp) / n_neg) << ","
        << py(static_cast<double>(tp) / n_pos);
    i = j;
  }
  out << "<polyline points=\"" << pts.str()
      << "\" fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kMargin - 20
      << "\" text-anchor=\"middle\" font-size=\"14\">ROC curve (AUC = " << auc
      << ")</text>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">false positive "
         "rate</text>\n";
  out << "</svg>\n";
}

void render_waterfall_svg(const Waterfall& wf, const std::string& path) {
  auto out = open_svg(path);
  const int n = static_cast<int>(wf.steps.size());
  double lo = std::min(wf.base_value, wf.prediction);
  double hi = std::max(wf.base_value, wf.prediction);
  double prev = wf.base_value;
  for (const auto& s : wf.steps) {
    lo = std::min(lo, s.cumulative);
    hi = std::max(hi, s.cumulative);
  }
  if (hi - lo < 1e-12) hi = lo + 1e-12;
  auto xcoord = [&](double v) { return px((v - lo) / (hi - lo)); };

  const double row_h =
      (kHeight - 2.0 * kMargin) / std::max(1, n + 1);
  out << "<line x1=\"" << xcoord(wf.base_value) << "\" y1=\"" << kMargin
      << "\" x2=\"" << xcoord(wf.base_value) << "\" y2=\""
      << kHeight - kMargin << "\" stroke=\"gray\" stroke-dasharray=\"3\"/>\n";

  for (int i = 0; i < n; ++i) {
    const auto& s = wf.steps[i];
    const double y = kMargin + i * row_h;
    const double x0 = xcoord(prev), x1 = xcoord(s.cumulative);
    out << "<rect x=\"" << std::min(x0, x1) << "\" y=\"" << y << "\" width=\""
        << std::max(1.0, std::abs(x1 - x0)) << "\" height=\"" << row_h * 0.7
        << "\" fill=\"" << (s.contribution >= 0 ? "#c0392b" : "#2980b9")
        << "\"/>\n";
    out << "<text x=\"8\" y=\"" << y + row_h * 0.5 << "\" font-size=\"11\">"
        << (s.source >= 0 ? "source " + std::to_string(s.source)
                          : "other sources")
        << "</text>\n";
    prev = s.cumulative;
  }
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kMargin - 20
      << "\" text-anchor=\"middle\" font-size=\"14\">Prediction breakdown: "
      << wf.base_value << " &#8594; " << wf.prediction << "</text>\n";
  out << "</svg>\n";
}

void render_signature_svg(const SignatureDescription& sig,
                          const std::string& path) {
  auto out = open_svg(path);
  const int n = static_cast<int>(sig.entries.size());
  const double row_h = (kHeight - 2.0 * kMargin) / std::max(1, n);
  const double mid = kWidth / 2.0;
  for (int i = 0; i < n; ++i) {
    const auto& e = sig.entries[i];
    const double y = kMargin + i * row_h;
    const double len = e.normalized_length * (kWidth / 2.0 - kMargin);
    const double x = e.weight >= 0 ? mid : mid - len;
    out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\""
        << std::max(1.0, len) << "\" height=\"" << row_h * 0.65
        << "\" fill=\"" << (e.weight >= 0 ? "#27ae60" : "#8e44ad")
        << "\"/>\n";
    out << "<text x=\"8\" y=\"" << y + row_h * 0.5 << "\" font-size=\"11\">"
        << e.variable_id << " (" << e.weight << ")</text>\n";
  }
  // Inset expression histogram, log-scale counts.
  if (!sig.hist_counts.empty()) {
    const double in_x = kWidth - 170, in_y = kMargin, in_w = 150, in_h = 80;
    int max_count = 1;
    for (int c : sig.hist_counts) max_count = std::max(max_count, c);
    const double log_max = std::log10(max_count + 1.0);
    const double bar_w = in_w / sig.hist_counts.size();
    out << "<rect x=\"" << in_x << "\" y=\"" << in_y << "\" width=\"" << in_w
        << "\" height=\"" << in_h
        << "\" fill=\"none\" stroke=\"gray\"/>\n";
    for (std::size_t b = 0; b < sig.hist_counts.size(); ++b) {
      const double h =
          in_h * std::log10(sig.hist_counts[b] + 1.0) / log_max;
      out << "<rect x=\"" << in_x + b * bar_w << "\" y=\"" << in_y + in_h - h
          << "\" width=\"" << bar_w << "\" height=\"" << h
          << "\" fill=\"#7f8c8d\"/>\n";
    }
  }
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kMargin - 20
      << "\" text-anchor=\"middle\" font-size=\"14\">Signature of source "
      << sig.source << "</text>\n";
  out << "</svg>\n";
}

}  // namespace strokesig
