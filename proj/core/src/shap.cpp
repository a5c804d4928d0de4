#include "strokesig/shap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace strokesig {

namespace {

double tree_expected_value(const DecisionTree& tree, int node) {
  const TreeNode& n = tree.nodes[node];
  if (n.is_leaf()) return n.leaf_fraction;
  const double cl = tree.nodes[n.left].coverage;
  const double cr = tree.nodes[n.right].coverage;
  return (cl * tree_expected_value(tree, n.left) +
          cr * tree_expected_value(tree, n.right)) /
         (cl + cr);
}

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(std::vector<PathElement>& path, double zero_fraction,
                 double one_fraction, int feature) {
  const int d = static_cast<int>(path.size());
  path.push_back({feature, zero_fraction, one_fraction, d == 0 ? 1.0 : 0.0});
  for (int i = d - 1; i >= 0; --i) {
    path[i + 1].pweight +=
        one_fraction * path[i].pweight * (i + 1) / static_cast<double>(d + 1);
    path[i].pweight =
        zero_fraction * path[i].pweight * (d - i) / static_cast<double>(d + 1);
  }
}

void unwind_path(std::vector<PathElement>& path, int index) {
  const int d = static_cast<int>(path.size()) - 1;
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[d].pweight;
  for (int i = d - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (d + 1) /
                        static_cast<double>((i + 1) * one_fraction);
      next_one_portion = tmp - path[i].pweight * zero_fraction * (d - i) /
                                   static_cast<double>(d + 1);
    } else {
      path[i].pweight =
          path[i].pweight * (d + 1) / (zero_fraction * (d - i));
    }
  }
  for (int i = index; i < d; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
  path.pop_back();
}

double unwound_path_sum(const std::vector<PathElement>& path, int index) {
  const int d = static_cast<int>(path.size()) - 1;
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[d].pweight;
  double total = 0.0;
  if (one_fraction != 0.0) {
    for (int i = d - 1; i >= 0; --i) {
      const double tmp = next_one_portion * (d + 1) /
                         static_cast<double>((i + 1) * one_fraction);
      total += tmp;
      next_one_portion = path[i].pweight - tmp * zero_fraction * (d - i) /
                                               static_cast<double>(d + 1);
    }
  } else {
    for (int i = d - 1; i >= 0; --i)
      total += path[i].pweight * (d + 1) / (zero_fraction * (d - i));
  }
  return total;
}

void shap_recurse(const DecisionTree& tree, const Eigen::VectorXd& x,
                  Eigen::VectorXd& phi, int node,
                  std::vector<PathElement> path, double zero_fraction,
                  double one_fraction, int feature) {
  extend_path(path, zero_fraction, one_fraction, feature);
  const TreeNode& n = tree.nodes[node];

  if (n.is_leaf()) {
    const int d = static_cast<int>(path.size()) - 1;
    for (int i = 1; i <= d; ++i) {
      const double w = unwound_path_sum(path, i);
      phi(path[i].feature) +=
          w * (path[i].one_fraction - path[i].zero_fraction) * n.leaf_fraction;
    }
    return;
  }

  const int hot = x(n.feature) <= n.threshold ? n.left : n.right;
  const int cold = hot == n.left ? n.right : n.left;
  const double hot_frac = tree.nodes[hot].coverage / n.coverage;
  const double cold_frac = tree.nodes[cold].coverage / n.coverage;

  // Undo any earlier occurrence of this feature on the path.
  double incoming_zero = 1.0, incoming_one = 1.0;
  for (int i = 1; i < static_cast<int>(path.size()); ++i) {
    if (path[i].feature == n.feature) {
      incoming_zero = path[i].zero_fraction;
      incoming_one = path[i].one_fraction;
      unwind_path(path, i);
      break;
    }
  }

  shap_recurse(tree, x, phi, hot, path, incoming_zero * hot_frac,
               incoming_one, n.feature);
  shap_recurse(tree, x, phi, cold, path, incoming_zero * cold_frac, 0.0,
               n.feature);
}

void collect_features(const DecisionTree& tree, int node,
                      std::set<int>& features) {
  const TreeNode& n = tree.nodes[node];
  if (n.is_leaf()) return;
  features.insert(n.feature);
  collect_features(tree, n.left, features);
  collect_features(tree, n.right, features);
}

// Conditional expectation with coverage-weighted averaging over features
// outside the coalition, matching the path-dependent convention.
double conditional_expectation(const DecisionTree& tree, int node,
                               const Eigen::VectorXd& x,
                               const std::set<int>& coalition) {
  const TreeNode& n = tree.nodes[node];
  if (n.is_leaf()) return n.leaf_fraction;
  if (coalition.count(n.feature)) {
    const int next = x(n.feature) <= n.threshold ? n.left : n.right;
    return conditional_expectation(tree, next, x, coalition);
  }
  const double cl = tree.nodes[n.left].coverage;
  const double cr = tree.nodes[n.right].coverage;
  return (cl * conditional_expectation(tree, n.left, x, coalition) +
          cr * conditional_expectation(tree, n.right, x, coalition)) /
         (cl + cr);
}

}  // namespace

ShapVector tree_shap(const RandomForest& model, const Eigen::VectorXd& x) {
  if (x.size() != model.n_features)
    throw std::runtime_error("tree_shap: feature-length mismatch");
  for (const auto& tree : model.trees)
    for (const auto& n : tree.nodes)
      if (!n.is_leaf() && n.coverage <= 0.0)
        throw std::runtime_error("tree_shap: missing node coverage metadata");

  ShapVector out;
  out.contributions = Eigen::VectorXd::Zero(model.n_features);
  double base = 0.0;
  for (const auto& tree : model.trees) {
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(model.n_features);
    shap_recurse(tree, x, phi, 0, {}, 1.0, 1.0, -1);
    out.contributions += phi;
    base += tree_expected_value(tree, 0);
  }
  const double n_trees = static_cast<double>(model.trees.size());
  out.contributions /= n_trees;
  out.base_value = base / n_trees;
  out.prediction = model.predict_proba(x);
  return out;
}

ShapVector brute_force_shap(const RandomForest& model,
                            const Eigen::VectorXd& x) {
  if (x.size() != model.n_features)
    throw std::runtime_error("brute_force_shap: feature-length mismatch");

  ShapVector out;
  out.contributions = Eigen::VectorXd::Zero(model.n_features);
  double base = 0.0;

  for (const auto& tree : model.trees) {
    std::set<int> feature_set;
    collect_features(tree, 0, feature_set);
    std::vector<int> active(feature_set.begin(), feature_set.end());
    const int a = static_cast<int>(active.size());
    if (a > 15)
      throw std::runtime_error(
          "brute_force_shap: too many active features for exhaustive "
          "enumeration");

    // f(S) for every coalition mask over the active features.
    const std::size_t n_masks = std::size_t{1} << a;
    std::vector<double> value(n_masks);
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
      std::set<int> coalition;
      for (int b = 0; b < a; ++b)
        if (mask & (std::size_t{1} << b)) coalition.insert(active[b]);
      value[mask] = conditional_expectation(tree, 0, x, coalition);
    }
    base += value[0];

    // Shapley weights over the active set; inactive features contribute 0.
    std::vector<double> factorial(a + 1, 1.0);
    for (int i = 1; i <= a; ++i) factorial[i] = factorial[i - 1] * i;
    for (int b = 0; b < a; ++b) {
      const std::size_t bit = std::size_t{1} << b;
      double phi = 0.0;
      for (std::size_t mask = 0; mask < n_masks; ++mask) {
        if (mask & bit) continue;
        const int s = static_cast<int>(__builtin_popcountll(mask));
        const double w =
            factorial[s] * factorial[a - s - 1] / factorial[a];
        phi += w * (value[mask | bit] - value[mask]);
      }
      out.contributions(active[b]) += phi;
    }
  }

  const double n_trees = static_cast<double>(model.trees.size());
  out.contributions /= n_trees;
  out.base_value = base / n_trees;
  out.prediction = model.predict_proba(x);
  return out;
}

SourceRanking rank_sources(const Eigen::MatrixXd& shap_matrix,
                           RankStatistic statistic) {
  if (shap_matrix.rows() < 1)
    throw std::invalid_argument("rank_sources: no records");
  SourceRanking out;
  out.sort_key = statistic;
  for (int j = 0; j < shap_matrix.cols(); ++j) {
    SourceRankEntry e;
    e.source = j;
    e.mean_abs = shap_matrix.col(j).cwiseAbs().mean();
    e.max_abs = shap_matrix.col(j).cwiseAbs().maxCoeff();
    out.entries.push_back(e);
  }
  auto key = [statistic](const SourceRankEntry& e) {
    return statistic == RankStatistic::MeanAbs ? e.mean_abs : e.max_abs;
  };
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [&](const SourceRankEntry& a, const SourceRankEntry& b) {
                     if (key(a) != key(b)) return key(a) > key(b);
                     return a.source < b.source;
                   });
  return out;
}

SignatureDescription describe_signature(
    const Eigen::MatrixXd& mixing, int source, int top_n,
    const std::vector<std::string>& variable_ids,
    const Eigen::VectorXd* discovery_expressions) {
  if (source < 0 || source >= mixing.cols())
    throw std::out_of_range("describe_signature: source index out of range");
  const int m = static_cast<int>(mixing.rows());

  SignatureDescription out;
  out.source = source;

  std::vector<int> order(m);
  for (int i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(mixing(a, source)) > std::abs(mixing(b, source));
  });
  const double max_abs = std::abs(mixing(order[0], source));
  const int n_keep = std::min(top_n, m);
  for (int i = 0; i < n_keep; ++i) {
    SignatureEntry e;
    e.variable = order[i];
    e.variable_id = order[i] < static_cast<int>(variable_ids.size())
                        ? variable_ids[order[i]]
                        : std::to_string(order[i]);
    e.weight = mixing(order[i], source);
    e.normalized_length = max_abs > 0 ? std::abs(e.weight) / max_abs : 0.0;
    out.entries.push_back(std::move(e));
  }

  if (discovery_expressions && discovery_expressions->size() > 0) {
    const int n_bins = 30;
    const double lo = discovery_expressions->minCoeff();
    const double hi = discovery_expressions->maxCoeff();
    const double width = (hi - lo) > 0 ? (hi - lo) / n_bins : 1.0;
    out.hist_counts.assign(n_bins, 0);
    for (int b = 0; b <= n_bins; ++b) out.hist_edges.push_back(lo + b * width);
    for (int i = 0; i < discovery_expressions->size(); ++i) {
      int b = static_cast<int>(((*discovery_expressions)(i)-lo) / width);
      b = std::clamp(b, 0, n_bins - 1);
      ++out.hist_counts[b];
    }
  }
  return out;
}

Waterfall waterfall(const ShapVector& shap, int top_n) {
  const int k = static_cast<int>(shap.contributions.size());
  Waterfall out;
  out.base_value = shap.base_value;
  out.prediction = shap.prediction;

  std::vector<int> order(k);
  for (int i = 0; i < k; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double aa = std::abs(shap.contributions(a));
    const double bb = std::abs(shap.contributions(b));
    if (aa != bb) return aa > bb;
    return a < b;
  });

  double cumulative = shap.base_value;
  const int n_keep = std::min(top_n, k);
  double other = 0.0;
  for (int i = 0; i < k; ++i) {
    if (i < n_keep) {
      WaterfallStep step;
      step.source = order[i];
      step.contribution = shap.contributions(order[i]);
      cumulative += step.contribution;
      step.cumulative = cumulative;
      out.steps.push_back(step);
    } else {
      other += shap.contributions(order[i]);
    }
  }
  if (n_keep < k) {
    WaterfallStep step;
    step.source = -1;
    step.contribution = other;
    cumulative += other;
    step.cumulative = cumulative;
    out.steps.push_back(step);
  }
  return out;
}

void write_shap_csv(const Eigen::MatrixXd& shap_matrix,
                    const std::vector<std::string>& record_ids,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "record";
  for (int j = 0; j < shap_matrix.cols(); ++j) out << ",source_" << j;
  out << "\n";
  for (int i = 0; i < shap_matrix.rows(); ++i) {
    out << (i < static_cast<int>(record_ids.size()) ? record_ids[i]
                                                    : std::to_string(i));
    for (int j = 0; j < shap_matrix.cols(); ++j)
      out << "," << shap_matrix(i, j);
    out << "\n";
  }
}

void write_ranking_csv(const SourceRanking& ranking, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "rank,source,mean_abs_shap,max_abs_shap\n";
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    const auto& e = ranking.entries[i];
    out << i << "," << e.source << "," << e.mean_abs << "," << e.max_abs
        << "\n";
  }
}

}  // namespace strokesig
