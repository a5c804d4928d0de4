#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "strokesig/forest.hpp"

namespace strokesig {

struct ShapVector {
  double base_value = 0.0;          // expected model output
  Eigen::VectorXd contributions;    // length k
  double prediction = 0.0;

  // Local accuracy: base_value + sum(contributions) == prediction.
  double additivity_error() const {
    return std::abs(base_value + contributions.sum() - prediction);
  }
};

// Exact path-dependent TreeSHAP (coverage-weighted), averaged over trees.
ShapVector tree_shap(const RandomForest& model, const Eigen::VectorXd& x);

// Exhaustive-subset Shapley oracle with the same conditional-expectation
// convention; refuses trees with more than ~15 active features.
ShapVector brute_force_shap(const RandomForest& model, const Eigen::VectorXd& x);

enum class RankStatistic { MeanAbs, MaxAbs };

struct SourceRankEntry {
  int source = 0;
  double mean_abs = 0.0;
  double max_abs = 0.0;
};

struct SourceRanking {
  RankStatistic sort_key = RankStatistic::MeanAbs;
  std::vector<SourceRankEntry> entries;  // descending, ties by source index
};

// shap_matrix: one row per test record, one column per source.
SourceRanking rank_sources(const Eigen::MatrixXd& shap_matrix,
                           RankStatistic statistic);

struct SignatureEntry {
  int variable = 0;
  std::string variable_id;
  double weight = 0.0;
  double normalized_length = 0.0;  // |weight| / max |weight|
};

struct SignatureDescription {
  int source = 0;
  std::vector<SignatureEntry> entries;  // sorted by |weight| descending
  // Expression histogram over discovery instances (counts shown on a log
  // scale by the renderer).
  std::vector<double> hist_edges;
  std::vector<int> hist_counts;
};

SignatureDescription describe_signature(
    const Eigen::MatrixXd& mixing, int source, int top_n,
    const std::vector<std::string>& variable_ids,
    const Eigen::VectorXd* discovery_expressions = nullptr);

struct WaterfallStep {
  int source = -1;  // -1 for the aggregated "other sources" entry
  double contribution = 0.0;
  double cumulative = 0.0;  // running value starting from base
};

struct Waterfall {
  double base_value = 0.0;
  double prediction = 0.0;
  std::vector<WaterfallStep> steps;
};

Waterfall waterfall(const ShapVector& shap, int top_n);

void write_shap_csv(const Eigen::MatrixXd& shap_matrix,
                    const std::vector<std::string>& record_ids,
                    const std::string& path);
void write_ranking_csv(const SourceRanking& ranking, const std::string& path);

}  // namespace strokesig
