#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace strokesig {

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double coverage = 0.0;       // training weight reaching the node
  double leaf_fraction = 0.0;  // positive-class fraction (leaves)

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // node 0 is the root

  double predict(const Eigen::VectorXd& x) const;
};

struct HyperParams {
  int n_trees = 200;
  int max_depth = 12;
  int min_samples_leaf = 5;
  double max_features = 0.5;  // fraction of features per split, (0, 1]
  bool balanced_class_weight = true;
  std::uint64_t seed = 0;
};

struct RandomForest {
  std::vector<DecisionTree> trees;
  HyperParams hyperparams;
  int n_features = 0;
  double positive_rate = 0.0;  // training class balance

  // Mean of per-tree leaf fractions, in [0, 1].
  double predict_proba(const Eigen::VectorXd& x) const;
};

struct LabeledDataset {
  Eigen::MatrixXd features;        // n x k
  std::vector<int> labels;         // 0/1
  std::vector<std::string> groups; // patient id per row

  int n() const { return static_cast<int>(features.rows()); }
  int k() const { return static_cast<int>(features.cols()); }
};

// Gini-impurity trees on bootstrap resamples with per-split feature
// subsampling; deterministic given hp.seed. Throws on single-class data.
RandomForest fit_forest(const LabeledDataset& data, const HyperParams& hp);

// Mann-Whitney AUROC with tie handling, sort-based. Throws when one class
// is absent.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct CvResult {
  double mean_auroc = 0.0;
  std::vector<double> fold_aurocs;  // NaN for skipped folds
  int valid_folds = 0;
};

// Grouped k-fold: all samples of one patient share a fold. Folds whose
// holdout has a single class are skipped with a warning in the result.
CvResult cross_validate(const LabeledDataset& data, const HyperParams& hp,
                        int n_folds = 6, std::uint64_t fold_seed = 0);

enum class SearchStrategy { Random, Grid, CoordinateRefine };

struct HyperParamSpace {
  std::vector<int> n_trees = {100, 200};
  std::vector<int> max_depth = {6, 10, 14};
  std::vector<int> min_samples_leaf = {2, 5, 10};
  std::vector<double> max_features = {0.3, 0.5, 0.8};
};

struct SearchTrial {
  HyperParams hp;
  double mean_auroc = 0.0;
};

struct SearchResult {
  HyperParams best;
  double best_auroc = 0.0;
  std::vector<SearchTrial> log;
};

SearchResult search_hyperparams(const LabeledDataset& data,
                                const HyperParamSpace& space, int budget,
                                SearchStrategy strategy, std::uint64_t seed,
                                int n_folds = 6);

void write_trial_log_csv(const SearchResult& result, const std::string& path);

void write_forest(const RandomForest& forest, const std::string& path);
RandomForest read_forest(const std::string& path);

}  // namespace strokesig
