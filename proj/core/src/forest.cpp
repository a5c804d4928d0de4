#include "strokesig/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace strokesig {

namespace {

using nlohmann::json;

constexpr std::uint32_t kForestMagic = 0x52464f52;  // "RFOR"

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct TreeBuilder {
  const LabeledDataset& data;
  const HyperParams& hp;
  const std::vector<double>& class_weight;  // [w0, w1]
  std::mt19937_64& rng;
  std::vector<TreeNode> nodes;

  struct Row {
    int index;
    double weight;  // bootstrap count (class weight applied separately)
  };

  double gini(double wpos, double wneg) const {
    const double w = wpos + wneg;
    if (w <= 0) return 0.0;
    const double p = wpos / w, q = wneg / w;
    return 1.0 - p * p - q * q;
  }

  double row_weight(const Row& r) const {
    return r.weight * class_weight[data.labels[r.index]];
  }

  int build(std::vector<Row>& rows, int depth) {
    double wpos = 0.0, wneg = 0.0, count = 0.0;
    for (const auto& r : rows) {
      (data.labels[r.index] ? wpos : wneg) += row_weight(r);
      count += r.weight;
    }

    const int id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[id].coverage = wpos + wneg;
    nodes[id].leaf_fraction = (wpos + wneg) > 0 ? wpos / (wpos + wneg) : 0.0;

    const bool pure = wpos == 0.0 || wneg == 0.0;
    if (depth >= hp.max_depth || pure ||
        count < 2.0 * hp.min_samples_leaf) {
      return id;
    }

    // Random feature subset of size ceil(max_features * k), no replacement.
    const int k = data.k();
    const int n_try = std::min(
        k, std::max(1, static_cast<int>(std::ceil(hp.max_features * k))));
    std::vector<int> features(k);
    std::iota(features.begin(), features.end(), 0);
    for (int i = 0; i < n_try; ++i) {
      std::uniform_int_distribution<int> pick(i, k - 1);
      std::swap(features[i], features[pick(rng)]);
    }
    features.resize(n_try);
    // Ties broken by lowest feature index, then lowest threshold.
    std::sort(features.begin(), features.end());

    const double parent_imp = gini(wpos, wneg);
    const double total_w = wpos + wneg;
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<std::pair<double, int>> sorted;  // (value, row slot)
    sorted.reserve(rows.size());
    for (int f : features) {
      sorted.clear();
      for (std::size_t i = 0; i < rows.size(); ++i)
        sorted.emplace_back(data.features(rows[i].index, f),
                            static_cast<int>(i));
      std::sort(sorted.begin(), sorted.end());

      double lpos = 0.0, lneg = 0.0, lcount = 0.0;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const Row& r = rows[sorted[i].second];
        (data.labels[r.index] ? lpos : lneg) += row_weight(r);
        lcount += r.weight;
        if (sorted[i + 1].first <= sorted[i].first) continue;
        if (lcount < hp.min_samples_leaf ||
            count - lcount < hp.min_samples_leaf)
          continue;
        const double rpos = wpos - lpos, rneg = wneg - lneg;
        const double lw = lpos + lneg, rw = rpos + rneg;
        const double gain = parent_imp - (lw / total_w) * gini(lpos, lneg) -
                            (rw / total_w) * gini(rpos, rneg);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
        }
      }
    }

    if (best_feature < 0) return id;

    std::vector<Row> left, right;
    for (const auto& r : rows)
      (data.features(r.index, best_feature) <= best_threshold ? left : right)
          .push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    nodes[id].feature = best_feature;
    nodes[id].threshold = best_threshold;
    nodes[id].left = build(left, depth + 1);
    nodes[id].right = build(right, depth + 1);
    return id;
  }
};

}  // namespace

double DecisionTree::predict(const Eigen::VectorXd& x) const {
  int node = 0;
  while (!nodes[node].is_leaf()) {
    node = x(nodes[node].feature) <= nodes[node].threshold
               ? nodes[node].left
               : nodes[node].right;
  }
  return nodes[node].leaf_fraction;
}

double RandomForest::predict_proba(const Eigen::VectorXd& x) const {
  if (x.size() != n_features)
    throw std::runtime_error("predict_proba: feature-length mismatch");
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return sum / static_cast<double>(trees.size());
}

RandomForest fit_forest(const LabeledDataset& data, const HyperParams& hp) {
  const int n = data.n();
  if (n < 2) throw std::invalid_argument("fit_forest: need at least 2 rows");
  int n_pos = 0;
  for (int l : data.labels) n_pos += l;
  if (n_pos == 0 || n_pos == n)
    throw std::invalid_argument("fit_forest: single-class training data");
  if (hp.n_trees < 1 || hp.max_depth < 1 || hp.min_samples_leaf < 1 ||
      hp.max_features <= 0.0 || hp.max_features > 1.0)
    throw std::invalid_argument("fit_forest: bad hyperparameters");

  std::vector<double> class_weight = {1.0, 1.0};
  if (hp.balanced_class_weight) {
    class_weight[0] = n / (2.0 * (n - n_pos));
    class_weight[1] = n / (2.0 * n_pos);
  }

  RandomForest forest;
  forest.hyperparams = hp;
  forest.n_features = data.k();
  forest.positive_rate = static_cast<double>(n_pos) / n;
  forest.trees.resize(hp.n_trees);

  for (int t = 0; t < hp.n_trees; ++t) {
    std::mt19937_64 rng(mix_seed(hp.seed ^ mix_seed(0x7000 + t)));
    std::vector<double> counts(n, 0.0);
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int i = 0; i < n; ++i) counts[pick(rng)] += 1.0;

    std::vector<TreeBuilder::Row> rows;
    for (int i = 0; i < n; ++i)
      if (counts[i] > 0) rows.push_back({i, counts[i]});

    TreeBuilder builder{data, hp, class_weight, rng, {}};
    builder.build(rows, 0);
    forest.trees[t].nodes = std::move(builder.nodes);
  }
  return forest;
}

double auroc(const std::vector<double>& scores,
             const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("auroc: bad input sizes");
  const int n = static_cast<int>(scores.size());
  int n_pos = 0;
  for (int l : labels) n_pos += l;
  const int n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auroc: one class absent, metric undefined");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });

  // Midranks over tie groups; U = sum of positive ranks - n+(n+ + 1)/2.
  double rank_sum_pos = 0.0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * ((i + 1) + j);  // ranks are 1-based
    for (int q = i; q < j; ++q)
      if (labels[order[q]]) rank_sum_pos += midrank;
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * n_pos * (n_pos + 1.0);
  return u / (static_cast<double>(n_pos) * n_neg);
}

CvResult cross_validate(const LabeledDataset& data, const HyperParams& hp,
                        int n_folds, std::uint64_t fold_seed) {
  std::vector<std::string> group_ids;
  std::map<std::string, int> group_index;
  for (const auto& g : data.groups)
    if (group_index.emplace(g, (int)group_ids.size()).second)
      group_ids.push_back(g);
  if (static_cast<int>(group_ids.size()) < n_folds)
    throw std::invalid_argument("cross_validate: fewer groups than folds");

  // Deterministic shuffled round-robin assignment of groups to folds.
  std::vector<int> perm(group_ids.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(mix_seed(fold_seed ^ 0xf01d));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold_of(group_ids.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    fold_of[perm[i]] = static_cast<int>(i) % n_folds;

  CvResult result;
  double sum = 0.0;
  for (int f = 0; f < n_folds; ++f) {
    LabeledDataset train;
    std::vector<double> holdout_scores;
    std::vector<int> holdout_labels;
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < data.n(); ++i) {
      (fold_of[group_index[data.groups[i]]] == f ? test_rows : train_rows)
          .push_back(i);
    }
    train.features.resize(train_rows.size(), data.k());
    for (std::size_t r = 0; r < train_rows.size(); ++r) {
      train.features.row(r) = data.features.row(train_rows[r]);
      train.labels.push_back(data.labels[train_rows[r]]);
      train.groups.push_back(data.groups[train_rows[r]]);
    }
    int holdout_pos = 0;
    for (int i : test_rows) holdout_pos += data.labels[i];
    if (test_rows.empty() || holdout_pos == 0 ||
        holdout_pos == static_cast<int>(test_rows.size())) {
      result.fold_aurocs.push_back(std::nan(""));
      continue;
    }
    int train_pos = 0;
    for (int l : train.labels) train_pos += l;
    if (train_pos == 0 || train_pos == train.n())
      throw std::invalid_argument("cross_validate: single-class training fold");

    auto forest = fit_forest(train, hp);
    for (int i : test_rows) {
      holdout_scores.push_back(
          forest.predict_proba(data.features.row(i).transpose()));
      holdout_labels.push_back(data.labels[i]);
    }
    const double a = auroc(holdout_scores, holdout_labels);
    result.fold_aurocs.push_back(a);
    sum += a;
    ++result.valid_folds;
  }
  if (result.valid_folds == 0)
    throw std::runtime_error("cross_validate: no valid folds");
  result.mean_auroc = sum / result.valid_folds;
  return result;
}

namespace {

HyperParams nth_grid_point(const HyperParamSpace& space, std::size_t idx,
                           std::uint64_t seed) {
  HyperParams hp;
  hp.n_trees = space.n_trees[idx % space.n_trees.size()];
  idx /= space.n_trees.size();
  hp.max_depth = space.max_depth[idx % space.max_depth.size()];
  idx /= space.max_depth.size();
  hp.min_samples_leaf = space.min_samples_leaf[idx % space.min_samples_leaf.size()];
  idx /= space.min_samples_leaf.size();
  hp.max_features = space.max_features[idx % space.max_features.size()];
  hp.seed = seed;
  return hp;
}

}  // namespace

SearchResult search_hyperparams(const LabeledDataset& data,
                                const HyperParamSpace& space, int budget,
                                SearchStrategy strategy, std::uint64_t seed,
                                int n_folds) {
  if (budget < 1) throw std::invalid_argument("search: budget must be >= 1");
  if (space.n_trees.empty() || space.max_depth.empty() ||
      space.min_samples_leaf.empty() || space.max_features.empty())
    throw std::invalid_argument("search: empty hyperparameter space");

  SearchResult result;
  result.best_auroc = -1.0;
  std::mt19937_64 rng(mix_seed(seed ^ 0x5ea4c4));

  auto evaluate = [&](const HyperParams& hp) {
    auto cv = cross_validate(data, hp, n_folds, seed);
    result.log.push_back({hp, cv.mean_auroc});
    if (cv.mean_auroc > result.best_auroc) {
      result.best_auroc = cv.mean_auroc;
      result.best = hp;
    }
    return cv.mean_auroc;
  };

  auto random_hp = [&] {
    auto pick = [&](const auto& v) {
      std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
      return v[d(rng)];
    };
    HyperParams hp;
    hp.n_trees = pick(space.n_trees);
    hp.max_depth = pick(space.max_depth);
    hp.min_samples_leaf = pick(space.min_samples_leaf);
    hp.max_features = pick(space.max_features);
    hp.seed = seed;
    return hp;
  };

  switch (strategy) {
    case SearchStrategy::Random: {
      for (int t = 0; t < budget; ++t) evaluate(random_hp());
      break;
    }
    case SearchStrategy::Grid: {
      const std::size_t total = space.n_trees.size() * space.max_depth.size() *
                                space.min_samples_leaf.size() *
                                space.max_features.size();
      for (std::size_t i = 0; i < total && i < (std::size_t)budget; ++i)
        evaluate(nth_grid_point(space, i, seed));
      break;
    }
    case SearchStrategy::CoordinateRefine: {
      // Random start, then sweep each axis around the incumbent.
      int spent = 0;
      evaluate(random_hp());
      ++spent;
      bool improved = true;
      while (improved && spent < budget) {
        improved = false;
        auto try_axis = [&](auto member, const auto& candidates) {
          for (const auto& v : candidates) {
            if (spent >= budget) return;
            HyperParams hp = result.best;
            hp.*member = v;
            if (hp.n_trees == result.best.n_trees &&
                hp.max_depth == result.best.max_depth &&
                hp.min_samples_leaf == result.best.min_samples_leaf &&
                hp.max_features == result.best.max_features)
              continue;
            const double before = result.best_auroc;
            evaluate(hp);
            ++spent;
            if (result.best_auroc > before) improved = true;
          }
        };
        try_axis(&HyperParams::n_trees, space.n_trees);
        try_axis(&HyperParams::max_depth, space.max_depth);
        try_axis(&HyperParams::min_samples_leaf, space.min_samples_leaf);
        try_axis(&HyperParams::max_features, space.max_features);
      }
      break;
    }
  }
  return result;
}

void write_trial_log_csv(const SearchResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "trial,n_trees,max_depth,min_samples_leaf,max_features,mean_auroc\n";
  for (std::size_t i = 0; i < result.log.size(); ++i) {
    const auto& t = result.log[i];
    out << i << "," << t.hp.n_trees << "," << t.hp.max_depth << ","
        << t.hp.min_samples_leaf << "," << t.hp.max_features << ","
        << t.mean_auroc << "\n";
  }
}

void write_forest(const RandomForest& forest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  json meta = {{"n_trees", forest.hyperparams.n_trees},
               {"max_depth", forest.hyperparams.max_depth},
               {"min_samples_leaf", forest.hyperparams.min_samples_leaf},
               {"max_features", forest.hyperparams.max_features},
               {"balanced_class_weight", forest.hyperparams.balanced_class_weight},
               {"seed", forest.hyperparams.seed},
               {"n_features", forest.n_features},
               {"positive_rate", forest.positive_rate}};
  std::string header = meta.dump();
  auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
  put32(kForestMagic);
  put32(1);
  put32(static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put32(static_cast<std::uint32_t>(forest.trees.size()));
  auto put_double = [&](double v) { out.write(reinterpret_cast<char*>(&v), 8); };
  auto put_int = [&](std::int32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
  for (const auto& tree : forest.trees) {
    put32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& n : tree.nodes) {
      put_int(n.feature);
      put_double(n.threshold);
      put_int(n.left);
      put_int(n.right);
      put_double(n.coverage);
      put_double(n.leaf_fraction);
    }
  }
}

RandomForest read_forest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto get32 = [&] {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  if (get32() != kForestMagic)
    throw std::runtime_error("not a forest file: " + path);
  if (get32() != 1) throw std::runtime_error("unsupported forest version");
  std::string header(get32(), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  json meta = json::parse(header);

  RandomForest forest;
  forest.hyperparams.n_trees = meta.at("n_trees").get<int>();
  forest.hyperparams.max_depth = meta.at("max_depth").get<int>();
  forest.hyperparams.min_samples_leaf = meta.at("min_samples_leaf").get<int>();
  forest.hyperparams.max_features = meta.at("max_features").get<double>();
  forest.hyperparams.balanced_class_weight =
      meta.at("balanced_class_weight").get<bool>();
  forest.hyperparams.seed = meta.at("seed").get<std::uint64_t>();
  forest.n_features = meta.at("n_features").get<int>();
  forest.positive_rate = meta.at("positive_rate").get<double>();

  auto get_double = [&] {
    double v;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  auto get_int = [&] {
    std::int32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  forest.trees.resize(get32());
  for (auto& tree : forest.trees) {
    tree.nodes.resize(get32());
    for (auto& n : tree.nodes) {
      n.feature = get_int();
      n.threshold = get_double();
      n.left = get_int();
      n.right = get_int();
      n.coverage = get_double();
      n.leaf_fraction = get_double();
    }
  }
  if (!in) throw std::runtime_error("truncated forest file: " + path);
  return forest;
}

}  // namespace strokesig
