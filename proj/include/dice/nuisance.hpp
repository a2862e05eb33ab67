#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "dice/matrix.hpp"
#include "dice/rng.hpp"
#include "json.hpp"

namespace dice {

enum class LearnerKind { ridge, random_forest, gradient_boosting };
enum class Task { regression, propensity };

inline constexpr double kPropensityClip = 1e-3;

struct LearnerSpec {
  LearnerKind kind = LearnerKind::random_forest;
  int trees = 50;
  int max_depth = 8;  // >= 1'000'000 means unbounded
  double learning_rate = 0.1;
  double ridge_lambda = 1.0;
  std::string max_features = "sqrt";  // "sqrt" | "all"
  bool bootstrap = true;
  uint64_t seed = 0;
  std::string name = "rf";

  int features_per_split(int d) const;
};

// "rf", "rf-shallow", "rf-deep", "gbm", "ridge"
LearnerSpec learner_preset(const std::string& name);
std::vector<std::string> learner_preset_names();

nlohmann::json to_json(const LearnerSpec& s);
// path is used in error messages, e.g. "$.learner"
LearnerSpec learner_from_json(const nlohmann::json& j, const std::string& path = "$");
std::string kind_name(LearnerKind k);

// column-major copy used by the tree builders
struct ColumnMajor {
  size_t n = 0, d = 0;
  std::vector<float> v;  // v[j*n + i]
  explicit ColumnMajor(const FeatureMatrix& x);
  float at(size_t i, size_t j) const { return v[j * n + i]; }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(std::span<const float> row) const;
  int depth() const;
};

struct TreeParams {
  int max_depth = 8;
  int max_features = 1;
  int min_samples_split = 2;
};

// Exhaustive midpoint search, weighted squared-error gain (equal to Gini
// gain up to a factor 2 on 0/1 targets). Leaf = sum(w*y)/sum(w), or
// sum(w*y)/sum(w*h) when hess is given.
Tree build_tree(const ColumnMajor& x, const std::vector<double>& y, const std::vector<double>& w,
                std::vector<uint32_t> idx, const TreeParams& p, SeededRng& rng,
                const std::vector<double>* hess = nullptr);

class FittedModel {
public:
  LearnerSpec spec;
  Task task = Task::regression;
  size_t dim = 0;
  std::vector<Tree> trees;
  double init = 0.0;           // boosting base score
  std::vector<double> coef;    // ridge, on standardized scale
  std::vector<double> means, stds;
  double intercept = 0.0;

  std::vector<double> predict(const FeatureMatrix& x) const;
  // per-tree outputs, forests only
  std::vector<double> predict_tree(const FeatureMatrix& x, size_t t) const;
};

FittedModel fit(const LearnerSpec& spec, const FeatureMatrix& x, const std::vector<double>& y,
                Task task);

}  // namespace dice
