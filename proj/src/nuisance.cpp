#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "dice/errors.hpp"
#include "dice/nuisance.hpp"
#include "dice/parallel.hpp"

namespace dice {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clip_p(double p) { return std::clamp(p, kPropensityClip, 1.0 - kPropensityClip); }

void check_inputs(const FeatureMatrix& x, const std::vector<double>& y, Task task) {
  if (x.empty() || y.empty()) throw DataError("fit: empty data");
  if (x.rows() != y.size())
    throw DataError("fit: x has " + std::to_string(x.rows()) + " rows but y has " +
                    std::to_string(y.size()));
  for (double v : y)
    if (!std::isfinite(v)) throw DataError("fit: non-finite target");
  if (task == Task::propensity) {
    bool has0 = false, has1 = false;
    for (double v : y) {
      if (v == 0.0) has0 = true;
      else if (v == 1.0) has1 = true;
      else throw DataError("fit: propensity target must be 0/1");
    }
    if (!has0 || !has1) throw DegenerateInput("fit: single-class propensity target");
  }
}

TreeParams tree_params(const LearnerSpec& s, size_t d) {
  TreeParams p;
  p.max_depth = s.max_depth;
  p.max_features = s.features_per_split(static_cast<int>(d));
  return p;
}

void fit_forest(FittedModel& m, const FeatureMatrix& x, const std::vector<double>& y) {
  const ColumnMajor cm(x);
  const size_t n = x.rows();
  const TreeParams tp = tree_params(m.spec, x.cols());
  SeededRng root(m.spec.seed);
  m.trees.assign(m.spec.trees, Tree{});
  parallel_for(m.trees.size(), [&](size_t t) {
    SeededRng rng = root.derive("tree", t);
    std::vector<double> w(n, 0.0);
    if (m.spec.bootstrap) {
      for (size_t k = 0; k < n; ++k) w[rng.below(n)] += 1.0;
    } else {
      std::fill(w.begin(), w.end(), 1.0);
    }
    std::vector<uint32_t> idx;
    idx.reserve(n);
    for (size_t i = 0; i < n; ++i)
      if (w[i] > 0) idx.push_back(static_cast<uint32_t>(i));
    m.trees[t] = build_tree(cm, y, w, std::move(idx), tp, rng);
  });
}

void fit_boosting(FittedModel& m, const FeatureMatrix& x, const std::vector<double>& y) {
  const ColumnMajor cm(x);
  const size_t n = x.rows();
  const TreeParams tp = tree_params(m.spec, x.cols());
  SeededRng root(m.spec.seed);
  std::vector<double> w(n, 1.0), F(n), r(n), hs(n);
  std::vector<uint32_t> all(n);
  for (size_t i = 0; i < n; ++i) all[i] = static_cast<uint32_t>(i);
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(n);
  const bool prop = m.task == Task::propensity;
  m.init = prop ? std::log(ybar / (1.0 - ybar)) : ybar;
  std::fill(F.begin(), F.end(), m.init);
  for (int round = 0; round < m.spec.trees; ++round) {
    for (size_t i = 0; i < n; ++i) {
      if (prop) {
        double p = sigmoid(F[i]);
        r[i] = y[i] - p;
        hs[i] = p * (1.0 - p);
      } else {
        r[i] = y[i] - F[i];
      }
    }
    SeededRng rng = root.derive("round", static_cast<uint64_t>(round));
    Tree tr = build_tree(cm, r, w, all, tp, rng, prop ? &hs : nullptr);
    for (size_t i = 0; i < n; ++i) F[i] += m.spec.learning_rate * tr.predict(x.row(i));
    m.trees.push_back(std::move(tr));
  }
}

void fit_ridge(FittedModel& m, const FeatureMatrix& x, const std::vector<double>& y) {
  const size_t n = x.rows(), d = x.cols();
  m.means.assign(d, 0.0);
  m.stds.assign(d, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) m.means[j] += x(i, j);
  for (auto& v : m.means) v /= static_cast<double>(n);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) {
      double c = x(i, j) - m.means[j];
      m.stds[j] += c * c;
    }
  for (auto& v : m.stds) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v < 1e-12) v = 0.0;
  }
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(n);
  m.intercept = ybar;

  Eigen::MatrixXd Z(n, d);
  Eigen::VectorXd yc(n);
  for (size_t i = 0; i < n; ++i) {
    yc(i) = y[i] - ybar;
    for (size_t j = 0; j < d; ++j)
      Z(i, j) = m.stds[j] > 0 ? (x(i, j) - m.means[j]) / m.stds[j] : 0.0;
  }
  Eigen::MatrixXd A = Z.transpose() * Z;
  for (size_t j = 0; j < d; ++j) {
    if (m.stds[j] > 0) A(j, j) += m.spec.ridge_lambda;
    else A(j, j) = 1.0;  // dead column, coefficient pinned at 0
  }
  Eigen::VectorXd rhs = Z.transpose() * yc;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw NumericalError("ridge: factorization failed");
  Eigen::VectorXd beta = ldlt.solve(rhs);
  if (!beta.allFinite()) throw NumericalError("ridge: non-finite coefficients (singular system?)");
  m.coef.assign(beta.data(), beta.data() + d);
}

}  // namespace

FittedModel fit(const LearnerSpec& spec, const FeatureMatrix& x, const std::vector<double>& y,
                Task task) {
  check_inputs(x, y, task);
  FittedModel m;
  m.spec = spec;
  m.task = task;
  m.dim = x.cols();
  switch (spec.kind) {
    case LearnerKind::random_forest: fit_forest(m, x, y); break;
    case LearnerKind::gradient_boosting: fit_boosting(m, x, y); break;
    case LearnerKind::ridge: fit_ridge(m, x, y); break;
  }
  return m;
}

std::vector<double> FittedModel::predict(const FeatureMatrix& x) const {
  if (x.cols() != dim)
    throw DataError("predict: expected " + std::to_string(dim) + " columns, got " +
                    std::to_string(x.cols()));
  const size_t n = x.rows();
  std::vector<double> out(n, 0.0);
  switch (spec.kind) {
    case LearnerKind::random_forest:
      for (size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (const auto& t : trees) s += t.predict(x.row(i));
        out[i] = s / static_cast<double>(trees.size());
      }
      break;
    case LearnerKind::gradient_boosting:
      for (size_t i = 0; i < n; ++i) {
        double f = init;
        for (const auto& t : trees) f += spec.learning_rate * t.predict(x.row(i));
        out[i] = task == Task::propensity ? sigmoid(f) : f;
      }
      break;
    case LearnerKind::ridge:
      for (size_t i = 0; i < n; ++i) {
        double f = intercept;
        for (size_t j = 0; j < dim; ++j)
          if (stds[j] > 0) f += coef[j] * (x(i, j) - means[j]) / stds[j];
        out[i] = f;
      }
      break;
  }
  if (task == Task::propensity)
    for (auto& v : out) v = clip_p(v);
  return out;
}

std::vector<double> FittedModel::predict_tree(const FeatureMatrix& x, size_t t) const {
  if (spec.kind != LearnerKind::random_forest || t >= trees.size())
    throw ConfigError("predict_tree: forest tree index out of range");
  if (x.cols() != dim) throw DataError("predict_tree: dimension mismatch");
  std::vector<double> out(x.rows());
  for (size_t i = 0; i < x.rows(); ++i) out[i] = trees[t].predict(x.row(i));
  return out;
}

}  // namespace dice
