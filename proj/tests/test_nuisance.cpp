#include <cmath>

#include "dice/errors.hpp"
#include "dice/nuisance.hpp"
#include "dice/rng.hpp"
#include "doctest.h"

using namespace dice;

namespace {

// dense Gauss-Jordan with partial pivoting
std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const size_t n = b.size();
  for (size_t c = 0; c < n; ++c) {
    size_t piv = c;
    for (size_t r = c + 1; r < n; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      double f = a[r][c] / a[c][c];
      for (size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (size_t i = 0; i < n; ++i) b[i] /= a[i][i];
  return b;
}

// ridge on population-standardized columns, intercept unpenalized
std::vector<double> ridge_oracle(const FeatureMatrix& x, const std::vector<double>& y, double lam,
                                 const FeatureMatrix& xq) {
  const size_t n = x.rows(), d = x.cols();
  std::vector<double> mu(d, 0), sd(d, 0);
  for (size_t j = 0; j < d; ++j) {
    for (size_t i = 0; i < n; ++i) mu[j] += x(i, j);
    mu[j] /= n;
    for (size_t i = 0; i < n; ++i) sd[j] += (x(i, j) - mu[j]) * (x(i, j) - mu[j]);
    sd[j] = std::sqrt(sd[j] / n);
  }
  double ybar = 0;
  for (double v : y) ybar += v;
  ybar /= n;
  std::vector<std::vector<double>> a(d, std::vector<double>(d, 0));
  std::vector<double> rhs(d, 0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) {
      double zj = (x(i, j) - mu[j]) / sd[j];
      rhs[j] += zj * (y[i] - ybar);
      for (size_t k = 0; k < d; ++k) a[j][k] += zj * (x(i, k) - mu[k]) / sd[k];
    }
  for (size_t j = 0; j < d; ++j) a[j][j] += lam;
  auto beta = solve(a, rhs);
  std::vector<double> out(xq.rows(), ybar);
  for (size_t i = 0; i < xq.rows(); ++i)
    for (size_t j = 0; j < d; ++j) out[i] += beta[j] * (xq(i, j) - mu[j]) / sd[j];
  return out;
}

FeatureMatrix random_x(SeededRng& r, size_t n, size_t d) {
  std::vector<double> v(n * d);
  for (auto& x : v) x = r.normal();
  return FeatureMatrix::from_double(n, d, v);
}

LearnerSpec spec_of(LearnerKind k) {
  LearnerSpec s;
  s.kind = k;
  return s;
}

}  // namespace

TEST_CASE("presets and json") {
  for (const auto& name : learner_preset_names()) {
    auto s = learner_preset(name);
    auto back = learner_from_json(to_json(s));
    CHECK(to_json(back) == to_json(s));
  }
  CHECK_THROWS_AS(learner_preset("svm"), ConfigError);
  try {
    learner_from_json(nlohmann::json{{"trees", -1}}, "$.learner");
    FAIL("expected throw");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("$.learner.trees") != std::string::npos);
  }
  CHECK(learner_preset("rf").features_per_split(256) == 16);
  CHECK(learner_preset("rf").features_per_split(10) == 4);
}

TEST_CASE("ridge matches the closed-form oracle") {
  SeededRng r(1);
  auto x = random_x(r, 40, 5);
  std::vector<double> y(40);
  for (size_t i = 0; i < 40; ++i) y[i] = 2 * x(i, 0) - x(i, 3) + 0.3 * r.normal() + 4;
  for (double lam : {0.0, 1.0, 25.0}) {
    auto s = spec_of(LearnerKind::ridge);
    s.ridge_lambda = lam;
    auto m = fit(s, x, y, Task::regression);
    auto p = m.predict(x);
    auto o = ridge_oracle(x, y, lam, x);
    for (size_t i = 0; i < 40; ++i) CHECK(p[i] == doctest::Approx(o[i]).epsilon(1e-8));
  }
}

TEST_CASE("ridge lambda 0 equals OLS via normal equations") {
  SeededRng r(2);
  auto x = random_x(r, 30, 3);
  std::vector<double> y(30);
  for (size_t i = 0; i < 30; ++i) y[i] = 1 + x(i, 0) + 0.5 * x(i, 1) + r.normal();
  // [1, x] normal equations
  std::vector<std::vector<double>> a(4, std::vector<double>(4, 0));
  std::vector<double> b(4, 0);
  for (size_t i = 0; i < 30; ++i) {
    double row[4] = {1, x(i, 0), x(i, 1), x(i, 2)};
    for (int j = 0; j < 4; ++j) {
      b[j] += row[j] * y[i];
      for (int k = 0; k < 4; ++k) a[j][k] += row[j] * row[k];
    }
  }
  auto beta = solve(a, b);
  auto s = spec_of(LearnerKind::ridge);
  s.ridge_lambda = 0;
  auto p = fit(s, x, y, Task::regression).predict(x);
  for (size_t i = 0; i < 30; ++i) {
    double o = beta[0] + beta[1] * x(i, 0) + beta[2] * x(i, 1) + beta[3] * x(i, 2);
    CHECK(std::fabs(p[i] - o) < 1e-8);
  }
}

TEST_CASE("ridge two-sample toy and constant input") {
  auto x = FeatureMatrix::from_double(2, 2, {1, 0, 0, 1});
  auto s = spec_of(LearnerKind::ridge);
  auto p = fit(s, x, {0, 1}, Task::regression).predict(x);
  auto o = ridge_oracle(x, {0, 1}, 1.0, x);
  for (int i = 0; i < 2; ++i) {
    CHECK(p[i] == doctest::Approx(o[i]).epsilon(1e-10));
    CHECK_UNARY(p[i] >= 0.0);
    CHECK_UNARY(p[i] <= 1.0);
  }
  CHECK(p[1] > p[0]);
  auto c = FeatureMatrix::from_double(3, 1, {2, 2, 2});
  auto q = fit(s, c, {1, 2, 6}, Task::regression).predict(c);
  for (double v : q) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("single depth-1 tree separates 1-d data") {
  auto x = FeatureMatrix::from_double(6, 1, {0.1, 0.2, 0.3, 0.7, 0.8, 0.9});
  std::vector<double> t{0, 0, 0, 1, 1, 1};
  LearnerSpec s;
  s.trees = 1;
  s.max_depth = 1;
  s.bootstrap = false;
  auto m = fit(s, x, t, Task::propensity);
  auto p = m.predict(x);
  for (size_t i = 0; i < 6; ++i) CHECK((p[i] > 0.5) == (t[i] == 1.0));
  CHECK(m.trees[0].depth() == 1);
  CHECK(m.trees[0].nodes[0].threshold == doctest::Approx(0.5));
}

TEST_CASE("unbounded tree memorizes training targets") {
  SeededRng r(3);
  auto x = random_x(r, 60, 4);
  std::vector<double> y(60);
  for (auto& v : y) v = r.normal();
  LearnerSpec s;
  s.trees = 1;
  s.max_depth = 1000000;
  s.bootstrap = false;
  s.max_features = "all";
  auto p = fit(s, x, y, Task::regression).predict(x);
  for (size_t i = 0; i < 60; ++i) CHECK(p[i] == doctest::Approx(y[i]).epsilon(1e-12));
}

TEST_CASE("forest prediction is the mean of its trees") {
  SeededRng r(4);
  auto x = random_x(r, 50, 6);
  std::vector<double> y(50), t(50);
  for (size_t i = 0; i < 50; ++i) {
    y[i] = x(i, 0) + r.normal();
    t[i] = x(i, 1) + 0.5 * r.normal() > 0 ? 1 : 0;
  }
  LearnerSpec s;
  s.trees = 3;
  s.max_depth = 4;
  auto m = fit(s, x, y, Task::regression);
  auto p = m.predict(x);
  std::vector<double> acc(50, 0);
  for (size_t k = 0; k < 3; ++k) {
    auto pt = m.predict_tree(x, k);
    for (size_t i = 0; i < 50; ++i) acc[i] += pt[i] / 3;
  }
  for (size_t i = 0; i < 50; ++i) CHECK(p[i] == doctest::Approx(acc[i]).epsilon(1e-12));
  // propensity: same structure, clipped
  auto mp = fit(s, x, t, Task::propensity);
  auto pp = mp.predict(x);
  for (size_t i = 0; i < 50; ++i) {
    double a = 0;
    for (size_t k = 0; k < 3; ++k) a += mp.predict_tree(x, k)[i] / 3;
    CHECK(pp[i] == doctest::Approx(std::clamp(a, 1e-3, 0.999)).epsilon(1e-12));
  }
}

TEST_CASE("property: propensity outputs clipped for every learner") {
  SeededRng r(5);
  auto x = random_x(r, 80, 3);
  std::vector<double> t(80);
  for (size_t i = 0; i < 80; ++i) t[i] = x(i, 0) > 0 ? 1 : 0;  // separable
  auto xq = random_x(r, 200, 3);
  for (const auto& name : learner_preset_names()) {
    auto s = learner_preset(name);
    s.trees = std::min(s.trees, 20);
    auto p = fit(s, x, t, Task::propensity).predict(xq);
    for (double v : p) {
      CHECK_UNARY(v >= 1e-3);
      CHECK_UNARY(v <= 0.999);
    }
  }
  CHECK_THROWS_AS(fit(learner_preset("rf"), x, std::vector<double>(80, 1.0), Task::propensity),
                  DegenerateInput);
}

TEST_CASE("boosting on a constant target") {
  SeededRng r(6);
  auto x = random_x(r, 40, 3);
  auto p = fit(learner_preset("gbm"), x, std::vector<double>(40, 2.5), Task::regression).predict(x);
  for (double v : p) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("boosting shrinks toward the mean as learning rate falls") {
  SeededRng r(7);
  auto x = random_x(r, 100, 3);
  std::vector<double> y(100);
  double ybar = 0;
  for (size_t i = 0; i < 100; ++i) {
    y[i] = 3 * x(i, 0) + r.normal();
    ybar += y[i] / 100;
  }
  double prev = 1e300, first = 0;
  for (double lr : {0.3, 0.1, 0.03, 0.01, 0.001}) {
    auto s = learner_preset("gbm");
    s.trees = 20;
    s.learning_rate = lr;
    auto p = fit(s, x, y, Task::regression).predict(x);
    double dev = 0;
    for (double v : p) dev += (v - ybar) * (v - ybar);
    CHECK(dev < prev);
    if (lr == 0.3) first = dev;
    prev = dev;
  }
  CHECK(prev < 1e-3 * first);
}

TEST_CASE("property: fitting is deterministic per seed") {
  SeededRng r(8);
  auto x = random_x(r, 120, 8);
  std::vector<double> y(120), t(120);
  for (size_t i = 0; i < 120; ++i) {
    y[i] = x(i, 2) + r.normal();
    t[i] = r.bernoulli(0.3) ? 1 : 0;
  }
  for (const auto& name : learner_preset_names()) {
    auto s = learner_preset(name);
    s.trees = std::min(s.trees, 10);
    s.seed = 99;
    for (Task task : {Task::regression, Task::propensity}) {
      const auto& target = task == Task::regression ? y : t;
      auto a = fit(s, x, target, task).predict(x);
      auto b = fit(s, x, target, task).predict(x);
      for (size_t i = 0; i < a.size(); ++i)
        CHECK(static_cast<float>(a[i]) == static_cast<float>(b[i]));
    }
  }
  LearnerSpec s1, s2;
  s1.trees = s2.trees = 5;
  s2.seed = 1;
  CHECK(fit(s1, x, y, Task::regression).predict(x) != fit(s2, x, y, Task::regression).predict(x));
}

TEST_CASE("tree splits prefer the lowest feature on ties") {
  // identical columns: the split must use feature 0
  auto x = FeatureMatrix::from_double(4, 2, {0, 0, 0, 0, 1, 1, 1, 1});
  LearnerSpec s;
  s.trees = 1;
  s.max_depth = 1;
  s.bootstrap = false;
  s.max_features = "all";
  auto m = fit(s, x, {0, 0, 1, 1}, Task::regression);
  CHECK(m.trees[0].nodes[0].feature == 0);
}

TEST_CASE("dimension mismatch on predict") {
  SeededRng r(10);
  auto x = random_x(r, 20, 3);
  std::vector<double> y(20, 0);
  y[0] = 1;
  auto m = fit(learner_preset("ridge"), x, y, Task::regression);
  CHECK_THROWS_AS(m.predict(random_x(r, 5, 4)), DataError);
}
