#include "dice/dml.hpp"

#include <cmath>

#include "dice/errors.hpp"
#include "dice/parallel.hpp"
#include "dice/stats.hpp"

namespace dice {

std::vector<size_t> CrossFitPlan::test_rows(int k) const {
  std::vector<size_t> r;
  for (size_t i = 0; i < fold.size(); ++i)
    if (fold[i] == k) r.push_back(i);
  return r;
}

std::vector<size_t> CrossFitPlan::train_rows(int k) const {
  std::vector<size_t> r;
  for (size_t i = 0; i < fold.size(); ++i)
    if (fold[i] != k) r.push_back(i);
  return r;
}

CrossFitPlan make_folds(size_t n, const std::vector<double>& t, int k, SeededRng rng,
                        bool stratified) {
  if (k < 2) throw ConfigError("make_folds: k must be >= 2");
  if (static_cast<size_t>(k) > n)
    throw ConfigError("make_folds: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  if (t.size() != n) throw DataError("make_folds: treatment length mismatch");
  CrossFitPlan plan;
  plan.n_folds = k;
  plan.stratified = stratified;
  plan.fold.assign(n, -1);
  std::vector<std::vector<size_t>> groups(stratified ? 2 : 1);
  for (size_t i = 0; i < n; ++i) groups[stratified && t[i] > 0.5 ? 1 : 0].push_back(i);
  // round-robin over shuffled groups; offset carries across groups
  size_t pos = 0;
  for (auto& g : groups) {
    rng.shuffle(g);
    for (size_t i : g) plan.fold[i] = static_cast<int>(pos++ % static_cast<size_t>(k));
  }
  return plan;
}

CrossFitPredictions crossfit_predictions(const FeatureMatrix& x, const std::vector<double>& t,
                                         const std::vector<double>& y, const LearnerSpec& spec,
                                         const CrossFitPlan& plan) {
  const size_t n = x.rows();
  if (t.size() != n || y.size() != n || plan.fold.size() != n)
    throw DataError("crossfit: x, t, y and plan must have equal length");
  CrossFitPredictions out;
  out.y_hat.assign(n, 0.0);
  out.t_hat.assign(n, 0.0);
  const int K = plan.n_folds;
  std::vector<std::vector<size_t>> tr(K), te(K);
  for (int k = 0; k < K; ++k) {
    tr[k] = plan.train_rows(k);
    te[k] = plan.test_rows(k);
    if (te[k].empty()) throw DataError("crossfit: fold " + std::to_string(k) + " is empty");
  }
  parallel_for(static_cast<size_t>(2 * K), [&](size_t job) {
    int k = static_cast<int>(job / 2);
    bool is_t = job % 2 == 1;
    const auto& target = is_t ? t : y;
    std::vector<double> yy;
    yy.reserve(tr[k].size());
    for (size_t i : tr[k]) yy.push_back(target[i]);
    LearnerSpec s = spec;
    s.seed = SeededRng(spec.seed).derive(is_t ? "m_hat" : "g_hat", static_cast<uint64_t>(k)).seed();
    FittedModel m = fit(s, x.select_rows(tr[k]), yy, is_t ? Task::propensity : Task::regression);
    auto pred = m.predict(x.select_rows(te[k]));
    auto& dst = is_t ? out.t_hat : out.y_hat;
    for (size_t a = 0; a < te[k].size(); ++a) dst[te[k][a]] = pred[a];
  });
  return out;
}

Residuals crossfit_residuals(const FeatureMatrix& x, const std::vector<double>& t,
                             const std::vector<double>& y, const LearnerSpec& spec,
                             const CrossFitPlan& plan) {
  auto p = crossfit_predictions(x, t, y, spec, plan);
  Residuals r;
  const size_t n = y.size();
  r.y_res.resize(n);
  r.t_res.resize(n);
  for (size_t i = 0; i < n; ++i) {
    r.y_res[i] = y[i] - p.y_hat[i];
    r.t_res[i] = t[i] - p.t_hat[i];
  }
  r.y_r2 = r2_score(y, p.y_hat);
  r.t_r2 = r2_score(t, p.t_hat);
  return r;
}

namespace {

void fill_inference(DmlEstimate& e, double level) {
  auto ci = normal_interval(e.tau_hat, e.se, level);
  e.ci_lo = ci.first;
  e.ci_hi = ci.second;
  if (e.se > 0.0) e.p_value = two_sided_p(e.tau_hat / e.se);
  else e.p_value = e.tau_hat == 0.0 ? 1.0 : 0.0;
}

}  // namespace

DmlEstimate estimate_ate(const std::vector<double>& y_res, const std::vector<double>& t_res,
                         double level) {
  if (y_res.size() != t_res.size()) throw DataError("estimate_ate: residual length mismatch");
  const size_t n = t_res.size();
  if (n == 0) throw DataError("estimate_ate: empty residuals");
  double stt = 0.0, sty = 0.0;
  for (size_t i = 0; i < n; ++i) {
    stt += t_res[i] * t_res[i];
    sty += t_res[i] * y_res[i];
  }
  if (!(stt > 0.0)) throw DegenerateInput("estimate_ate: treatment residuals have no variation");
  DmlEstimate e;
  e.n = n;
  e.tau_hat = sty / stt;
  double psi2 = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double psi = t_res[i] * (y_res[i] - e.tau_hat * t_res[i]);
    psi2 += psi * psi;
  }
  const double nn = static_cast<double>(n);
  double mtt = stt / nn;
  e.se = std::sqrt((psi2 / nn) / (nn * mtt * mtt));
  if (!std::isfinite(e.tau_hat) || !std::isfinite(e.se))
    throw NumericalError("estimate_ate: non-finite estimate");
  fill_inference(e, level);
  return e;
}

DmlEstimate run_dml(const FeatureMatrix& x, const std::vector<double>& t,
                    const std::vector<double>& y, const LearnerSpec& spec, int k, uint64_t seed,
                    bool keep_residuals) {
  SeededRng root(seed);
  CrossFitPlan plan = make_folds(x.rows(), t, k, root.derive("folds"));
  LearnerSpec s = spec;
  s.seed = root.derive("learner").seed();
  Residuals r = crossfit_residuals(x, t, y, s, plan);
  DmlEstimate e = estimate_ate(r.y_res, r.t_res);
  e.y_r2 = r.y_r2;
  e.t_r2 = r.t_r2;
  e.folds = k;
  e.learner = spec.name;
  e.seed = seed;
  if (keep_residuals) {
    e.y_res = std::move(r.y_res);
    e.t_res = std::move(r.t_res);
  }
  return e;
}

DmlEstimate naive_ols(const std::vector<double>& t, const std::vector<double>& y, double level) {
  if (t.size() != y.size() || t.size() < 3) throw DataError("naive_ols: need >= 3 aligned samples");
  const size_t n = t.size();
  double tb = mean(t), yb = mean(y);
  double stt = 0.0, sty = 0.0;
  for (size_t i = 0; i < n; ++i) {
    stt += (t[i] - tb) * (t[i] - tb);
    sty += (t[i] - tb) * (y[i] - yb);
  }
  if (!(stt > 0.0)) throw DegenerateInput("naive_ols: treatment has no variation");
  DmlEstimate e;
  e.n = n;
  e.tau_hat = sty / stt;
  double a = yb - e.tau_hat * tb;
  double meat = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double u = y[i] - a - e.tau_hat * t[i];
    meat += (t[i] - tb) * (t[i] - tb) * u * u;
  }
  const double nn = static_cast<double>(n);
  e.se = std::sqrt(meat / (stt * stt) * nn / (nn - 2.0));
  e.learner = "ols";
  fill_inference(e, level);
  e.y_r2 = std::nan("");
  e.t_r2 = std::nan("");
  return e;
}

nlohmann::json to_json(const DmlEstimate& e) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return {{"tau_hat", num(e.tau_hat)}, {"se", num(e.se)},
          {"ci", {num(e.ci_lo), num(e.ci_hi)}}, {"p_value", num(e.p_value)},
          {"y_r2", num(e.y_r2)}, {"t_r2", num(e.t_r2)},
          {"n", e.n}, {"folds", e.folds},
          {"learner", e.learner}, {"seed", e.seed}};
}

}  // namespace dice
