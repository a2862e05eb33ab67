#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "dice/matrix.hpp"
#include "dice/nuisance.hpp"
#include "dice/rng.hpp"
#include "json.hpp"

namespace dice {

struct CrossFitPlan {
  int n_folds = 5;
  std::vector<int> fold;  // per-sample fold index
  bool stratified = true;

  std::vector<size_t> test_rows(int k) const;
  std::vector<size_t> train_rows(int k) const;
};

CrossFitPlan make_folds(size_t n, const std::vector<double>& t, int k, SeededRng rng,
                        bool stratified = true);

struct CrossFitPredictions {
  std::vector<double> y_hat, t_hat;  // out-of-fold
};

CrossFitPredictions crossfit_predictions(const FeatureMatrix& x, const std::vector<double>& t,
                                         const std::vector<double>& y, const LearnerSpec& spec,
                                         const CrossFitPlan& plan);

struct Residuals {
  std::vector<double> y_res, t_res;
  double y_r2 = 0.0, t_r2 = 0.0;
};

Residuals crossfit_residuals(const FeatureMatrix& x, const std::vector<double>& t,
                             const std::vector<double>& y, const LearnerSpec& spec,
                             const CrossFitPlan& plan);

struct DmlEstimate {
  double tau_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  double p_value = 1.0;
  double y_r2 = 0.0, t_r2 = 0.0;
  size_t n = 0;
  int folds = 0;
  std::string learner;
  uint64_t seed = 0;
  std::vector<double> y_res, t_res;  // kept only when requested
};

DmlEstimate estimate_ate(const std::vector<double>& y_res, const std::vector<double>& t_res,
                         double level = 0.95);

DmlEstimate run_dml(const FeatureMatrix& x, const std::vector<double>& t,
                    const std::vector<double>& y, const LearnerSpec& spec, int k, uint64_t seed,
                    bool keep_residuals = false);

// y on (1, t), HC1 standard error; no controls
DmlEstimate naive_ols(const std::vector<double>& t, const std::vector<double>& y,
                      double level = 0.95);

nlohmann::json to_json(const DmlEstimate& e);

}  // namespace dice
