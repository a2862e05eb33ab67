#pragma once
#include <utility>
#include <vector>

#include "dice/matrix.hpp"

namespace dice {

double mean(const std::vector<double>& v);
// population variance
double variance(const std::vector<double>& v);
double sample_std(const std::vector<double>& v);
double median(std::vector<double> v);

// 1 - SS_res/SS_tot; throws DegenerateInput when actual is constant
double r2_score(const std::vector<double>& actual, const std::vector<double>& predicted);

struct Standardized {
  FeatureMatrix matrix;
  std::vector<double> means;
  std::vector<double> stds;  // 0 for degenerate columns
};
Standardized standardize_columns(const FeatureMatrix& m);

double normal_cdf(double x);
double normal_quantile(double p);
std::pair<double, double> normal_interval(double tau, double se, double level);
double two_sided_p(double z);

}  // namespace dice
