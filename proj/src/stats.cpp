#include "dice/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dice/errors.hpp"

namespace dice {

double mean(const std::vector<double>& v) {
  if (v.empty()) throw DegenerateInput("mean of empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance(const std::vector<double>& v) {
  double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) throw DegenerateInput("sample std needs >= 2 values");
  double n = static_cast<double>(v.size());
  return std::sqrt(variance(v) * n / (n - 1.0));
}

double median(std::vector<double> v) {
  if (v.empty()) throw DegenerateInput("median of empty vector");
  size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + h, v.end());
  double hi = v[h];
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + h);
  return 0.5 * (lo + hi);
}

double r2_score(const std::vector<double>& a, const std::vector<double>& p) {
  if (a.size() != p.size())
    throw DataError("r2_score: length mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(p.size()) + ")");
  if (a.size() < 2) throw DegenerateInput("r2_score: need at least 2 values");
  double m = mean(a);
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ss_res += (a[i] - p[i]) * (a[i] - p[i]);
    ss_tot += (a[i] - m) * (a[i] - m);
  }
  if (!(ss_tot > 0.0)) throw DegenerateInput("r2_score: actual has zero variance");
  return 1.0 - ss_res / ss_tot;
}

Standardized standardize_columns(const FeatureMatrix& m) {
  if (m.rows() < 2) throw DegenerateInput("standardize_columns: need rows >= 2");
  const size_t n = m.rows(), d = m.cols();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) mu[j] += m(i, j);
  for (size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(n);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) {
      double c = m(i, j) - mu[j];
      sd[j] += c * c;
    }
  for (size_t j = 0; j < d; ++j) {
    sd[j] = std::sqrt(sd[j] / static_cast<double>(n));
    if (sd[j] < 1e-12) sd[j] = 0.0;
  }
  std::vector<double> out(n * d);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) {
      double c = m(i, j) - mu[j];
      out[i * d + j] = sd[j] > 0.0 ? c / sd[j] : 0.0;
    }
  return {FeatureMatrix::from_double(n, d, out), mu, sd};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p must lie in (0,1)");
  // Acklam rational approximation, then two Halley steps on erfc
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - plow) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  for (int it = 0; it < 2; ++it) {
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
    x = x - u / (1 + x * u / 2);
  }
  return x;
}

std::pair<double, double> normal_interval(double tau, double se, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("normal_interval: level must lie in (0,1)");
  if (!(se >= 0.0)) throw ConfigError("normal_interval: se must be >= 0");
  if (se == 0.0) return {tau, tau};
  double z = normal_quantile(0.5 * (1.0 + level));
  return {tau - z * se, tau + z * se};
}

double two_sided_p(double z) {
  if (std::isnan(z)) return 1.0;
  double p = std::erfc(std::fabs(z) / std::numbers::sqrt2);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace dice
