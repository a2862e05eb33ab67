#include "dice/color.hpp"

#include <algorithm>
#include <cmath>

namespace dice {

namespace {

constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;
constexpr double kM[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                             {0.2126729, 0.7151522, 0.0721750},
                             {0.0193339, 0.1191920, 0.9503041}};
constexpr double kD = 6.0 / 29.0;

double decode(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
double encode(double c) { return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055; }

double f(double t) { return t > kD * kD * kD ? std::cbrt(t) : t / (3.0 * kD * kD) + 4.0 / 29.0; }
double finv(double t) { return t > kD ? t * t * t : 3.0 * kD * kD * (t - 4.0 / 29.0); }

struct Inverse {
  double m[3][3];
  Inverse() {
    const auto& a = kM;
    double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                 a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                 a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    m[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
    m[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
    m[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
    m[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
    m[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
    m[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
    m[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
    m[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
    m[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
  }
};

const Inverse& inv() {
  static const Inverse i;
  return i;
}

}  // namespace

std::array<double, 3> srgb_to_xyz(Rgb8 p) {
  double c[3] = {decode(p.r / 255.0), decode(p.g / 255.0), decode(p.b / 255.0)};
  std::array<double, 3> x{};
  for (int i = 0; i < 3; ++i) x[i] = kM[i][0] * c[0] + kM[i][1] * c[1] + kM[i][2] * c[2];
  return x;
}

LabPixel srgb_to_lab(Rgb8 p) {
  auto x = srgb_to_xyz(p);
  double fx = f(x[0] / kXn), fy = f(x[1] / kYn), fz = f(x[2] / kZn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Rgb8 lab_to_srgb(const LabPixel& p) {
  double fy = (p.L + 16.0) / 116.0;
  double fx = fy + p.a / 500.0;
  double fz = fy - p.b / 200.0;
  double xyz[3] = {kXn * finv(fx), kYn * finv(fy), kZn * finv(fz)};
  const auto& m = inv().m;
  uint8_t out[3];
  for (int i = 0; i < 3; ++i) {
    double lin = m[i][0] * xyz[0] + m[i][1] * xyz[1] + m[i][2] * xyz[2];
    double v = encode(std::clamp(lin, 0.0, 1.0));
    out[i] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  }
  return {out[0], out[1], out[2]};
}

}  // namespace dice
