#pragma once
#include <array>
#include <cstdint>

namespace dice {

struct Rgb8 {
  uint8_t r = 0, g = 0, b = 0;
};

struct LabPixel {
  double L = 0.0, a = 0.0, b = 0.0;
};

// sRGB (piecewise gamma) -> XYZ (D65) -> CIELAB
LabPixel srgb_to_lab(Rgb8 p);
// inverse; out-of-gamut values are clipped before rounding
Rgb8 lab_to_srgb(const LabPixel& p);
// unrounded linear-light helpers for tests
std::array<double, 3> srgb_to_xyz(Rgb8 p);

}  // namespace dice
