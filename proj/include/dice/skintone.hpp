#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "dice/color.hpp"
#include "dice/errors.hpp"

namespace dice {

inline constexpr double kItaThreshold = 28.0;

struct RgbImage {
  size_t width = 0, height = 0;
  std::vector<uint8_t> pixels;  // RGB, row-major

  RgbImage() = default;
  RgbImage(size_t w, size_t h, Rgb8 fill = {});
  Rgb8 at(size_t x, size_t y) const;
  void set(size_t x, size_t y, Rgb8 p);
};

struct BBox {
  long x = 0, y = 0, w = 0, h = 0;
};

struct ItaMeasurement {
  double ita_degrees = 0.0;
  int treatment = 0;  // 1 iff ita < 28
  size_t pixel_count = 0;
  double L_med = 0.0, b_med = 0.0;
};

ItaMeasurement ita_degrees(const std::vector<LabPixel>& px, bool use_mean = false);
double ita_from(double L, double b);

struct SkinRegion {
  BBox face;
  long x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // extended, half-open, clipped
  size_t width = 0, height = 0;         // image dims
  std::vector<uint8_t> mask;            // binary, per image pixel
  std::vector<double> weight;           // feather weights in [0,1]

  long ext_width() const { return x1 - x0; }
  long ext_height() const { return y1 - y0; }
  double w(size_t x, size_t y) const { return weight[y * width + x]; }
};

struct ExtendOptions {
  double widen = 0.20;
  double extend_down = 0.50;
  int kernel = 31;
  double sigma = 15.0;
};

SkinRegion extend_region(const BBox& bbox, size_t width, size_t height,
                         const ExtendOptions& opt = {});
// separable Gaussian blur with mirror (reflect-101) borders
std::vector<double> gaussian_blur(const std::vector<double>& img, size_t w, size_t h, int ksize,
                                  double sigma);

std::vector<LabPixel> region_lab(const RgbImage& img, const SkinRegion& r);
std::vector<LabPixel> bbox_lab(const RgbImage& img, const BBox& b);

enum class ToneTarget { lighter, darker };

struct ShiftOptions {
  double b_scale_lighter = 0.9;
  double b_scale_darker = 1.1;
  std::vector<double> scales{1.0, 1.5, 2.0, 2.5, 3.0};
  double base_gain = 1.2;
  bool use_mean = false;
};

struct ShiftResult {
  RgbImage image;
  ItaMeasurement before, after;
  double scale_used = 0.0;
};

class UncrossableError : public NumericalError {
public:
  UncrossableError(const std::string& m, double before, double after)
      : NumericalError(m), ita_before(before), ita_after(after) {}
  double ita_before, ita_after;
};

ShiftResult shift_skin_tone(const RgbImage& img, const SkinRegion& region, ToneTarget target,
                            const ShiftOptions& opt = {});

struct ManifestRow {
  std::string path;
  BBox bbox;
};

struct PairRow {
  std::string path;
  BBox bbox;
  double ita_before = 0.0, ita_after = 0.0;
  int treatment = 0;
  std::string cf_path;
  double scale_used = 0.0;
  std::string status;  // "ok" or "failed: reason"
};

std::vector<ManifestRow> read_manifest(const std::string& path);
// writes counterfactual PNGs into out_dir; failures are recorded, not thrown
std::vector<PairRow> generate_pairs(const std::vector<ManifestRow>& manifest,
                                    const std::string& out_dir, const ShiftOptions& opt = {},
                                    const ExtendOptions& ext = {});
std::string pairs_csv(const std::vector<PairRow>& rows);

RgbImage read_png(const std::string& path);
void write_png(const std::string& path, const RgbImage& img);

}  // namespace dice
