#include "dice/skintone.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "dice/io.hpp"
#include "dice/stats.hpp"

namespace dice {

RgbImage::RgbImage(size_t w, size_t h, Rgb8 fill) : width(w), height(h), pixels(w * h * 3) {
  if (w < 1 || h < 1) throw DataError("image dimensions must be >= 1");
  for (size_t k = 0; k < w * h; ++k) {
    pixels[3 * k] = fill.r;
    pixels[3 * k + 1] = fill.g;
    pixels[3 * k + 2] = fill.b;
  }
}

Rgb8 RgbImage::at(size_t x, size_t y) const {
  const uint8_t* p = &pixels[3 * (y * width + x)];
  return {p[0], p[1], p[2]};
}

void RgbImage::set(size_t x, size_t y, Rgb8 c) {
  uint8_t* p = &pixels[3 * (y * width + x)];
  p[0] = c.r;
  p[1] = c.g;
  p[2] = c.b;
}

double ita_from(double L, double b) { return std::atan2(L - 50.0, b) * 180.0 / std::numbers::pi; }

ItaMeasurement ita_degrees(const std::vector<LabPixel>& px, bool use_mean) {
  if (px.empty()) throw DegenerateInput("ita: empty region");
  std::vector<double> L, b;
  L.reserve(px.size());
  b.reserve(px.size());
  for (const auto& p : px) {
    L.push_back(p.L);
    b.push_back(p.b);
  }
  ItaMeasurement m;
  m.L_med = use_mean ? mean(L) : median(L);
  m.b_med = use_mean ? mean(b) : median(b);
  m.ita_degrees = ita_from(m.L_med, m.b_med);
  m.treatment = m.ita_degrees < kItaThreshold ? 1 : 0;
  m.pixel_count = px.size();
  return m;
}

namespace {

long reflect101(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

std::vector<double> gaussian_blur(const std::vector<double>& img, size_t w, size_t h, int ksize,
                                  double sigma) {
  if (ksize < 1 || ksize % 2 == 0) throw ConfigError("gaussian_blur: kernel size must be odd");
  const int r = ksize / 2;
  std::vector<double> k(ksize);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    s += k[i + r];
  }
  for (auto& v : k) v /= s;
  std::vector<double> tmp(w * h), out(w * h);
  const long W = static_cast<long>(w), H = static_cast<long>(h);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * img[y * W + reflect101(x + i, W)];
      tmp[y * W + x] = acc;
    }
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[reflect101(y + i, H) * W + x];
      out[y * W + x] = std::clamp(acc, 0.0, 1.0);
    }
  return out;
}

SkinRegion extend_region(const BBox& b, size_t width, size_t height, const ExtendOptions& opt) {
  const long W = static_cast<long>(width), H = static_cast<long>(height);
  if (b.w < 1 || b.h < 1 || b.x < 0 || b.y < 0 || b.x + b.w > W || b.y + b.h > H)
    throw DataError("bbox (" + std::to_string(b.x) + "," + std::to_string(b.y) + "," +
                    std::to_string(b.w) + "," + std::to_string(b.h) + ") lies outside the " +
                    std::to_string(W) + "x" + std::to_string(H) + " image");
  SkinRegion r;
  r.face = b;
  r.width = width;
  r.height = height;
  const long side = std::lround(0.5 * opt.widen * static_cast<double>(b.w));
  const long down = std::lround(opt.extend_down * static_cast<double>(b.h));
  r.x0 = std::max(0L, b.x - side);
  r.x1 = std::min(W, b.x + b.w + side);
  r.y0 = b.y;
  r.y1 = std::min(H, b.y + b.h + down);
  r.mask.assign(width * height, 0);
  std::vector<double> m(width * height, 0.0);
  for (long y = r.y0; y < r.y1; ++y)
    for (long x = r.x0; x < r.x1; ++x) {
      r.mask[y * W + x] = 1;
      m[y * W + x] = 1.0;
    }
  r.weight = gaussian_blur(m, width, height, opt.kernel, opt.sigma);
  return r;
}

std::vector<LabPixel> region_lab(const RgbImage& img, const SkinRegion& r) {
  if (img.width != r.width || img.height != r.height)
    throw DataError("region does not match image dimensions");
  std::vector<LabPixel> out;
  for (long y = r.y0; y < r.y1; ++y)
    for (long x = r.x0; x < r.x1; ++x) out.push_back(srgb_to_lab(img.at(x, y)));
  return out;
}

std::vector<LabPixel> bbox_lab(const RgbImage& img, const BBox& b) {
  const long W = static_cast<long>(img.width), H = static_cast<long>(img.height);
  if (b.w < 1 || b.h < 1 || b.x < 0 || b.y < 0 || b.x + b.w > W || b.y + b.h > H)
    throw DataError("bbox lies outside the image");
  std::vector<LabPixel> out;
  for (long y = b.y; y < b.y + b.h; ++y)
    for (long x = b.x; x < b.x + b.w; ++x) out.push_back(srgb_to_lab(img.at(x, y)));
  return out;
}

ShiftResult shift_skin_tone(const RgbImage& img, const SkinRegion& region, ToneTarget target,
                            const ShiftOptions& opt) {
  ShiftResult res;
  res.before = ita_degrees(region_lab(img, region), opt.use_mean);
  const bool lighter = target == ToneTarget::lighter;
  if (lighter && res.before.treatment == 0)
    throw DataError("validation: region ITA " + std::to_string(res.before.ita_degrees) +
                    " is already at or above the threshold; cannot lighten across it");
  if (!lighter && res.before.treatment == 1)
    throw DataError("validation: region ITA " + std::to_string(res.before.ita_degrees) +
                    " is already below the threshold; cannot darken across it");

  const double L = res.before.L_med, b = res.before.b_med;
  const double slope = (180.0 / std::numbers::pi) * b / ((L - 50.0) * (L - 50.0) + b * b);
  const double sgn = lighter ? 1.0 : -1.0;
  double dL = std::fabs(slope) > 1e-6 ? opt.base_gain * (kItaThreshold - res.before.ita_degrees) / slope
                                      : sgn * 10.0;
  dL = sgn * std::max(0.5, std::fabs(dL));
  const double bf = lighter ? opt.b_scale_lighter : opt.b_scale_darker;

  // pixels with nonzero feather weight
  std::vector<size_t> support;
  for (size_t k = 0; k < region.weight.size(); ++k)
    if (region.weight[k] > 0.0) support.push_back(k);

  ItaMeasurement last = res.before;
  for (double s : opt.scales) {
    RgbImage out = img;
    for (size_t k : support) {
      const size_t x = k % img.width, y = k / img.width;
      const Rgb8 o = img.at(x, y);
      LabPixel p = srgb_to_lab(o);
      p.L = std::clamp(p.L + s * dL, 0.0, 100.0);
      p.b *= bf;
      const Rgb8 n = lab_to_srgb(p);
      const double w = region.weight[k];
      auto mix = [w](uint8_t a, uint8_t c) {
        return static_cast<uint8_t>(std::lround(w * c + (1.0 - w) * a));
      };
      out.set(x, y, {mix(o.r, n.r), mix(o.g, n.g), mix(o.b, n.b)});
    }
    last = ita_degrees(region_lab(out, region), opt.use_mean);
    if (last.treatment != res.before.treatment) {
      res.image = std::move(out);
      res.after = last;
      res.scale_used = s;
      return res;
    }
  }
  throw UncrossableError("threshold not crossed at scale " + std::to_string(opt.scales.back()) +
                             " (ITA before " + std::to_string(res.before.ita_degrees) + ", after " +
                             std::to_string(last.ita_degrees) + ")",
                         res.before.ita_degrees, last.ita_degrees);
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  CsvTable t = read_csv_table(path);
  const char* need[] = {"path", "bbox_x", "bbox_y", "bbox_w", "bbox_h"};
  int col[5];
  for (int k = 0; k < 5; ++k) {
    col[k] = t.column(need[k]);
    if (col[k] < 0) throw DataError(path + ": manifest is missing column '" + need[k] + "'");
  }
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestRow> rows;
  for (size_t i = 0; i < t.rows.size(); ++i) {
    ManifestRow r;
    std::filesystem::path p(t.rows[i][col[0]]);
    r.path = p.is_relative() ? (base / p).string() : p.string();
    long* dst[4] = {&r.bbox.x, &r.bbox.y, &r.bbox.w, &r.bbox.h};
    for (int k = 0; k < 4; ++k) {
      const std::string& f = t.rows[i][col[k + 1]];
      try {
        size_t used = 0;
        *dst[k] = std::stol(f, &used);
        if (used != f.size()) throw std::invalid_argument(f);
      } catch (const std::exception&) {
        throw DataError(path + ": row " + std::to_string(i + 1) + ": bad integer '" + f + "' in " +
                        need[k + 1]);
      }
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<PairRow> generate_pairs(const std::vector<ManifestRow>& manifest,
                                    const std::string& out_dir, const ShiftOptions& opt,
                                    const ExtendOptions& ext) {
  std::vector<PairRow> rows;
  for (size_t i = 0; i < manifest.size(); ++i) {
    const auto& m = manifest[i];
    PairRow r;
    r.path = m.path;
    r.bbox = m.bbox;
    try {
      RgbImage img = read_png(m.path);
      SkinRegion reg = extend_region(m.bbox, img.width, img.height, ext);
      ItaMeasurement before = ita_degrees(region_lab(img, reg), opt.use_mean);
      ToneTarget target = before.treatment == 1 ? ToneTarget::lighter : ToneTarget::darker;
      ShiftResult s = shift_skin_tone(img, reg, target, opt);
      std::string stem = std::filesystem::path(m.path).stem().string();
      r.cf_path = (std::filesystem::path(out_dir) / (std::to_string(i) + "_" + stem + "_cf.png")).string();
      write_png(r.cf_path, s.image);
      r.ita_before = s.before.ita_degrees;
      r.ita_after = s.after.ita_degrees;
      r.treatment = s.before.treatment;
      r.scale_used = s.scale_used;
      r.status = "ok";
    } catch (const std::exception& e) {
      r.cf_path.clear();
      r.ita_before = r.ita_after = std::nan("");
      r.status = std::string("failed: ") + e.what();
    }
    rows.push_back(r);
  }
  return rows;
}

std::string pairs_csv(const std::vector<PairRow>& rows) {
  auto esc = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string o = "\"";
    for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
    return o + "\"";
  };
  auto num = [](double v) {
    if (!std::isfinite(v)) return std::string("nan");
    char b[32];
    std::snprintf(b, sizeof b, "%.6f", v);
    return std::string(b);
  };
  std::string s = "path,bbox_x,bbox_y,bbox_w,bbox_h,ita_before,ita_after,treatment,cf_path,scale_used,status\n";
  for (const auto& r : rows) {
    bool ok = r.status == "ok";
    s += esc(r.path) + "," + std::to_string(r.bbox.x) + "," + std::to_string(r.bbox.y) + "," +
         std::to_string(r.bbox.w) + "," + std::to_string(r.bbox.h) + "," + num(r.ita_before) + "," +
         num(r.ita_after) + "," + (ok ? std::to_string(r.treatment) : std::string("")) + "," +
         esc(r.cf_path) + "," + (ok ? num(r.scale_used) : std::string("")) + "," + esc(r.status) + "\n";
  }
  return s;
}

}  // namespace dice
