#include <cmath>
#include <filesystem>

#include "dice/color.hpp"
#include "dice/errors.hpp"
#include "dice/io.hpp"
#include "dice/skintone.hpp"
#include "doctest.h"

using namespace dice;
namespace fs = std::filesystem;

namespace {

// flat patch whose 8-bit colour sits near the requested ITA
RgbImage flat_patch(double ita, size_t w = 48, size_t h = 48, double b = 18.0, double a = 12.0) {
  double L = 50.0 + b * std::tan(ita * M_PI / 180.0);
  return RgbImage(w, h, lab_to_srgb({L, a, b}));
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("sRGB to Lab anchors and reference values") {
  auto w = srgb_to_lab({255, 255, 255});
  CHECK(std::fabs(w.L - 100.0) <= 0.01);
  CHECK(std::fabs(w.a) <= 0.05);
  CHECK(std::fabs(w.b) <= 0.05);
  auto k = srgb_to_lab({0, 0, 0});
  CHECK(k.L == 0.0);
  CHECK(k.a == 0.0);
  CHECK(k.b == 0.0);
  struct Ref {
    Rgb8 c;
    double L, a, b;
  };
  // independent colorimetry implementation, D65
  const Ref refs[] = {{{119, 66, 39}, 33.911725, 20.297615, 26.095110},
                      {{200, 150, 120}, 66.097848, 14.849815, 23.132817},
                      {{30, 200, 90}, 71.091139, -63.664824, 43.261100}};
  for (const auto& r : refs) {
    auto p = srgb_to_lab(r.c);
    CHECK(p.L == doctest::Approx(r.L).epsilon(1e-4));
    CHECK(p.a == doctest::Approx(r.a).epsilon(2e-4));
    CHECK(p.b == doctest::Approx(r.b).epsilon(2e-4));
  }
}

TEST_CASE("property: Lab round trip and gray-axis monotonicity") {
  double prev = -1.0;
  for (int v = 0; v < 256; ++v) {
    uint8_t u = static_cast<uint8_t>(v);
    double L = srgb_to_lab({u, u, u}).L;
    CHECK(L > prev);
    prev = L;
  }
  for (int r = 0; r < 256; r += 5)
    for (int g = 0; g < 256; g += 7)
      for (int b = 0; b < 256; b += 11) {
        Rgb8 c{uint8_t(r), uint8_t(g), uint8_t(b)};
        Rgb8 back = lab_to_srgb(srgb_to_lab(c));
        CHECK(back.r == c.r);
        CHECK(back.g == c.g);
        CHECK(back.b == c.b);
      }
}

TEST_CASE("ITA analytic cases and conventions") {
  CHECK(std::fabs(ita_from(50, 10) - 0.0) < 1e-9);
  CHECK(std::fabs(ita_from(70, 20) - 45.0) < 1e-9);
  CHECK(ita_from(60, 17) == doctest::Approx(30.46554491945988).epsilon(1e-12));
  CHECK(ita_from(60, 0) == 90.0);
  CHECK(ita_from(40, 0) == -90.0);
  CHECK(ita_from(50, 0) == 0.0);
  auto m = ita_degrees({{60, 5, 17}, {60, -3, 17}, {60, 40, 17}});
  CHECK(m.ita_degrees == doctest::Approx(30.46554491945988));
  CHECK(m.treatment == 0);
  CHECK(m.pixel_count == 3);
  CHECK(ita_degrees({{52, 0, 20}}).treatment == 1);
  // median over pixels
  auto med = ita_degrees({{50, 0, 10}, {70, 0, 20}, {90, 0, 30}});
  CHECK(med.L_med == 70.0);
  CHECK(med.b_med == 20.0);
  auto mean = ita_degrees({{50, 0, 10}, {70, 0, 20}, {96, 0, 30}}, true);
  CHECK(mean.L_med == doctest::Approx(72.0));
  CHECK_THROWS_AS(ita_degrees({}), DegenerateInput);
}

TEST_CASE("property: ITA ignores a*") {
  for (int i = 0; i < 100; ++i) {
    double L = 20 + 0.7 * i, b = -10 + 0.4 * i;
    std::vector<LabPixel> p{{L, 0, b}}, q{{L, -50.0 + i, b}};
    CHECK(ita_degrees(p).ita_degrees == ita_degrees(q).ita_degrees);
  }
}

TEST_CASE("extend_region geometry and feathering") {
  auto r = extend_region({80, 60, 40, 40}, 200, 200);
  CHECK(r.ext_width() == 48);
  CHECK(r.ext_height() == 60);
  CHECK(r.x0 == 76);
  CHECK(r.y0 == 60);
  CHECK(r.w((r.x0 + r.x1) / 2, (r.y0 + r.y1) / 2) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(r.w(0, 0) == 0.0);
  CHECK(r.w(199, 199) == 0.0);
  for (size_t y = 0; y < 200; ++y)
    for (size_t x = 0; x < 200; ++x) {
      CHECK_UNARY(r.w(x, y) >= 0.0);
      CHECK_UNARY(r.w(x, y) <= 1.0);
    }

  auto b = extend_region({10, 30, 20, 20}, 40, 50);
  CHECK(b.y1 == 50);
  CHECK(b.x0 == 8);
  CHECK(b.x1 == 32);
  CHECK(b.ext_height() == 20);
  CHECK_THROWS_AS(extend_region({30, 0, 20, 10}, 40, 50), DataError);
  CHECK_THROWS_AS(extend_region({0, 0, 0, 10}, 40, 50), DataError);
}

TEST_CASE("gaussian blur preserves constants and mirrors borders") {
  std::vector<double> ones(12 * 9, 1.0);
  for (double v : gaussian_blur(ones, 12, 9, 31, 15)) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> imp(21 * 21, 0.0);
  imp[10 * 21 + 10] = 1.0;
  auto b = gaussian_blur(imp, 21, 21, 5, 1.0);
  CHECK(b[10 * 21 + 9] == doctest::Approx(b[10 * 21 + 11]));
  CHECK(b[9 * 21 + 10] == doctest::Approx(b[10 * 21 + 9]));
  CHECK(b[10 * 21 + 13] == 0.0);
  CHECK_THROWS_AS(gaussian_blur(imp, 21, 21, 4, 1.0), ConfigError);
}

TEST_CASE("shift crosses the threshold on flat patches") {
  int total = 0, ok = 0;
  for (double ita = 10.0; ita <= 60.0; ita += 1.0) {
    auto img = flat_patch(ita);
    auto reg = extend_region({12, 8, 24, 24}, img.width, img.height);
    auto before = ita_degrees(region_lab(img, reg));
    auto target = before.treatment == 1 ? ToneTarget::lighter : ToneTarget::darker;
    ++total;
    try {
      auto s = shift_skin_tone(img, reg, target);
      CHECK(s.after.treatment != s.before.treatment);
      CHECK(s.scale_used <= 3.0);
      ++ok;
    } catch (const UncrossableError&) {
    }
  }
  CHECK(ok == total);
}

TEST_CASE("shift validation and untouched pixels") {
  auto img = flat_patch(40.0, 120, 120);
  auto reg = extend_region({50, 20, 20, 20}, 120, 120);
  CHECK_THROWS_AS(shift_skin_tone(img, reg, ToneTarget::lighter), DataError);
  auto s = shift_skin_tone(img, reg, ToneTarget::darker);
  CHECK(s.after.ita_degrees < 28.0);
  size_t changed = 0;
  for (size_t y = 0; y < 120; ++y)
    for (size_t x = 0; x < 120; ++x) {
      auto a = img.at(x, y), b = s.image.at(x, y);
      bool same = a.r == b.r && a.g == b.g && a.b == b.b;
      if (reg.w(x, y) == 0.0) CHECK(same);
      changed += !same;
    }
  CHECK(changed > 0);
  auto dark = flat_patch(15.0, 120, 120);
  CHECK_THROWS_AS(shift_skin_tone(dark, reg, ToneTarget::darker), DataError);
}

TEST_CASE("shift raises when the ladder is exhausted") {
  ShiftOptions o;
  o.scales = {0.01};
  o.base_gain = 0.01;
  auto img = flat_patch(45.0);
  auto reg = extend_region({12, 8, 24, 24}, 48, 48);
  CHECK_THROWS_AS(shift_skin_tone(img, reg, ToneTarget::darker, o), UncrossableError);
}

TEST_CASE("png round trip") {
  auto d = temp_dir("dice_png_test");
  RgbImage img(7, 5);
  for (size_t y = 0; y < 5; ++y)
    for (size_t x = 0; x < 7; ++x) img.set(x, y, {uint8_t(x * 30), uint8_t(y * 50), uint8_t(x + y)});
  write_png((d / "a.png").string(), img);
  auto back = read_png((d / "a.png").string());
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.pixels == img.pixels);
  write_file_atomic((d / "junk.png").string(), "not a png");
  CHECK_THROWS_AS(read_png((d / "junk.png").string()), DataError);
  fs::remove_all(d);
}

TEST_CASE("generate_pairs isolates failures") {
  auto d = temp_dir("dice_pairs_test");
  write_png((d / "light.png").string(), flat_patch(45.0));
  write_png((d / "dark.png").string(), flat_patch(15.0));
  write_png((d / "mid.png").string(), flat_patch(33.0));
  write_file_atomic((d / "manifest.csv").string(),
                    "path,bbox_x,bbox_y,bbox_w,bbox_h\n"
                    "light.png,12,8,24,24\ndark.png,12,8,24,24\nmid.png,12,8,24,24\n");
  auto m = read_manifest((d / "manifest.csv").string());
  REQUIRE(m.size() == 3);
  auto rows = generate_pairs(m, (d / "out").string());
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.status == "ok");
    CHECK(fs::exists(r.cf_path));
    int after = r.ita_after < 28.0 ? 1 : 0;
    CHECK(after == 1 - r.treatment);
    auto cf = read_png(r.cf_path);
    auto reg = extend_region(r.bbox, cf.width, cf.height);
    CHECK(ita_degrees(region_lab(cf, reg)).treatment == after);
  }
  CHECK(rows[0].treatment == 0);
  CHECK(rows[1].treatment == 1);
  CHECK(generate_pairs({}, (d / "none").string()).empty());

  auto bad = m;
  bad[1].path = (d / "missing.png").string();
  auto mixed = generate_pairs(bad, (d / "out2").string());
  int okc = 0, failed = 0;
  for (const auto& r : mixed) (r.status == "ok" ? okc : failed)++;
  CHECK(okc == 2);
  CHECK(failed == 1);
  CHECK(mixed[1].status.rfind("failed:", 0) == 0);
  auto csv = pairs_csv(mixed);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  write_file_atomic((d / "bad.csv").string(), "path,bbox_x\nx.png,1\n");
  CHECK_THROWS_AS(read_manifest((d / "bad.csv").string()), DataError);
  fs::remove_all(d);
}
