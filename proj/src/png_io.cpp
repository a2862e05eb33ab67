#include <png.h>

#include <cstring>
#include <filesystem>

#include "dice/skintone.hpp"

namespace dice {

RgbImage read_png(const std::string& path) {
  png_image im;
  std::memset(&im, 0, sizeof im);
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&im, path.c_str()))
    throw DataError("cannot read PNG " + path + ": " + im.message);
  im.format = PNG_FORMAT_RGB;
  if (im.width < 1 || im.height < 1) {
    png_image_free(&im);
    throw DataError("empty PNG " + path);
  }
  RgbImage img(im.width, im.height);
  if (!png_image_finish_read(&im, nullptr, img.pixels.data(), 0, nullptr)) {
    std::string msg = im.message;
    png_image_free(&im);
    throw DataError("cannot decode PNG " + path + ": " + msg);
  }
  return img;
}

void write_png(const std::string& path, const RgbImage& img) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  png_image im;
  std::memset(&im, 0, sizeof im);
  im.version = PNG_IMAGE_VERSION;
  im.width = static_cast<png_uint_32>(img.width);
  im.height = static_cast<png_uint_32>(img.height);
  im.format = PNG_FORMAT_RGB;
  std::string tmp = path + ".tmp";
  if (!png_image_write_to_file(&im, tmp.c_str(), 0, img.pixels.data(), 0, nullptr))
    throw DataError("cannot write PNG " + path + ": " + im.message);
  std::filesystem::rename(tmp, path);
}

}  // namespace dice
