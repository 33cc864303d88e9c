#include "advcloak/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "advcloak/errors.hpp"

namespace advcloak {

Image read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw MissingArtifact("cannot read PNG " + path.string() + ": " + img.message);
  }
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error("PNG decode failed for " + path.string() + ": " + img.message);
  }
  Image out(static_cast<int>(img.height), static_cast<int>(img.width), channels);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = buf[i] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw InvalidArgument("write_png: only gray or RGB images");
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buf(image.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    buf[i] = static_cast<png_byte>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
  }
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw std::runtime_error("PNG encode failed for " + path.string() + ": " + img.message);
  }
}

}  // namespace advcloak
