#include "prepguard/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace prepguard {

void write_png(const std::string& path, const ImageTensor& img) {
  if (img.channels != 1 && img.channels != 3)
    throw RejectedInput("PNG writer needs 1 or 3 channels");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;

  std::vector<unsigned char> bytes(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(clamp01(img.data[i]) * 255.0));

  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw std::runtime_error("PNG write failed for " + path + ": " + png.message);
}

ImageTensor read_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw std::runtime_error("PNG read failed for " + path + ": " + png.message);

  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;

  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw std::runtime_error("PNG decode failed for " + path + ": " + msg);
  }

  ImageTensor img(static_cast<int>(png.height), static_cast<int>(png.width), channels);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<double>(bytes[i]) / 255.0;
  return img;
}

}  // namespace prepguard
