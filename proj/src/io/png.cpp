#include "fsv2v/io/png.hpp"

#include <png.h>

#include <cmath>

namespace fsv2v::io {

namespace {

std::vector<std::uint8_t> read_raw(const std::filesystem::path& path, png_uint_32 format, int& height, int& width) {
  if (!std::filesystem::exists(path)) throw IoError("missing file " + path.string());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("corrupt PNG " + path.string() + ": " + image.message);
  }
  height = static_cast<int>(image.height);
  width = static_cast<int>(image.width);
  return buffer;
}

void write_raw(const std::filesystem::path& path, png_uint_32 format, const std::uint8_t* pixels, int height,
               int width) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels, 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + image.message);
  }
}

}  // namespace

std::uint8_t to_byte(float v) {
  const float c = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void write_png_rgb(const std::filesystem::path& path, const nn::Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("write_png_rgb expects [3,H,W], got " + nn::to_string(image.shape()));
  }
  const int h = image.dim(1), w = image.dim(2);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) px[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image.at(c, y, x));
  write_raw(path, PNG_FORMAT_RGB, px.data(), h, w);
}

nn::Tensor<float> read_png_rgb(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto px = read_raw(path, PNG_FORMAT_RGB, h, w);
  nn::Tensor<float> out({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = from_byte(px[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
  return out;
}

void write_png_gray(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, int height,
                    int width) {
  if (pixels.size() != static_cast<std::size_t>(height) * width) {
    throw DimensionError("write_png_gray: buffer does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  write_raw(path, PNG_FORMAT_GRAY, pixels.data(), height, width);
}

std::vector<std::uint8_t> read_png_gray(const std::filesystem::path& path, int& height, int& width) {
  return read_raw(path, PNG_FORMAT_GRAY, height, width);
}

}  // namespace fsv2v::io
