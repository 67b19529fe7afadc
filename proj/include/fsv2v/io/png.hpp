#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fsv2v/nn/tensor.hpp"

namespace fsv2v::io {

// 8-bit RGB. Values are clamped to [0,1] and rounded to k/255; reading returns
// exactly float(k)/255.0f, so quantized images round-trip bit-for-bit.
void write_png_rgb(const std::filesystem::path& path, const nn::Tensor<float>& image);
nn::Tensor<float> read_png_rgb(const std::filesystem::path& path);

// 8-bit single channel, stored verbatim.
void write_png_gray(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, int height,
                    int width);
std::vector<std::uint8_t> read_png_gray(const std::filesystem::path& path, int& height, int& width);

inline float from_byte(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }
std::uint8_t to_byte(float v);

}  // namespace fsv2v::io
