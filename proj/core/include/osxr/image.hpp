#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "osxr/tensor.hpp"

namespace osxr {

/// 8-bit grayscale image, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  bool empty() const noexcept { return width == 0 || height == 0; }
  bool operator==(const Image&) const = default;
};

/// Decodes binary PGM ("P5", maxval 255). Header comments are accepted.
/// Throws FormatError with the byte offset of the first offending byte.
Image decode_pgm(std::span<const std::uint8_t> bytes);

/// Canonical P5 encoding: "P5\n<w> <h>\n255\n" followed by the raw pixels.
std::vector<std::uint8_t> encode_pgm(const Image& image);

Image read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image& image);

/// Bilinear resample (half-pixel centres, edge clamped) of a row-major plane.
std::vector<float> resize_bilinear(std::span<const float> src, std::size_t src_h, std::size_t src_w,
                                   std::size_t dst_h, std::size_t dst_w);

/// Resamples to height x width and scales to [0,1]; returns [1,1,height,width].
Tensor normalize_resize(const Image& image, std::size_t height, std::size_t width);

/// Inverse of the scaling: values clamped to [0,1], then round(v * 255).
Image image_from_unit(std::span<const float> values, std::size_t height, std::size_t width);

/// Concatenates [1,C,H,W] tensors along the batch axis. Not differentiable.
Tensor stack_batch(std::span<const Tensor> items);

/// Row `index` of a batch as a [1, ...] tensor. Not differentiable.
Tensor batch_item(const Tensor& batch, std::size_t index);

}  // namespace osxr
