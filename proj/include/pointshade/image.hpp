// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pointshade/tensor.hpp"

namespace pointshade {

/// Interleaved RGBA image with float channels in [0, 1].
struct RgbaImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // 4 * width * height

  RgbaImage() = default;
  RgbaImage(int w, int h) : width(w), height(h), pixels(std::size_t(4) * w * h, 0.0f) {}

  float& at(int x, int y, int c) { return pixels[(std::size_t(y) * width + x) * 4 + c]; }
  float at(int x, int y, int c) const { return pixels[(std::size_t(y) * width + x) * 4 + c]; }

  bool operator==(const RgbaImage&) const = default;
};

/// Planar [4,H,W] (or [1,4,H,W]) tensor to an interleaved image.
template <typename T>
RgbaImage to_image(const Tensor<T>& planar) {
  const Shape& s = planar.shape();
  const std::size_t off = s.size() == 4 ? 1 : 0;
  if (!(s.size() == 3 || (s.size() == 4 && s[0] == 1)) || s[off] != 4) {
    throw std::invalid_argument("to_image: expected [4,H,W], got " + shape_string(s));
  }
  const int H = int(s[off + 1]), W = int(s[off + 2]);
  RgbaImage img(W, H);
  const std::size_t plane = std::size_t(H) * W;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < plane; ++i) img.pixels[i * 4 + c] = float(planar[c * plane + i]);
  return img;
}

template <typename T>
Tensor<T> to_planar(const RgbaImage& img) {
  const std::size_t plane = std::size_t(img.height) * img.width;
  Tensor<T> out({4, std::size_t(img.height), std::size_t(img.width)});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = T(img.pixels[i * 4 + c]);
  return out;
}

}  // namespace pointshade
