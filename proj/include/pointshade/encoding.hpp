// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "pointshade/tensor.hpp"

namespace pointshade {

inline constexpr int kFourierFrequencyCount = 10;
inline constexpr int kEncodingChannels = 4 * kFourierFrequencyCount;
inline constexpr float kMaxFrequency = 10.0f;

struct FourierEncoding {
  std::vector<float> frequencies;
  std::uint64_t seed = 0;

  bool operator==(const FourierEncoding&) const = default;
};

/// Draws kFourierFrequencyCount frequencies uniformly from [0, 10).
inline FourierEncoding sample_frequencies(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, double(kMaxFrequency));
  FourierEncoding enc;
  enc.seed = seed;
  enc.frequencies.resize(kFourierFrequencyCount);
  for (float& w : enc.frequencies) {
    w = float(dist(rng));
    if (w >= kMaxFrequency) w = std::nextafter(kMaxFrequency, 0.0f);
  }
  return enc;
}

/// Per-pixel features [sin(w u)], [sin(w v)], [cos(w u)], [cos(w v)] as a
/// [4F, height, width] tensor, with u = x / (width - 1) and v = y / (height - 1).
template <typename T>
Tensor<T> encode(int width, int height, const FourierEncoding& enc) {
  if (width < 1 || height < 1) throw std::invalid_argument("encode: size must be positive");
  const std::size_t F = enc.frequencies.size();
  const std::size_t W = std::size_t(width), H = std::size_t(height);
  Tensor<T> out({4 * F, H, W});
  for (std::size_t j = 0; j < F; ++j) {
    const double w = enc.frequencies[j];
    for (std::size_t y = 0; y < H; ++y) {
      const double v = H > 1 ? double(y) / double(H - 1) : 0.0;
      for (std::size_t x = 0; x < W; ++x) {
        const double u = W > 1 ? double(x) / double(W - 1) : 0.0;
        const std::size_t px = y * W + x;
        out[(0 * F + j) * H * W + px] = T(std::sin(w * u));
        out[(1 * F + j) * H * W + px] = T(std::sin(w * v));
        out[(2 * F + j) * H * W + px] = T(std::cos(w * u));
        out[(3 * F + j) * H * W + px] = T(std::cos(w * v));
      }
    }
  }
  return out;
}

}  // namespace pointshade
