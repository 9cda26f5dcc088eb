// SPDX-License-Identifier: Apache-2.0
#pragma once

// Settings-conditioned U-Net: a mapping MLP lifts the settings vector to a style
// vector that drives an AdaIN layer after every convolution.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pointshade/encoding.hpp"
#include "pointshade/ops.hpp"
#include "pointshade/projection.hpp"

namespace pointshade {

struct LightPosition {
  double azimuth = 0.0;    // radians, around world up, 0 = toward the camera
  double elevation = 0.0;  // radians above the horizontal plane
  double radius = 3.0;     // distance from the look-at target

  bool operator==(const LightPosition&) const = default;
};

struct Material {
  double metallic = 0.0;
  double roughness = 1.0;

  bool operator==(const Material&) const = default;
};

struct Settings {
  std::array<double, 3> color{0.8, 0.8, 0.8};
  LightPosition light;
  std::optional<Material> material;

  std::size_t length() const { return material ? 8 : 6; }

  template <typename T>
  std::vector<T> flatten() const {
    std::vector<T> v{T(color[0]), T(color[1]), T(color[2]),
                     T(light.azimuth), T(light.elevation), T(light.radius)};
    if (material) {
      v.push_back(T(material->metallic));
      v.push_back(T(material->roughness));
    }
    return v;
  }

  bool operator==(const Settings&) const = default;
};

/// Spatial input size incompatible with the network depth.
class InputSizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class SettingsMode : std::uint32_t { kAdaIn = 0, kFeatureAppend = 1 };

struct UNetConfig {
  int levels = 4;  // number of stride-2 downsamplings
  int base_channels = 64;
  int max_channels = 512;
  int output_channels = 4;
  SettingsMode settings_mode = SettingsMode::kAdaIn;
  bool encoding_enabled = true;
  bool material_control = false;
  int style_dim = 512;
  int mapping_hidden_layers = 3;
  float adain_eps = 1e-5f;
  float leaky_slope = 0.2f;
  std::uint64_t init_seed = 0;

  int settings_length() const { return material_control ? 8 : 6; }

  int input_channels() const {
    return 1 + (encoding_enabled ? kEncodingChannels : 0) +
           (settings_mode == SettingsMode::kFeatureAppend ? settings_length() : 0);
  }

  int channels(int level) const {
    long c = long(base_channels) << level;
    return int(std::min<long>(c, max_channels));
  }

  int size_multiple() const { return 1 << levels; }

  void validate() const {
    if (levels < 0 || levels > 8) throw std::invalid_argument("levels must be in [0, 8]");
    if (base_channels < 1 || max_channels < base_channels) {
      throw std::invalid_argument("invalid channel configuration");
    }
    if (output_channels != 4) throw std::invalid_argument("output_channels must be 4 (RGBA)");
    if (style_dim < 1 || mapping_hidden_layers < 0) {
      throw std::invalid_argument("invalid mapping network configuration");
    }
    if (!(adain_eps > 0.0f)) throw std::invalid_argument("adain epsilon must be positive");
  }

  bool operator==(const UNetConfig&) const = default;
};

/// Parameter indices of one AdaIN layer's two affine maps (style -> channels).
struct AdaInLayer {
  std::size_t gamma_weight = 0, gamma_bias = 0;
  std::size_t beta_weight = 0, beta_bias = 0;
  int channels = 0;
};

/// (x - mu) / (sigma + eps) * gamma + beta with gamma = A_gamma w, beta = A_beta w.
/// If `normalized` is set it receives the settings-independent normalized map.
template <typename T>
Var<T> adain(const Var<T>& x, const Var<T>& style, const Var<T>& gamma_weight,
             const Var<T>& gamma_bias, const Var<T>& beta_weight, const Var<T>& beta_bias,
             T eps, Tensor<T>* normalized = nullptr) {
  Var<T> n = instance_normalize(x, eps);
  if (normalized) *normalized = n.value();
  Var<T> gamma = linear(style, gamma_weight, gamma_bias);
  Var<T> beta = linear(style, beta_weight, beta_bias);
  return channel_scale_shift(n, gamma, beta);
}

/// Intermediate maps captured during a forward pass, one entry per normalization layer.
template <typename T>
struct ForwardTrace {
  std::vector<Tensor<T>> pre_norm;
  std::vector<Tensor<T>> normalized;
  Tensor<T> style;
};

template <typename T>
class Model {
 public:
  Model() = default;

  /// Fresh model with fan-in scaled random weights drawn from config.init_seed.
  Model(const UNetConfig& config, std::optional<FourierEncoding> encoding)
      : config_(config), encoding_(std::move(encoding)) {
    config_.validate();
    if (config_.encoding_enabled != encoding_.has_value()) {
      throw std::invalid_argument("Fourier encoding must be present iff encoding is enabled");
    }
    build();
  }

  /// Samples the encoding frequencies from `frequency_seed` when encoding is enabled.
  static Model create(const UNetConfig& config, std::uint64_t frequency_seed) {
    std::optional<FourierEncoding> enc;
    if (config.encoding_enabled) enc = sample_frequencies(frequency_seed);
    return Model(config, enc);
  }

  const UNetConfig& config() const { return config_; }
  const std::optional<FourierEncoding>& encoding() const { return encoding_; }
  std::span<Parameter<T>> parameters() { return params_; }
  std::span<const Parameter<T>> parameters() const { return params_; }
  const std::vector<AdaInLayer>& adain_layers() const { return adain_; }

  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }
  Parameter<T>* find(const std::string& name) {
    return const_cast<Parameter<T>*>(std::as_const(*this).find(name));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// Adds the gradients recorded on `tape` into each Parameter::grad.
  void accumulate_gradients(const Tape<T>& tape) {
    for (auto& p : params_)
      if (const Tensor<T>* g = tape.grad(p)) p.grad += *g;
  }

  void check_input_size(std::size_t height, std::size_t width) const {
    const std::size_t m = std::size_t(config_.size_multiple());
    if (height == 0 || width == 0 || height % m != 0 || width % m != 0) {
      throw InputSizeError("input size " + std::to_string(width) + "x" +
                                  std::to_string(height) + " is not divisible by " +
                                  std::to_string(m) + " (2^levels)");
    }
  }

  /// Settings [N, settings_length] -> style [N, style_dim].
  Var<T> map_settings(Tape<T>& tape, const Var<T>& settings) const {
    check_settings(settings.shape());
    const T slope = T(config_.leaky_slope);
    Var<T> h = settings;
    for (std::size_t i = 0; i < mapping_.size(); ++i) {
      h = linear(h, tape.parameter(params_[mapping_[i].first]),
                 tape.parameter(params_[mapping_[i].second]));
      if (i + 1 < mapping_.size()) h = leaky_relu(h, slope);
    }
    return h;
  }

  /// Single settings vector to its style vector.
  std::vector<T> style_vector(const Settings& s) const {
    Tape<T> tape(GradMode::kDisabled);
    Var<T> sv = tape.constant(Tensor<T>({1, s.length()}, s.flatten<T>()));
    const auto& w = map_settings(tape, sv).value();
    return std::vector<T>(w.data().begin(), w.data().end());
  }

  /// zbuffers [N,1,H,W], settings [N,L] -> RGBA [N,4,H,W] in [0,1].
  Var<T> forward(Tape<T>& tape, const Tensor<T>& zbuffers, const Tensor<T>& settings,
                 ForwardTrace<T>* trace = nullptr) const {
    const Shape& zs = zbuffers.shape();
    detail::require(zs.size() == 4 && zs[1] == 1,
                    "forward: z-buffers must be [N,1,H,W], got " + shape_string(zs));
    check_input_size(zs[2], zs[3]);
    check_settings(settings.shape());
    detail::require(settings.dim(0) == zs[0], "forward: batch size mismatch between inputs");
    const std::size_t N = zs[0], H = zs[2], W = zs[3];

    Var<T> x = tape.constant(zbuffers);
    if (config_.encoding_enabled) {
      const Tensor<T> enc = encode<T>(int(W), int(H), *encoding_);
      Tensor<T> batch({N, enc.dim(0), H, W});
      for (std::size_t n = 0; n < N; ++n)
        std::copy(enc.data().begin(), enc.data().end(), batch.data().begin() + n * enc.numel());
      x = concat_channels(x, tape.constant(std::move(batch)));
    }
    Var<T> s = tape.constant(settings);
    if (config_.settings_mode == SettingsMode::kFeatureAppend) {
      x = concat_channels(x, broadcast_planes(s, H, W));
    }
    Var<T> style;
    if (config_.settings_mode == SettingsMode::kAdaIn) {
      style = map_settings(tape, s);
      if (trace) trace->style = style.value();
    }

    std::size_t b = 0;
    std::vector<Var<T>> skips;
    x = block(tape, blocks_[b++], x, style, trace);
    x = block(tape, blocks_[b++], x, style, trace);
    skips.push_back(x);
    for (int l = 1; l <= config_.levels; ++l) {
      x = block(tape, blocks_[b++], x, style, trace);
      x = block(tape, blocks_[b++], x, style, trace);
      skips.push_back(x);
    }
    for (int l = config_.levels - 1; l >= 0; --l) {
      x = upsample2x(x);
      x = block(tape, blocks_[b++], x, style, trace);
      x = concat_channels(x, skips[std::size_t(l)]);
      x = block(tape, blocks_[b++], x, style, trace);
    }
    x = conv2d(x, tape.parameter(params_[out_weight_]), tape.parameter(params_[out_bias_]), 1, 0);
    return sigmoid(x);
  }

  /// Inference on one z-buffer; returns a [4,H,W] tensor.
  Tensor<T> infer(const ZBufferImage& z, const Settings& s) const {
    Tape<T> tape(GradMode::kDisabled);
    Tensor<T> zb({1, 1, std::size_t(z.height), std::size_t(z.width)},
                 std::vector<T>(z.intensities.begin(), z.intensities.end()));
    Tensor<T> st({1, s.length()}, s.flatten<T>());
    const Tensor<T>& out = forward(tape, zb, st).value();
    return out.reshaped({4, out.dim(2), out.dim(3)});
  }

  /// Pixel radius of the dependency window of one output pixel (conservative).
  int receptive_field_radius() const {
    int r = 2;  // two 3x3 convs at full resolution
    int jump = 1;
    for (int l = 1; l <= config_.levels; ++l) {
      r += jump;  // stride-2 conv
      jump *= 2;
      r += jump;
    }
    for (int l = config_.levels - 1; l >= 0; --l) {
      jump /= 2;
      r += jump;      // nearest-neighbor offset
      r += 2 * jump;  // two convs
    }
    return r;
  }

 private:
  struct ConvBlock {
    std::size_t weight = 0, bias = 0;
    int stride = 1;
    std::size_t norm = 0;  // index into adain_ or norm_affine_
  };

  void check_settings(const Shape& s) const {
    detail::require(s.size() == 2 && s[1] == std::size_t(config_.settings_length()),
                    "settings length mismatch: model expects " +
                        std::to_string(config_.settings_length()) + ", got shape " +
                        shape_string(s));
  }

  Var<T> block(Tape<T>& tape, const ConvBlock& cb, const Var<T>& x, const Var<T>& style,
               ForwardTrace<T>* trace) const {
    Var<T> y = conv2d(x, tape.parameter(params_[cb.weight]), tape.parameter(params_[cb.bias]),
                      cb.stride, 1);
    if (trace) trace->pre_norm.push_back(y.value());
    const T eps = T(config_.adain_eps);
    Tensor<T>* normalized = nullptr;
    if (trace) normalized = &trace->normalized.emplace_back();
    if (config_.settings_mode == SettingsMode::kAdaIn) {
      const AdaInLayer& a = adain_[cb.norm];
      y = adain(y, style, tape.parameter(params_[a.gamma_weight]),
                tape.parameter(params_[a.gamma_bias]), tape.parameter(params_[a.beta_weight]),
                tape.parameter(params_[a.beta_bias]), eps, normalized);
    } else {
      Var<T> n = instance_normalize(y, eps);
      if (normalized) *normalized = n.value();
      const auto& [scale_i, shift_i] = norm_affine_[cb.norm];
      const std::size_t N = y.shape()[0];
      y = channel_scale_shift(n, repeat_rows(tape.parameter(params_[scale_i]), N),
                              repeat_rows(tape.parameter(params_[shift_i]), N));
    }
    return leaky_relu(y, T(config_.leaky_slope));
  }

  std::size_t add_param(const std::string& name, Shape shape, double stddev, double mean,
                        std::mt19937_64& rng) {
    Tensor<T> v(shape);
    if (stddev > 0.0) {
      std::normal_distribution<double> dist(mean, stddev);
      for (auto& x : v.data()) x = T(dist(rng));
    } else {
      v.fill(T(mean));
    }
    params_.emplace_back(name, std::move(v));
    return params_.size() - 1;
  }

  void add_block(const std::string& name, int in_c, int out_c, int stride, std::mt19937_64& rng) {
    ConvBlock cb;
    cb.stride = stride;
    const double fan_in = double(in_c) * 9.0;
    cb.weight = add_param(name + ".conv.weight", {std::size_t(out_c), std::size_t(in_c), 3, 3},
                          std::sqrt(2.0 / fan_in), 0.0, rng);
    cb.bias = add_param(name + ".conv.bias", {std::size_t(out_c)}, 0.0, 0.0, rng);
    const std::size_t C = std::size_t(out_c);
    if (config_.settings_mode == SettingsMode::kAdaIn) {
      const std::size_t D = std::size_t(config_.style_dim);
      const double sd = 1.0 / std::sqrt(double(D));
      AdaInLayer a;
      a.channels = out_c;
      a.gamma_weight = add_param(name + ".adain.gamma.weight", {C, D}, sd, 0.0, rng);
      params_.back().lr_scale = sd;
      a.gamma_bias = add_param(name + ".adain.gamma.bias", {C}, 0.0, 1.0, rng);
      a.beta_weight = add_param(name + ".adain.beta.weight", {C, D}, sd, 0.0, rng);
      params_.back().lr_scale = sd;
      a.beta_bias = add_param(name + ".adain.beta.bias", {C}, 0.0, 0.0, rng);
      cb.norm = adain_.size();
      adain_.push_back(a);
    } else {
      const std::size_t s = add_param(name + ".norm.scale", {C}, 0.0, 1.0, rng);
      const std::size_t b = add_param(name + ".norm.shift", {C}, 0.0, 0.0, rng);
      cb.norm = norm_affine_.size();
      norm_affine_.emplace_back(s, b);
    }
    blocks_.push_back(cb);
  }

  void build() {
    std::mt19937_64 rng(config_.init_seed);
    if (config_.settings_mode == SettingsMode::kAdaIn) {
      int in = config_.settings_length();
      for (int i = 0; i <= config_.mapping_hidden_layers; ++i) {
        const int out = config_.style_dim;
        const double gain = i < config_.mapping_hidden_layers ? 2.0 : 1.0;
        const std::string n = "mapping." + std::to_string(i);
        const std::size_t w = add_param(n + ".weight", {std::size_t(out), std::size_t(in)},
                                        std::sqrt(gain / double(in)), 0.0, rng);
        // Optimizer step scaled by 1/sqrt(fan_in), as for the AdaIN affine weights.
        params_.back().lr_scale = 1.0 / std::sqrt(double(in));
        const std::size_t b = add_param(n + ".bias", {std::size_t(out)}, 0.0, 0.0, rng);
        mapping_.emplace_back(w, b);
        in = out;
      }
    }
    const int c0 = config_.channels(0);
    add_block("enc0.0", config_.input_channels(), c0, 1, rng);
    add_block("enc0.1", c0, c0, 1, rng);
    for (int l = 1; l <= config_.levels; ++l) {
      const std::string n = "enc" + std::to_string(l);
      add_block(n + ".down", config_.channels(l - 1), config_.channels(l), 2, rng);
      add_block(n + ".1", config_.channels(l), config_.channels(l), 1, rng);
    }
    for (int l = config_.levels - 1; l >= 0; --l) {
      const std::string n = "dec" + std::to_string(l);
      add_block(n + ".up", config_.channels(l + 1), config_.channels(l), 1, rng);
      add_block(n + ".fuse", 2 * config_.channels(l), config_.channels(l), 1, rng);
    }
    out_weight_ = add_param("out.weight", {std::size_t(config_.output_channels), std::size_t(c0), 1, 1},
                            std::sqrt(0.1 / double(c0)), 0.0, rng);
    out_bias_ = add_param("out.bias", {std::size_t(config_.output_channels)}, 0.0, 0.0, rng);
  }

  UNetConfig config_;
  std::optional<FourierEncoding> encoding_;
  std::vector<Parameter<T>> params_;
  std::vector<std::pair<std::size_t, std::size_t>> mapping_;
  std::vector<ConvBlock> blocks_;
  std::vector<AdaInLayer> adain_;
  std::vector<std::pair<std::size_t, std::size_t>> norm_affine_;
  std::size_t out_weight_ = 0, out_bias_ = 0;
};

}  // namespace pointshade
