// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "pointshade/image.hpp"
#include "pointshade/network.hpp"

namespace pointshade {

struct LossWeights {
  double mse_rgb = 1.0;
  double l1_magnitude = 1.0;
  double l1_alpha = 1.0;

  void validate() const {
    if (mse_rgb < 0 || l1_magnitude < 0 || l1_alpha < 0 ||
        !(mse_rgb > 0 || l1_magnitude > 0 || l1_alpha > 0)) {
      throw std::invalid_argument("loss weights must be nonnegative with at least one positive");
    }
  }
};

struct LossComponents {
  double mse_rgb = 0.0;       // mean squared RGB error
  double l1_magnitude = 0.0;  // mean |‖rgb_pred‖ - ‖rgb_target‖| per pixel
  double l1_alpha = 0.0;      // mean |alpha_pred - alpha_target|
};

template <typename T>
struct LossResult {
  Var<T> total;
  LossComponents components;
};

/// Weighted sum of RGB MSE, per-pixel RGB-magnitude L1 and alpha L1.
/// pred is [N,4,H,W] or [4,H,W]; target must have the same element layout.
template <typename T>
LossResult<T> rgba_loss(const Var<T>& pred, const Tensor<T>& target, const LossWeights& weights) {
  weights.validate();
  const Shape& ps = pred.shape();
  const bool batched = ps.size() == 4;
  if (!(batched || ps.size() == 3) || ps[batched ? 1 : 0] != 4) {
    throw std::invalid_argument("loss: prediction must be [N,4,H,W] or [4,H,W], got " +
                                shape_string(ps));
  }
  if (target.numel() != pred.value().numel() ||
      (target.shape() != ps && target.shape() != Shape(ps.begin() + 1, ps.end()))) {
    throw std::invalid_argument("loss: target shape " + shape_string(target.shape()) +
                                " does not match prediction " + shape_string(ps));
  }
  const std::size_t N = batched ? ps[0] : 1;
  const std::size_t plane = batched ? ps[2] * ps[3] : ps[1] * ps[2];
  const T* p = pred.value().data().data();
  const T* t = target.data().data();

  double se = 0.0, mag = 0.0, al = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const T* pn = p + n * 4 * plane;
    const T* tn = t + n * 4 * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      double mp = 0.0, mt = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double pv = pn[c * plane + i], tv = tn[c * plane + i];
        se += (pv - tv) * (pv - tv);
        mp += pv * pv;
        mt += tv * tv;
      }
      mag += std::abs(std::sqrt(mp) - std::sqrt(mt));
      al += std::abs(double(pn[3 * plane + i]) - double(tn[3 * plane + i]));
    }
  }
  const double pixels = double(N * plane);
  LossComponents comp{se / (3.0 * pixels), mag / pixels, al / pixels};
  const double total = weights.mse_rgb * comp.mse_rgb + weights.l1_magnitude * comp.l1_magnitude +
                       weights.l1_alpha * comp.l1_alpha;

  const std::size_t pi = pred.id();
  Tensor<T> tgt = target;
  Var<T> out = pred.tape().record(
      Tensor<T>({1}, T(total)), {pred}, [=](Tape<T>& tape, std::size_t self) {
        const double g = double((*tape.grad(self))[0]);
        const T* pv = tape.value(pi).data().data();
        const T* tv = tgt.data().data();
        T* gp = tape.grad_buffer(pi).data().data();
        const double k_se = g * weights.mse_rgb * 2.0 / (3.0 * pixels);
        const double k_mag = g * weights.l1_magnitude / pixels;
        const double k_al = g * weights.l1_alpha / pixels;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t base = n * 4 * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            double mp = 0.0, mt = 0.0;
            for (std::size_t c = 0; c < 3; ++c) {
              const double a = pv[base + c * plane + i], b = tv[base + c * plane + i];
              mp += a * a;
              mt += b * b;
            }
            mp = std::sqrt(mp);
            mt = std::sqrt(mt);
            const double sgn = mp > mt ? 1.0 : (mp < mt ? -1.0 : 0.0);
            for (std::size_t c = 0; c < 3; ++c) {
              const std::size_t j = base + c * plane + i;
              double d = k_se * (double(pv[j]) - double(tv[j]));
              if (mp > 0.0) d += k_mag * sgn * double(pv[j]) / mp;
              gp[j] += T(d);
            }
            const std::size_t ja = base + 3 * plane + i;
            const double da = double(pv[ja]) - double(tv[ja]);
            gp[ja] += T(k_al * (da > 0 ? 1.0 : (da < 0 ? -1.0 : 0.0)));
          }
        }
      });
  return {out, comp};
}

/// Evaluates the loss on plain tensors.
template <typename T>
std::pair<double, LossComponents> loss(const Tensor<T>& pred, const Tensor<T>& target,
                                       const LossWeights& weights) {
  Tape<T> tape(GradMode::kDisabled);
  LossResult<T> r = rgba_loss(tape.constant(pred), target, weights);
  return {double(r.total.value()[0]), r.components};
}

/// Appends ceil(rho * N) points drawn uniformly from the cloud's bounding box.
template <typename Rng>
PointCloud add_uniform_noise(const PointCloud& cloud, double rho, Rng& rng) {
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("noise fraction must be in [0, 1)");
  if (cloud.empty() || rho == 0.0) return cloud;
  Vec3 lo = cloud.points.front(), hi = lo;
  for (const Vec3& p : cloud.points) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  // The small slack keeps products such as 0.1 * 100 from rounding up a whole point.
  const auto extra = std::size_t(std::ceil(rho * double(cloud.size()) - 1e-9));
  PointCloud out = cloud;
  out.points.reserve(cloud.size() + extra);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < extra; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    out.points.push_back({lo.x + a * (hi.x - lo.x), lo.y + b * (hi.y - lo.y),
                          lo.z + c * (hi.z - lo.z)});
  }
  return out;
}

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(const AdamConfig& cfg, std::span<const Parameter<T>> params) : cfg_(cfg) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.numel(), 0.0);
      v_.emplace_back(p.value.numel(), 0.0);
    }
  }

  /// One update from the gradients currently stored on the parameters. `lr_factor`
  /// multiplies the configured learning rate for this step only.
  void step(std::span<Parameter<T>> params, double lr_factor = 1.0) {
    if (params.size() != m_.size()) throw std::logic_error("Adam: parameter set changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k];
      auto& m = m_[k];
      auto& v = v_[k];
      const double lr = cfg_.learning_rate * lr_factor * p.lr_scale;
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double g = double(p.grad[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double update = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.epsilon);
        p.value[i] -= T(update);
      }
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

struct TrainingExample {
  ZBufferImage zbuffer;
  Settings settings;
  RgbaImage target;
};

struct LossRecord {
  int step = 0;
  double total = 0.0;
  LossComponents components;
};

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 1;
  int steps = 1000;
  int warmup_steps = 0;  // linear learning-rate ramp over the first steps
  std::uint64_t seed = 0;
  LossWeights weights;
  int checkpoint_every = 0;  // 0 disables
};

template <typename T>
struct TrainCallbacks {
  std::function<void(const LossRecord&)> on_step;
  std::function<void(int step, const Model<T>&)> on_checkpoint;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stacks examples[indices] into z-buffer [N,1,H,W], settings [N,L] and target [N,4,H,W].
template <typename T>
void assemble_batch(std::span<const TrainingExample> data, std::span<const std::size_t> indices,
                    Tensor<T>& zb, Tensor<T>& settings, Tensor<T>& target) {
  const auto& first = data[indices[0]];
  const std::size_t N = indices.size(), H = std::size_t(first.zbuffer.height),
                    W = std::size_t(first.zbuffer.width), L = first.settings.length();
  zb = Tensor<T>({N, 1, H, W});
  settings = Tensor<T>({N, L});
  target = Tensor<T>({N, 4, H, W});
  for (std::size_t n = 0; n < N; ++n) {
    const TrainingExample& ex = data[indices[n]];
    if (std::size_t(ex.zbuffer.height) != H || std::size_t(ex.zbuffer.width) != W ||
        std::size_t(ex.target.height) != H || std::size_t(ex.target.width) != W ||
        ex.settings.length() != L) {
      throw std::invalid_argument("training examples in a batch must share size and settings length");
    }
    std::copy(ex.zbuffer.intensities.begin(), ex.zbuffer.intensities.end(),
              zb.data().begin() + n * H * W);
    const auto s = ex.settings.flatten<T>();
    std::copy(s.begin(), s.end(), settings.data().begin() + n * L);
    const Tensor<T> planar = to_planar<T>(ex.target);
    std::copy(planar.data().begin(), planar.data().end(), target.data().begin() + n * 4 * H * W);
  }
}

/// Mean loss over a dataset, evaluated one example at a time.
template <typename T>
std::pair<double, LossComponents> evaluate_loss(const Model<T>& model,
                                                std::span<const TrainingExample> data,
                                                const LossWeights& weights) {
  double total = 0.0;
  LossComponents sum;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tensor<T> zb, st, tgt;
    const std::size_t idx[1] = {i};
    assemble_batch<T>(data, idx, zb, st, tgt);
    Tape<T> tape(GradMode::kDisabled);
    LossResult<T> r = rgba_loss(model.forward(tape, zb, st), tgt, weights);
    total += double(r.total.value()[0]);
    sum.mse_rgb += r.components.mse_rgb;
    sum.l1_magnitude += r.components.l1_magnitude;
    sum.l1_alpha += r.components.l1_alpha;
  }
  const double n = double(data.size());
  return {total / n, {sum.mse_rgb / n, sum.l1_magnitude / n, sum.l1_alpha / n}};
}

/// Adam training over shuffled epochs. history[k] is the minibatch loss before update k.
template <typename T>
std::vector<LossRecord> train(Model<T>& model, std::span<const TrainingExample> data,
                              const TrainConfig& config, const TrainCallbacks<T>& callbacks = {}) {
  if (data.empty()) throw std::invalid_argument("training dataset is empty");
  if (!(config.adam.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (config.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (config.steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (config.warmup_steps < 0) throw std::invalid_argument("warmup steps must be >= 0");
  config.weights.validate();

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  Adam<T> adam(config.adam, model.parameters());
  std::vector<LossRecord> history;
  history.reserve(std::size_t(config.steps));
  std::vector<std::size_t> batch(std::size_t(config.batch_size));
  for (int step = 0; step < config.steps; ++step) {
    for (auto& b : batch) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      b = order[cursor++];
    }
    Tensor<T> zb, st, tgt;
    assemble_batch<T>(data, batch, zb, st, tgt);

    model.zero_grad();
    Tape<T> tape;
    LossResult<T> r = rgba_loss(model.forward(tape, zb, st), tgt, config.weights);
    const double total = double(r.total.value()[0]);
    LossRecord rec{step, total, r.components};
    if (!std::isfinite(total)) {
      std::ostringstream os;
      os << "non-finite loss at step " << step << " (mse_rgb=" << r.components.mse_rgb
         << ", l1_magnitude=" << r.components.l1_magnitude
         << ", l1_alpha=" << r.components.l1_alpha << ")";
      throw TrainingError(os.str());
    }
    tape.backward(r.total);
    model.accumulate_gradients(tape);
    const double ramp = step < config.warmup_steps ? double(step + 1) / double(config.warmup_steps) : 1.0;
    adam.step(model.parameters(), ramp);

    history.push_back(rec);
    if (callbacks.on_step) callbacks.on_step(rec);
    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
        callbacks.on_checkpoint) {
      callbacks.on_checkpoint(step + 1, model);
    }
  }
  return history;
}

}  // namespace pointshade
