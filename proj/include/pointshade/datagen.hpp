// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic training pairs: random sphere arrangements over a shadow-catching
// floor, surface point samples, and an analytic ray-traced RGBA target.

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "pointshade/image.hpp"
#include "pointshade/network.hpp"
#include "pointshade/projection.hpp"
#include "pointshade/training.hpp"

namespace pointshade {

struct Sphere {
  Vec3 center;
  double radius = 1.0;
};

struct AreaLight {
  double half_extent = 0.3;   // square emitter, world units
  int samples_per_side = 4;   // stratified grid, samples_per_side^2 shadow rays
};

struct SceneSpec {
  std::vector<Sphere> spheres;
  bool floor = true;
  double floor_y = 0.0;
  std::array<double, 3> color{0.8, 0.8, 0.8};
  AreaLight light;
  double ambient = 0.2;
  double diffuse = 0.8;
  double specular = 0.5;
  std::optional<Material> material;

  void validate() const {
    for (const Sphere& s : spheres) {
      if (!(s.radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
      if (floor && s.center.y - s.radius < floor_y - 1e-9) {
        throw std::invalid_argument("sphere extends below the floor");
      }
    }
    if (light.samples_per_side < 1 || light.half_extent < 0.0) {
      throw std::invalid_argument("invalid area light");
    }
  }

  /// Same scene expressed in the frame p' = (p - centroid) * scale.
  SceneSpec transformed(const Vec3& centroid, double scale) const {
    SceneSpec out = *this;
    for (Sphere& s : out.spheres) {
      s.center = (s.center - centroid) * scale;
      s.radius *= scale;
    }
    out.floor_y = (floor_y - centroid.y) * scale;
    return out;
  }
};

struct DatagenConfig {
  int resolution = 64;
  int points_per_cloud = 4000;
  int min_spheres = 1;
  int max_spheres = 3;
  double min_radius = 0.2;
  double max_radius = 0.5;
  double placement_extent = 0.6;  // sphere centers in [-e, e] on the floor plane
  double max_lift = 0.3;          // extra height above the floor
  double min_elevation_deg = 20.0;
  double max_elevation_deg = 70.0;
  double light_radius = 3.0;
  double light_half_extent = 0.3;
  int light_samples_per_side = 4;
  double ambient = 0.2;
  double diffuse = 0.8;
  bool material_control = false;
  double noise_fraction = 0.0;
  double camera_distance = 2.2;
  double camera_pitch_deg = 20.0;
  double focal_fraction = 0.75;  // focal length in units of the image side
  ZBufferParams zbuffer;

  Camera camera() const {
    return Camera::orbit(0.0, deg_to_rad(camera_pitch_deg), camera_distance, resolution,
                         resolution, focal_fraction);
  }
};

struct SceneDraw {
  SceneSpec scene;
  Settings settings;
};

/// Random 1-3 sphere arrangement with a random rotation about the vertical axis,
/// random color and random light direction.
template <typename Rng>
SceneDraw sample_scene(Rng& rng, const DatagenConfig& cfg) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  SceneDraw d;
  const int count = cfg.min_spheres +
                    int(std::floor(u01(rng) * double(cfg.max_spheres - cfg.min_spheres + 1)));
  const int n = std::clamp(count, cfg.min_spheres, cfg.max_spheres);
  const double angle = uniform(0.0, 2.0 * kPi);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int i = 0; i < n; ++i) {
    Sphere s;
    s.radius = uniform(cfg.min_radius, cfg.max_radius);
    const double x = uniform(-cfg.placement_extent, cfg.placement_extent);
    const double z = uniform(-cfg.placement_extent, cfg.placement_extent);
    s.center = {ca * x + sa * z, s.radius + uniform(0.0, cfg.max_lift), -sa * x + ca * z};
    d.scene.spheres.push_back(s);
  }
  d.scene.floor = true;
  d.scene.floor_y = 0.0;
  d.scene.ambient = cfg.ambient;
  d.scene.diffuse = cfg.diffuse;
  d.scene.light.half_extent = cfg.light_half_extent;
  d.scene.light.samples_per_side = cfg.light_samples_per_side;
  d.settings.color = {u01(rng), u01(rng), u01(rng)};
  d.settings.light.azimuth = uniform(0.0, 2.0 * kPi);
  d.settings.light.elevation =
      deg_to_rad(uniform(cfg.min_elevation_deg, cfg.max_elevation_deg));
  d.settings.light.radius = cfg.light_radius;
  if (cfg.material_control) d.settings.material = Material{u01(rng), u01(rng)};
  d.scene.color = d.settings.color;
  d.scene.material = d.settings.material;
  return d;
}

namespace detail {

// Nearest positive ray parameter hitting the sphere, or -1.
inline double hit_sphere(const Vec3& origin, const Vec3& dir, const Sphere& s) {
  const Vec3 oc = origin - s.center;
  const double b = dot(oc, dir);
  const double c = dot(oc, oc) - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return -1.0;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t > 1e-9) return t;
  t = -b + sq;
  return t > 1e-9 ? t : -1.0;
}

inline bool inside_sphere(const Vec3& p, const Sphere& s) {
  return norm(p - s.center) < s.radius * (1.0 - 1e-12);
}

}  // namespace detail

/// n points distributed uniformly by area over the boundary of the union of spheres.
template <typename Rng>
PointCloud sample_points(const SceneSpec& scene, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_points: n must be >= 1");
  if (scene.spheres.empty()) throw std::invalid_argument("sample_points: scene has no spheres");
  std::vector<double> areas;
  for (const Sphere& s : scene.spheres) areas.push_back(s.radius * s.radius);
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
  std::normal_distribution<double> gauss(0.0, 1.0);
  PointCloud cloud;
  cloud.points.reserve(std::size_t(n));
  std::size_t attempts = 0;
  while (cloud.points.size() < std::size_t(n)) {
    if (++attempts > std::size_t(n) * 1000) {
      throw std::runtime_error("sample_points: scene surface is fully enclosed");
    }
    const std::size_t k = pick(rng);
    const Sphere& s = scene.spheres[k];
    Vec3 d{gauss(rng), gauss(rng), gauss(rng)};
    const double len = norm(d);
    if (len < 1e-12) continue;
    const Vec3 p = s.center + d * (s.radius / len);
    bool hidden = false;
    for (std::size_t j = 0; j < scene.spheres.size() && !hidden; ++j)
      hidden = j != k && detail::inside_sphere(p, scene.spheres[j]);
    if (!hidden) cloud.points.push_back(p);
  }
  return cloud;
}

/// Light center for camera-relative spherical coordinates. Azimuth 0 points from the
/// target toward the camera (projected on the horizontal plane); elevation is above
/// the horizontal plane.
inline Vec3 light_center(const Camera& cam, const LightPosition& light) {
  Vec3 back = cam.position - cam.target;
  back.y = 0.0;
  if (norm(back) < 1e-12) back = {0.0, 0.0, 1.0};
  back = normalized(back);
  const Vec3 up{0.0, 1.0, 0.0};
  const Vec3 right = cross(up, back);
  const Vec3 dir = (right * std::sin(light.azimuth) + back * std::cos(light.azimuth)) *
                       std::cos(light.elevation) +
                   up * std::sin(light.elevation);
  return cam.target + dir * light.radius;
}

/// Stratified, jittered shadow samples on the square emitter, which faces `target`.
/// A zero half extent collapses to a point light.
inline std::vector<Vec3> light_samples(const Vec3& center, const Vec3& target,
                                       const AreaLight& light, std::uint64_t seed) {
  const int g = light.samples_per_side;
  std::vector<Vec3> out;
  out.reserve(std::size_t(g) * g);
  if (light.half_extent == 0.0) {
    out.assign(std::size_t(g) * g, center);
    return out;
  }
  const Vec3 n = normalized(target - center);
  const Vec3 helper = std::abs(n.y) < 0.9 ? Vec3{0.0, 1.0, 0.0} : Vec3{1.0, 0.0, 0.0};
  const Vec3 e1 = normalized(cross(helper, n));
  const Vec3 e2 = cross(n, e1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      const double a = (double(i) + u01(rng)) / double(g) * 2.0 - 1.0;
      const double b = (double(j) + u01(rng)) / double(g) * 2.0 - 1.0;
      out.push_back(center + e1 * (a * light.half_extent) + e2 * (b * light.half_extent));
    }
  }
  return out;
}

/// Fraction of light samples visible from p (spheres occlude, the floor does not).
inline double visibility(const SceneSpec& scene, const Vec3& p, const std::vector<Vec3>& samples) {
  int visible = 0;
  for (const Vec3& s : samples) {
    const Vec3 d = s - p;
    const double dist = norm(d);
    const Vec3 dir = d * (1.0 / dist);
    bool blocked = false;
    for (const Sphere& sp : scene.spheres) {
      const double t = detail::hit_sphere(p, dir, sp);
      if (t > 0.0 && t < dist) {
        blocked = true;
        break;
      }
    }
    visible += blocked ? 0 : 1;
  }
  return double(visible) / double(samples.size());
}

/// Ray-traced RGBA target. Spheres: Lambert shading with ambient term and soft
/// shadows (plus Blinn-Phong when a material is set), alpha 1. Floor: shadow
/// catcher with RGB 0 and alpha = 1 - visibility. Misses are transparent black.
inline RgbaImage render_reference(const SceneSpec& scene, const Camera& cam,
                                  const Settings& settings, std::uint64_t light_seed = 0) {
  cam.validate();
  scene.validate();
  const Camera::Frame fr = cam.frame();
  const Vec3 lc = light_center(cam, settings.light);
  RgbaImage img(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 dir = cam.ray_direction(double(x), double(y), fr);
      double best = std::numeric_limits<double>::infinity();
      int hit = -1;
      for (std::size_t i = 0; i < scene.spheres.size(); ++i) {
        const double t = detail::hit_sphere(cam.position, dir, scene.spheres[i]);
        if (t > 0.0 && t < best) {
          best = t;
          hit = int(i);
        }
      }
      bool floor_hit = false;
      if (scene.floor && dir.y < 0.0) {
        const double t = (scene.floor_y - cam.position.y) / dir.y;
        if (t > 0.0 && t < best) {
          best = t;
          floor_hit = true;
          hit = -1;
        }
      }
      if (hit < 0 && !floor_hit) continue;

      const std::uint64_t pix_seed =
          derive_seed(light_seed, std::uint64_t(y) * std::uint64_t(cam.width) + std::uint64_t(x));
      const Vec3 p = cam.position + dir * best;
      if (floor_hit) {
        const Vec3 origin = p + Vec3{0.0, 1e-9, 0.0};
        const auto samples = light_samples(lc, cam.target, scene.light, pix_seed);
        img.at(x, y, 3) = float(1.0 - visibility(scene, origin, samples));
        continue;
      }
      const Sphere& s = scene.spheres[std::size_t(hit)];
      const Vec3 n = normalized(p - s.center);
      const Vec3 origin = p + n * 1e-9;
      const auto samples = light_samples(lc, cam.target, scene.light, pix_seed);
      const double vis = visibility(scene, origin, samples);
      const Vec3 l = normalized(lc - p);
      const double ndotl = std::max(0.0, dot(n, l));
      const double shade = scene.ambient + scene.diffuse * ndotl * vis;
      double spec = 0.0;
      std::array<double, 3> tint{1.0, 1.0, 1.0};
      if (scene.material) {
        const double rough = std::clamp(scene.material->roughness, 0.0, 1.0);
        const double metal = std::clamp(scene.material->metallic, 0.0, 1.0);
        const Vec3 h = normalized(l - dir);
        const double shininess = 8.0 + 120.0 * (1.0 - rough);
        spec = ndotl > 0.0 ? scene.specular * (1.0 - rough) *
                                 std::pow(std::max(0.0, dot(n, h)), shininess) * vis
                           : 0.0;
        for (int c = 0; c < 3; ++c) tint[c] = (1.0 - metal) + metal * scene.color[c];
      }
      for (int c = 0; c < 3; ++c) {
        img.at(x, y, c) = float(std::clamp(scene.color[c] * shade + spec * tint[c], 0.0, 1.0));
      }
      img.at(x, y, 3) = 1.0f;
    }
  }
  return img;
}

struct SceneSample {
  SceneSpec scene;        // in the normalized frame of the cloud
  PointCloud cloud;       // normalized, including noise points
  Settings settings;
  ZBufferImage zbuffer;
  RgbaImage target;
  std::uint64_t seed = 0;

  TrainingExample example() const { return {zbuffer, settings, target}; }
};

/// Sample `index` of the dataset with master seed `seed`; independent of other samples.
inline SceneSample generate_sample(const DatagenConfig& cfg, std::uint64_t seed,
                                   std::uint64_t index) {
  SceneSample out;
  out.seed = derive_seed(seed, index);
  std::mt19937_64 rng(out.seed);
  SceneDraw draw = sample_scene(rng, cfg);
  PointCloud cloud = sample_points(draw.scene, cfg.points_per_cloud, rng);
  cloud = add_uniform_noise(cloud, cfg.noise_fraction, rng);
  NormalizedCloud nc = normalize_cloud(cloud);
  const Camera cam = cfg.camera();
  out.scene = draw.scene.transformed(nc.centroid, nc.scale);
  out.cloud = std::move(nc.cloud);
  out.settings = draw.settings;
  out.zbuffer = rasterize(project(out.cloud, cam), cfg.zbuffer, cam.width, cam.height);
  out.target = render_reference(out.scene, cam, out.settings, out.seed);
  return out;
}

inline std::vector<SceneSample> make_dataset(int count, const DatagenConfig& cfg,
                                             std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("dataset count must be >= 1");
  std::vector<SceneSample> out;
  out.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i) out.push_back(generate_sample(cfg, seed, std::uint64_t(i)));
  return out;
}

}  // namespace pointshade
