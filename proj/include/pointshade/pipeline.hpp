// SPDX-License-Identifier: Apache-2.0
#pragma once

// End-to-end preview: normalized cloud -> projection -> z-buffer -> network -> RGBA,
// with wall-clock timing per stage.

#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "pointshade/image.hpp"
#include "pointshade/io.hpp"
#include "pointshade/network.hpp"
#include "pointshade/projection.hpp"

namespace pointshade {

struct CameraPose {
  double yaw = 0.0;    // radians
  double pitch = 0.0;  // radians
  double distance = 2.2;
};

struct StageTimings {
  double project_ms = 0.0;
  double zbuffer_ms = 0.0;
  double forward_ms = 0.0;
  double total_ms = 0.0;
};

struct RenderResult {
  RgbaImage image;
  ZBufferImage zbuffer;
  StageTimings timings;
};

/// Thrown for settings outside the ranges the service accepts.
class SettingsRangeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SettingsRanges {
  double min_elevation_deg = -89.0;
  double max_elevation_deg = 89.0;
  double min_pitch_deg = -89.0;
  double max_pitch_deg = 89.0;
  double min_light_radius = 0.5;
  double max_light_radius = 20.0;
  double min_camera_distance = 1.05;
  double max_camera_distance = 20.0;
};

inline void validate_render_settings(const Settings& s, const CameraPose& pose, bool material_control,
                                     const SettingsRanges& r = {}) {
  auto fail = [](const std::string& m) { throw SettingsRangeError(m); };
  for (double c : s.color) {
    if (!(c >= 0.0 && c <= 1.0)) fail("color components must be in [0, 1]");
  }
  if (!std::isfinite(s.light.azimuth)) fail("light azimuth must be finite");
  const double el = rad_to_deg(s.light.elevation);
  if (!(el >= r.min_elevation_deg && el <= r.max_elevation_deg)) {
    fail("light elevation must be in [" + std::to_string(r.min_elevation_deg) + ", " +
         std::to_string(r.max_elevation_deg) + "] degrees");
  }
  if (!(s.light.radius >= r.min_light_radius && s.light.radius <= r.max_light_radius)) {
    fail("light radius out of range");
  }
  if (s.material.has_value() != material_control) {
    fail(material_control ? "model requires material settings" : "model has no material control");
  }
  if (s.material) {
    const auto& m = *s.material;
    if (!(m.metallic >= 0.0 && m.metallic <= 1.0 && m.roughness >= 0.0 && m.roughness <= 1.0)) {
      fail("metallic and roughness must be in [0, 1]");
    }
  }
  if (!std::isfinite(pose.yaw)) fail("camera yaw must be finite");
  const double pitch = rad_to_deg(pose.pitch);
  if (!(pitch >= r.min_pitch_deg && pitch <= r.max_pitch_deg)) fail("camera pitch out of range");
  if (!(pose.distance >= r.min_camera_distance && pose.distance <= r.max_camera_distance)) {
    fail("camera distance out of range");
  }
}

/// Renders an already normalized cloud with a trained model.
inline RenderResult render_preview(const Model<float>& model, const PointCloud& normalized_cloud,
                                   const Settings& settings, const CameraPose& pose,
                                   int resolution, const RenderDefaults& defaults) {
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
  if (resolution < 1) throw std::invalid_argument("resolution must be positive");
  model.check_input_size(std::size_t(resolution), std::size_t(resolution));

  const Camera cam = Camera::orbit(pose.yaw, pose.pitch, pose.distance, resolution, resolution,
                                   defaults.focal_fraction);
  RenderResult out;
  const auto t0 = clock::now();
  const auto projected = project(normalized_cloud, cam);
  const auto t1 = clock::now();
  out.zbuffer = rasterize(projected, defaults.zbuffer, resolution, resolution);
  const auto t2 = clock::now();
  out.image = to_image(model.infer(out.zbuffer, settings));
  const auto t3 = clock::now();
  out.timings = {ms(t1 - t0), ms(t2 - t1), ms(t3 - t2), ms(t3 - t0)};
  return out;
}

}  // namespace pointshade
