// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pinhole projection of point clouds and the exponential-intensity z-buffer.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pointshade/geometry.hpp"

namespace pointshade {

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Pinhole camera. Camera space has +Z along the view direction, +X to the image
/// right and +Y down the image, so a camera at the origin looking at +Z with
/// up = (0,-1,0) has identity extrinsics.
struct Camera {
  Vec3 position{0.0, 0.0, 0.0};
  Vec3 target{0.0, 0.0, 1.0};
  Vec3 up{0.0, -1.0, 0.0};
  double focal_px = 100.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  struct Frame {
    Vec3 right;
    Vec3 down;
    Vec3 forward;
  };

  void validate() const {
    if (!(focal_px > 0.0) || !std::isfinite(focal_px)) {
      throw std::invalid_argument("camera focal length must be positive");
    }
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera image size must be positive");
    const Vec3 f = target - position;
    if (norm(f) == 0.0) throw std::invalid_argument("camera target coincides with position");
    if (norm(cross(normalized(f), normalized(up))) < 1e-9) {
      throw std::invalid_argument("camera up vector is parallel to the view direction");
    }
  }

  Frame frame() const {
    const Vec3 f = normalized(target - position);
    const Vec3 r = normalized(cross(f, up));
    return {r, cross(f, r), f};
  }

  Vec3 to_camera(const Vec3& world, const Frame& fr) const {
    const Vec3 d = world - position;
    return {dot(d, fr.right), dot(d, fr.down), dot(d, fr.forward)};
  }

  /// Unit ray direction through continuous pixel coordinates (u, v).
  Vec3 ray_direction(double u, double v, const Frame& fr) const {
    return normalized(fr.right * ((u - cx) / focal_px) + fr.down * ((v - cy) / focal_px) +
                      fr.forward);
  }

  /// Camera orbiting the origin with world up +Y. yaw 0 / pitch 0 looks along -Z
  /// from +Z; positive pitch raises the camera and looks down.
  static Camera orbit(double yaw_rad, double pitch_rad, double distance, int width, int height,
                      double focal_fraction) {
    Camera cam;
    cam.position = Vec3{std::cos(pitch_rad) * std::sin(yaw_rad), std::sin(pitch_rad),
                        std::cos(pitch_rad) * std::cos(yaw_rad)} *
                   distance;
    cam.target = Vec3{0.0, 0.0, 0.0};
    cam.up = Vec3{0.0, 1.0, 0.0};
    cam.width = width;
    cam.height = height;
    cam.focal_px = focal_fraction * double(std::min(width, height));
    cam.cx = 0.5 * double(width - 1);
    cam.cy = 0.5 * double(height - 1);
    return cam;
  }
};

struct ProjectedPoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

struct ZBufferParams {
  double alpha = 1.0;  // depth offset
  double beta = 1.0;   // depth scale
  int window = 5;      // splat extent in pixels, odd

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta) || !std::isfinite(alpha)) {
      throw std::invalid_argument("z-buffer beta must be positive and finite");
    }
    if (window < 1 || window % 2 == 0) {
      throw std::invalid_argument("z-buffer window must be odd and >= 1, got " +
                                  std::to_string(window));
    }
  }
};

struct ZBufferImage {
  int width = 0;
  int height = 0;
  std::vector<float> intensities;  // row-major, uncovered pixels are 0
  ZBufferParams params;

  float at(int x, int y) const { return intensities[std::size_t(y) * width + x]; }
};

inline constexpr double kNearPlane = 1e-6;

/// Points behind or on the camera plane are dropped.
inline std::vector<ProjectedPoint> project(const PointCloud& cloud, const Camera& cam) {
  cam.validate();
  const Camera::Frame fr = cam.frame();
  std::vector<ProjectedPoint> out;
  out.reserve(cloud.size());
  for (const Vec3& p : cloud.points) {
    const Vec3 c = cam.to_camera(p, fr);
    if (!(c.z > kNearPlane)) continue;
    out.push_back({cam.cx + cam.focal_px * c.x / c.z, cam.cy + cam.focal_px * c.y / c.z, c.z});
  }
  return out;
}

/// exp(-(depth - alpha) / beta), clamped to 1 for points nearer than alpha.
inline double intensity(double depth, const ZBufferParams& params) {
  return std::min(1.0, std::exp(-(depth - params.alpha) / params.beta));
}

/// Stamps a window x window block around each rounded projection; each pixel keeps
/// the nearest covering point. Rounding is half away from zero.
inline ZBufferImage rasterize(const std::vector<ProjectedPoint>& projected,
                              const ZBufferParams& params, int width, int height) {
  params.validate();
  if (width <= 0 || height <= 0) throw std::invalid_argument("z-buffer size must be positive");
  const int half = params.window / 2;
  std::vector<double> depth(std::size_t(width) * height, std::numeric_limits<double>::infinity());
  for (const ProjectedPoint& p : projected) {
    // Reject before rounding so that far off-image coordinates never overflow.
    if (!(p.u > -double(half) - 1.0 && p.u < double(width + half) &&
          p.v > -double(half) - 1.0 && p.v < double(height + half))) {
      continue;
    }
    const int px = int(std::lround(p.u));
    const int py = int(std::lround(p.v));
    const int x0 = std::max(px - half, 0), x1 = std::min(px + half, width - 1);
    const int y0 = std::max(py - half, 0), y1 = std::min(py + half, height - 1);
    for (int y = y0; y <= y1; ++y) {
      double* row = depth.data() + std::size_t(y) * width;
      for (int x = x0; x <= x1; ++x) row[x] = std::min(row[x], p.depth);
    }
  }
  ZBufferImage img;
  img.width = width;
  img.height = height;
  img.params = params;
  img.intensities.resize(depth.size(), 0.0f);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (std::isfinite(depth[i])) img.intensities[i] = float(intensity(depth[i], params));
  }
  return img;
}

struct NormalizedCloud {
  PointCloud cloud;
  double scale = 1.0;  // multiply (p - centroid) by scale
  Vec3 centroid;
};

/// Centers the cloud at its centroid and scales it to a unit bounding sphere.
inline NormalizedCloud normalize_cloud(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("cannot normalize an empty point cloud");
  Vec3 c;
  for (const Vec3& p : cloud.points) c += p;
  c = c * (1.0 / double(cloud.size()));
  double r = 0.0;
  for (const Vec3& p : cloud.points) r = std::max(r, norm(p - c));
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw std::invalid_argument("degenerate point cloud: all points coincide");
  }
  NormalizedCloud out;
  out.centroid = c;
  out.scale = 1.0 / r;
  out.cloud.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.cloud.points.push_back((p - c) * out.scale);
  return out;
}

}  // namespace pointshade
