// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "pointshade/pipeline.hpp"

namespace pointshade {
namespace {

UNetConfig small_config() {
  UNetConfig c;
  c.levels = 2;
  c.base_channels = 4;
  c.style_dim = 16;
  c.mapping_hidden_layers = 1;
  return c;
}

NormalizedCloud sphere_cloud(int n) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  PointCloud c;
  for (int i = 0; i < n; ++i) c.points.push_back(normalized(Vec3{g(rng), g(rng), g(rng)}) * 0.5);
  return normalize_cloud(c);
}

Settings default_settings() {
  Settings s;
  s.light = {deg_to_rad(30.0), deg_to_rad(45.0), 3.0};
  return s;
}

TEST(RenderPreview, ProducesImageAndTimings) {
  const auto model = Model<float>::create(small_config(), 1);
  const auto r = render_preview(model, sphere_cloud(2000).cloud, default_settings(), {}, 32, {});
  EXPECT_EQ(r.image.width, 32);
  EXPECT_EQ(r.image.height, 32);
  EXPECT_EQ(r.zbuffer.width, 32);
  for (float v : r.image.pixels) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_GE(r.timings.project_ms, 0.0);
  EXPECT_GE(r.timings.zbuffer_ms, 0.0);
  EXPECT_GT(r.timings.forward_ms, 0.0);
  EXPECT_GE(r.timings.total_ms,
            r.timings.project_ms + r.timings.zbuffer_ms + r.timings.forward_ms - 1e-9);
  // The centre of the view is covered by the sphere.
  EXPECT_GT(r.zbuffer.at(16, 16), 0.0f);
}

TEST(RenderPreview, MatchesManualPipelineBitwise) {
  const auto model = Model<float>::create(small_config(), 1);
  const auto cloud = sphere_cloud(1000).cloud;
  const CameraPose pose{0.3, 0.2, 2.5};
  RenderDefaults d;
  const auto r = render_preview(model, cloud, default_settings(), pose, 16, d);
  const auto cam = Camera::orbit(pose.yaw, pose.pitch, pose.distance, 16, 16, d.focal_fraction);
  const auto z = rasterize(project(cloud, cam), d.zbuffer, 16, 16);
  EXPECT_EQ(r.zbuffer.intensities, z.intensities);
  EXPECT_EQ(r.image.pixels, to_image(model.infer(z, default_settings())).pixels);
  const auto again = render_preview(model, cloud, default_settings(), pose, 16, d);
  EXPECT_EQ(again.image.pixels, r.image.pixels);
}

TEST(RenderPreview, RejectsIndivisibleResolution) {
  const auto model = Model<float>::create(small_config(), 1);
  EXPECT_THROW(render_preview(model, sphere_cloud(10).cloud, default_settings(), {}, 30, {}),
               InputSizeError);
  EXPECT_THROW(render_preview(model, sphere_cloud(10).cloud, default_settings(), {}, 0, {}),
               std::invalid_argument);
}

TEST(ValidateRenderSettings, AcceptsDefaultsAndRejectsOutOfRange) {
  const Settings ok = default_settings();
  EXPECT_NO_THROW(validate_render_settings(ok, {}, false));
  auto expect_bad = [&](Settings s, CameraPose p, bool material) {
    EXPECT_THROW(validate_render_settings(s, p, material), SettingsRangeError);
  };
  Settings s = ok;
  s.color[1] = 1.01;
  expect_bad(s, {}, false);
  s = ok;
  s.color[0] = std::nan("");
  expect_bad(s, {}, false);
  s = ok;
  s.light.elevation = deg_to_rad(90.0);
  expect_bad(s, {}, false);
  s = ok;
  s.light.radius = 0.1;
  expect_bad(s, {}, false);
  s = ok;
  s.light.azimuth = INFINITY;
  expect_bad(s, {}, false);
  expect_bad(ok, {}, true);
  s = ok;
  s.material = Material{0.5, 0.5};
  expect_bad(s, {}, false);
  EXPECT_NO_THROW(validate_render_settings(s, {}, true));
  s.material->roughness = 1.5;
  expect_bad(s, {}, true);
  expect_bad(ok, {0.0, deg_to_rad(-90.0), 2.2}, false);
  expect_bad(ok, {0.0, 0.0, 1.0}, false);
  expect_bad(ok, {NAN, 0.0, 2.2}, false);
  EXPECT_NO_THROW(validate_render_settings(ok, {deg_to_rad(720.0), deg_to_rad(89.0), 20.0}, false));
}

}  // namespace
}  // namespace pointshade
