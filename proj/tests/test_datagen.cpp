// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pointshade/datagen.hpp"
#include "support/stats.hpp"

namespace pointshade {
namespace {

SceneSpec single_sphere(double radius = 0.5, bool floor = false) {
  SceneSpec s;
  s.spheres = {{{0.0, radius, 0.0}, radius}};
  s.floor = floor;
  s.color = {0.8, 0.4, 0.2};
  return s;
}

Camera test_camera(int size = 65) { return Camera::orbit(0.0, deg_to_rad(20.0), 2.2, size, size, 0.75); }

TEST(SampleScene, DeterministicForFixedSeed) {
  DatagenConfig cfg;
  std::mt19937_64 a(5), b(5);
  auto da = sample_scene(a, cfg), db = sample_scene(b, cfg);
  EXPECT_EQ(da.settings, db.settings);
  ASSERT_EQ(da.scene.spheres.size(), db.scene.spheres.size());
  for (std::size_t i = 0; i < da.scene.spheres.size(); ++i) {
    EXPECT_EQ(da.scene.spheres[i].center, db.scene.spheres[i].center);
    EXPECT_EQ(da.scene.spheres[i].radius, db.scene.spheres[i].radius);
  }
}

TEST(SampleScene, RangesAndUniformAzimuth) {
  DatagenConfig cfg;
  std::mt19937_64 rng(9);
  std::vector<double> az;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 1000; ++i) {
    auto d = sample_scene(rng, cfg);
    for (double c : d.settings.color) {
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 1.0);
    }
    const double el = rad_to_deg(d.settings.light.elevation);
    EXPECT_GE(el, 20.0);
    EXPECT_LE(el, 70.0);
    EXPECT_EQ(d.settings.light.radius, 3.0);
    EXPECT_EQ(d.scene.color, d.settings.color);
    ASSERT_GE(d.scene.spheres.size(), 1u);
    ASSERT_LE(d.scene.spheres.size(), 3u);
    ++counts[d.scene.spheres.size()];
    for (const auto& s : d.scene.spheres) {
      EXPECT_GE(s.radius, 0.2);
      EXPECT_LE(s.radius, 0.5);
      EXPECT_GE(s.center.y, s.radius);
    }
    EXPECT_NO_THROW(d.scene.validate());
    az.push_back(d.settings.light.azimuth);
  }
  EXPECT_LT(testing::ks_uniform(az, 0.0, 2.0 * kPi), testing::ks_critical_1pct(az.size()));
  for (int k = 1; k <= 3; ++k) EXPECT_GT(counts[std::size_t(k)], 250);
}

TEST(SamplePoints, SingleSphereSurface) {
  std::mt19937_64 rng(1);
  SceneSpec s = single_sphere(0.37);
  auto pts = sample_points(s, 2000, rng);
  ASSERT_EQ(pts.size(), 2000u);
  for (const auto& p : pts.points) EXPECT_NEAR(norm(p - s.spheres[0].center), 0.37, 1e-6);
}

TEST(SamplePoints, AreaWeightedAcrossSpheres) {
  std::mt19937_64 rng(2);
  SceneSpec s;
  s.spheres = {{{-2, 1, 0}, 0.8}, {{2, 1, 0}, 0.4}};  // areas 4:1, disjoint
  const int n = 20000;
  auto pts = sample_points(s, n, rng);
  int first = 0;
  for (const auto& p : pts.points) first += p.x < 0.0;
  const double p1 = 0.8, sigma = std::sqrt(n * p1 * (1 - p1));
  EXPECT_NEAR(double(first), n * p1, 3.0 * sigma);
}

TEST(SamplePoints, OverlappingSpheresKeepOnlyTheOuterSurface) {
  std::mt19937_64 rng(3);
  SceneSpec s;
  s.spheres = {{{0, 0.5, 0}, 0.5}, {{0.4, 0.5, 0}, 0.5}};
  auto pts = sample_points(s, 3000, rng);
  for (const auto& p : pts.points) {
    const double d0 = norm(p - s.spheres[0].center), d1 = norm(p - s.spheres[1].center);
    EXPECT_GE(std::min(d0, d1), 0.5 - 1e-9);
    EXPECT_GE(d0, 0.5 * (1 - 1e-9));
    EXPECT_GE(d1, 0.5 * (1 - 1e-9));
  }
}

TEST(RenderReference, MissedPixelsAreTransparentBlack) {
  SceneSpec s = single_sphere(0.1);
  s.spheres[0].center = {0, 0, 0};
  Settings st;
  const auto img = render_reference(s, test_camera(), st);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(img.at(0, 0, c), 0.0f);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(img.at(64, 64, c), 0.0f);
}

TEST(RenderReference, HeadOnLightGivesAmbientPlusDiffuse) {
  SceneSpec s = single_sphere(0.4);
  s.spheres[0].center = {0, 0, 0};  // the camera target
  const Camera cam = test_camera(65);
  Settings st;
  st.color = s.color;
  st.light = {0.0, deg_to_rad(20.0), 3.0};  // same direction as the camera
  const auto img = render_reference(s, cam, st);
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(img.at(32, 32, c), s.color[std::size_t(c)] * (s.ambient + s.diffuse), 1e-6);
  }
  EXPECT_EQ(img.at(32, 32, 3), 1.0f);
}

TEST(RenderReference, FullyOccludedFloorIsOpaqueShadow) {
  SceneSpec s = single_sphere(0.5, true);
  s.spheres[0].center = {0, 0.6, 0};
  Settings st;
  st.light = {deg_to_rad(90.0), deg_to_rad(50.0), 3.0};
  const Camera cam = Camera::orbit(0.0, deg_to_rad(40.0), 2.5, 64, 64, 0.6);
  const auto img = render_reference(s, cam, st);
  int umbra = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const float a = img.at(x, y, 3);
      EXPECT_GE(a, 0.0f);
      EXPECT_LE(a, 1.0f);
      if (a == 1.0f && img.at(x, y, 0) == 0.0f && img.at(x, y, 1) == 0.0f) ++umbra;
    }
  EXPECT_GT(umbra, 0);
  // Direct check at a floor point on the shadow axis.
  const Vec3 lc = light_center(cam, st.light);
  const Vec3 dir = normalized(s.spheres[0].center - lc);
  const Vec3 floor_pt = lc + dir * ((0.0 - lc.y) / dir.y);
  EXPECT_EQ(visibility(s, floor_pt, light_samples(lc, cam.target, s.light, 1)), 0.0);
}

TEST(RenderReference, AreaUmbraInsidePointShadow) {
  std::mt19937_64 rng(12);
  DatagenConfig cfg;
  for (int trial = 0; trial < 5; ++trial) {
    auto d = sample_scene(rng, cfg);
    d.scene.spheres.resize(1);
    SceneSpec point = d.scene;
    point.light.half_extent = 0.0;
    const Camera cam = test_camera(48);
    const auto soft = render_reference(d.scene, cam, d.settings, 3);
    const auto hard = render_reference(point, cam, d.settings, 3);
    int soft_umbra = 0, hard_shadow = 0;
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x) {
        const bool floor_px = soft.at(x, y, 0) == 0 && soft.at(x, y, 1) == 0 && soft.at(x, y, 2) == 0;
        if (!floor_px) continue;
        const bool full_soft = soft.at(x, y, 3) == 1.0f, full_hard = hard.at(x, y, 3) == 1.0f;
        soft_umbra += full_soft;
        hard_shadow += full_hard;
        if (full_soft) EXPECT_TRUE(full_hard) << x << "," << y;
      }
    EXPECT_LE(soft_umbra, hard_shadow);
  }
}

TEST(RenderReference, EnergyBoundWithSpecular) {
  std::mt19937_64 rng(4);
  DatagenConfig cfg;
  cfg.material_control = true;
  for (int trial = 0; trial < 5; ++trial) {
    auto d = sample_scene(rng, cfg);
    ASSERT_TRUE(d.scene.material.has_value());
    const auto img = render_reference(d.scene, test_camera(40), d.settings, 2);
    const double metal = d.scene.material->metallic;
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x)
        for (int c = 0; c < 3; ++c) {
          const double col = d.scene.color[std::size_t(c)];
          const double tint = (1 - metal) + metal * col;
          EXPECT_LE(img.at(x, y, c), col * (d.scene.ambient + d.scene.diffuse) + d.scene.specular * tint + 1e-6);
        }
  }
}

TEST(RenderReference, MirroredLightAzimuthMirrorsImage) {
  SceneSpec s = single_sphere(0.45, true);
  s.light.half_extent = 0.0;
  const Camera cam = test_camera(49);
  Settings left, right;
  left.light = {deg_to_rad(60.0), deg_to_rad(35.0), 3.0};
  right.light = {deg_to_rad(-60.0), deg_to_rad(35.0), 3.0};
  const auto a = render_reference(s, cam, left), b = render_reference(s, cam, right);
  for (int y = 0; y < 49; ++y)
    for (int x = 0; x < 49; ++x)
      for (int c = 0; c < 4; ++c) EXPECT_NEAR(a.at(x, y, c), b.at(48 - x, y, c), 1e-5) << x << "," << y;
}

TEST(RenderReference, MirroredLightWithAreaLightMatchesOnAverage) {
  SceneSpec s = single_sphere(0.45, true);
  const Camera cam = test_camera(49);
  Settings left, right;
  left.light = {deg_to_rad(60.0), deg_to_rad(35.0), 3.0};
  right.light = {deg_to_rad(-60.0), deg_to_rad(35.0), 3.0};
  const auto a = render_reference(s, cam, left, 1), b = render_reference(s, cam, right, 1);
  double diff = 0.0;
  for (int y = 0; y < 49; ++y)
    for (int x = 0; x < 49; ++x) diff += std::abs(a.at(x, y, 3) - b.at(48 - x, y, 3));
  EXPECT_LT(diff / (49.0 * 49.0), 0.01);
}

TEST(RenderReference, DeterministicGivenSeed) {
  std::mt19937_64 rng(6);
  auto d = sample_scene(rng, DatagenConfig{});
  EXPECT_EQ(render_reference(d.scene, test_camera(32), d.settings, 9),
            render_reference(d.scene, test_camera(32), d.settings, 9));
}

TEST(GenerateSample, ReproducibleAndSized) {
  DatagenConfig cfg;
  cfg.resolution = 32;
  cfg.points_per_cloud = 800;
  const auto a = generate_sample(cfg, 3, 7), b = generate_sample(cfg, 3, 7);
  EXPECT_EQ(a.zbuffer.intensities, b.zbuffer.intensities);
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.cloud.points, b.cloud.points);
  EXPECT_EQ(a.zbuffer.width, 32);
  EXPECT_EQ(a.target.height, 32);
  const auto c = generate_sample(cfg, 3, 8);
  EXPECT_NE(a.zbuffer.intensities, c.zbuffer.intensities);
}

TEST(GenerateSample, NoiseAddsPoints) {
  DatagenConfig cfg;
  cfg.resolution = 16;
  cfg.points_per_cloud = 500;
  cfg.noise_fraction = 0.2;
  EXPECT_EQ(generate_sample(cfg, 1, 0).cloud.size(), 600u);
}

// Points must land inside the rendered object. With a 1x1 stamp each bright pixel is the
// rounded projection of a point; the 5x5 stamp widens coverage by two pixels, plus one
// for rounding, so the stamped z-buffer is checked against a 3-pixel neighborhood.
TEST(MakeDataset, SilhouetteConsistency) {
  DatagenConfig cfg;
  cfg.resolution = 48;
  cfg.points_per_cloud = 2000;
  const int R = cfg.resolution;
  const auto data = make_dataset(100, cfg, 2024);
  ZBufferParams point_only = cfg.zbuffer;
  point_only.window = 1;
  std::size_t bright = 0, opaque = 0, stamped = 0, stamped_near = 0;
  for (const auto& s : data) {
    ASSERT_EQ(s.zbuffer.width, R);
    ASSERT_EQ(s.target.width, R);
    const auto z1 = rasterize(project(s.cloud, cfg.camera()), point_only, R, R);
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x) {
        if (z1.at(x, y) > 0.5f) {
          ++bright;
          opaque += s.target.at(x, y, 3) > 0.0f;
        }
        if (s.zbuffer.at(x, y) > 0.5f) {
          ++stamped;
          bool near = false;
          for (int dy = -3; dy <= 3 && !near; ++dy)
            for (int dx = -3; dx <= 3 && !near; ++dx) {
              const int xx = x + dx, yy = y + dy;
              near = xx >= 0 && yy >= 0 && xx < R && yy < R && s.target.at(xx, yy, 3) > 0.0f;
            }
          stamped_near += near;
        }
      }
  }
  ASSERT_GT(bright, 1000u);
  EXPECT_GE(double(opaque) / double(bright), 0.95);
  EXPECT_GE(double(stamped_near) / double(stamped), 0.99);
}

}  // namespace
}  // namespace pointshade
