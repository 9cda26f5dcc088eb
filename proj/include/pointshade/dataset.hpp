// SPDX-License-Identifier: Apache-2.0
#pragma once

// On-disk dataset layout:
//   <root>/manifest.txt            key=value generator config and per-sample seeds
//   <root>/sample_NNNNNN/zbuffer.bin   "Z2PZ", u32 version, u32 width, u32 height,
//                                      f64 alpha, f64 beta, u32 window, f32 data
//   <root>/sample_NNNNNN/settings.txt  key=value
//   <root>/sample_NNNNNN/target.png    8-bit RGBA

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pointshade/datagen.hpp"
#include "pointshade/io.hpp"

namespace pointshade {

inline constexpr char kZBufferMagic[4] = {'Z', '2', 'P', 'Z'};
inline constexpr std::uint32_t kZBufferVersion = 1;

using KeyValues = std::map<std::string, std::string>;

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  const auto lines = detail::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view l = lines[i];
    if (detail::blank(l) || l.front() == '#') continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) throw ParseError(i + 1, "expected key=value");
    auto trim = [](std::string_view s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
      return s;
    };
    kv[std::string(trim(l.substr(0, eq)))] = std::string(trim(l.substr(eq + 1)));
  }
  return kv;
}

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline double kv_double(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("missing key '" + key + "'");
  auto v = detail::parse_double(it->second);
  if (!v) throw FormatError("invalid number for '" + key + "': " + it->second);
  return *v;
}

inline std::string format_settings(const Settings& s) {
  KeyValues kv{{"color_r", format_double(s.color[0])},
               {"color_g", format_double(s.color[1])},
               {"color_b", format_double(s.color[2])},
               {"light_azimuth", format_double(s.light.azimuth)},
               {"light_elevation", format_double(s.light.elevation)},
               {"light_radius", format_double(s.light.radius)}};
  if (s.material) {
    kv["material_metallic"] = format_double(s.material->metallic);
    kv["material_roughness"] = format_double(s.material->roughness);
  }
  return format_key_values(kv);
}

inline Settings parse_settings(std::string_view text) {
  const KeyValues kv = parse_key_values(text);
  Settings s;
  s.color = {kv_double(kv, "color_r"), kv_double(kv, "color_g"), kv_double(kv, "color_b")};
  s.light = {kv_double(kv, "light_azimuth"), kv_double(kv, "light_elevation"),
             kv_double(kv, "light_radius")};
  if (kv.count("material_metallic") || kv.count("material_roughness")) {
    s.material = Material{kv_double(kv, "material_metallic"), kv_double(kv, "material_roughness")};
  }
  return s;
}

inline std::string serialize_zbuffer(const ZBufferImage& z) {
  detail::ByteWriter w;
  w.bytes(std::string_view(kZBufferMagic, 4));
  w.put(kZBufferVersion);
  w.put(std::uint32_t(z.width));
  w.put(std::uint32_t(z.height));
  w.put(z.params.alpha);
  w.put(z.params.beta);
  w.put(std::uint32_t(z.params.window));
  for (float v : z.intensities) w.put(v);
  return w.take();
}

inline ZBufferImage deserialize_zbuffer(std::string_view data) {
  detail::ByteReader r(data);
  if (r.bytes(4, "magic") != std::string_view(kZBufferMagic, 4)) {
    throw FormatError("not a z-buffer file (bad magic)");
  }
  if (const auto v = r.get<std::uint32_t>("version"); v != kZBufferVersion) {
    throw FormatError("unsupported z-buffer version " + std::to_string(v));
  }
  ZBufferImage z;
  z.width = int(r.get<std::uint32_t>("width"));
  z.height = int(r.get<std::uint32_t>("height"));
  z.params.alpha = r.get<double>("alpha");
  z.params.beta = r.get<double>("beta");
  z.params.window = int(r.get<std::uint32_t>("window"));
  const std::uint64_t n = std::uint64_t(std::uint32_t(z.width)) * std::uint32_t(z.height);
  if (z.width <= 0 || z.height <= 0 || n * 4 != r.remaining()) {
    throw FormatError("z-buffer payload size does not match its header");
  }
  z.intensities.resize(n);
  for (float& v : z.intensities) v = r.get<float>("data");
  return z;
}

inline std::filesystem::path sample_dir(const std::filesystem::path& root, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "sample_%06zu", index);
  return root / name;
}

inline void write_sample(const std::filesystem::path& dir, const ZBufferImage& zbuffer,
                         const Settings& settings, const RgbaImage& target) {
  std::filesystem::create_directories(dir);
  write_file(dir / "zbuffer.bin", serialize_zbuffer(zbuffer));
  write_file(dir / "settings.txt", format_settings(settings));
  write_png_rgba(target, dir / "target.png");
}

inline TrainingExample read_sample(const std::filesystem::path& dir) {
  TrainingExample ex;
  ex.zbuffer = deserialize_zbuffer(read_file(dir / "zbuffer.bin"));
  ex.settings = parse_settings(read_file(dir / "settings.txt"));
  ex.target = to_float_image(read_png_rgba(dir / "target.png"));
  if (ex.target.width != ex.zbuffer.width || ex.target.height != ex.zbuffer.height) {
    throw FormatError(dir.string() + ": target and z-buffer sizes differ");
  }
  return ex;
}

inline KeyValues manifest_for(const DatagenConfig& c, int count, std::uint64_t seed) {
  return {{"format", "pointshade-dataset-1"},
          {"count", std::to_string(count)},
          {"seed", std::to_string(seed)},
          {"resolution", std::to_string(c.resolution)},
          {"points_per_cloud", std::to_string(c.points_per_cloud)},
          {"noise_fraction", format_double(c.noise_fraction)},
          {"material_control", c.material_control ? "1" : "0"},
          {"zbuffer_alpha", format_double(c.zbuffer.alpha)},
          {"zbuffer_beta", format_double(c.zbuffer.beta)},
          {"zbuffer_window", std::to_string(c.zbuffer.window)},
          {"camera_distance", format_double(c.camera_distance)},
          {"camera_pitch_deg", format_double(c.camera_pitch_deg)},
          {"focal_fraction", format_double(c.focal_fraction)},
          {"light_radius", format_double(c.light_radius)},
          {"light_half_extent", format_double(c.light_half_extent)},
          {"light_samples_per_side", std::to_string(c.light_samples_per_side)},
          {"ambient", format_double(c.ambient)},
          {"diffuse", format_double(c.diffuse)}};
}

struct DatasetManifest {
  int count = 0;
  std::uint64_t seed = 0;
  DatagenConfig config;
  std::vector<std::uint64_t> sample_seeds;
};

inline DatasetManifest read_manifest(const std::filesystem::path& root) {
  const KeyValues kv = parse_key_values(read_file(root / "manifest.txt"));
  if (auto it = kv.find("format"); it == kv.end() || it->second != "pointshade-dataset-1") {
    throw FormatError(root.string() + ": unrecognized dataset manifest");
  }
  DatasetManifest m;
  m.count = int(kv_double(kv, "count"));
  m.seed = std::stoull(kv.at("seed"));
  DatagenConfig& c = m.config;
  c.resolution = int(kv_double(kv, "resolution"));
  c.points_per_cloud = int(kv_double(kv, "points_per_cloud"));
  c.noise_fraction = kv_double(kv, "noise_fraction");
  c.material_control = kv_double(kv, "material_control") != 0.0;
  c.zbuffer.alpha = kv_double(kv, "zbuffer_alpha");
  c.zbuffer.beta = kv_double(kv, "zbuffer_beta");
  c.zbuffer.window = int(kv_double(kv, "zbuffer_window"));
  c.camera_distance = kv_double(kv, "camera_distance");
  c.camera_pitch_deg = kv_double(kv, "camera_pitch_deg");
  c.focal_fraction = kv_double(kv, "focal_fraction");
  c.light_radius = kv_double(kv, "light_radius");
  c.light_half_extent = kv_double(kv, "light_half_extent");
  c.light_samples_per_side = int(kv_double(kv, "light_samples_per_side"));
  c.ambient = kv_double(kv, "ambient");
  c.diffuse = kv_double(kv, "diffuse");
  for (int i = 0; i < m.count; ++i) {
    char key[32];
    std::snprintf(key, sizeof(key), "sample.%06d.seed", i);
    auto it = kv.find(key);
    m.sample_seeds.push_back(it == kv.end() ? 0 : std::stoull(it->second));
  }
  return m;
}

inline void write_dataset(const std::filesystem::path& root, const std::vector<SceneSample>& samples,
                          const DatagenConfig& config, std::uint64_t seed) {
  std::filesystem::create_directories(root);
  KeyValues kv = manifest_for(config, int(samples.size()), seed);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    write_sample(sample_dir(root, i), samples[i].zbuffer, samples[i].settings, samples[i].target);
    char key[32];
    std::snprintf(key, sizeof(key), "sample.%06zu.seed", i);
    kv[key] = std::to_string(samples[i].seed);
  }
  write_file(root / "manifest.txt", format_key_values(kv));
}

inline std::vector<TrainingExample> read_dataset(const std::filesystem::path& root,
                                                 DatasetManifest* manifest = nullptr) {
  DatasetManifest m = read_manifest(root);
  std::vector<TrainingExample> out;
  out.reserve(std::size_t(m.count));
  for (int i = 0; i < m.count; ++i) out.push_back(read_sample(sample_dir(root, std::size_t(i))));
  if (out.empty()) throw FormatError(root.string() + ": dataset is empty");
  if (manifest) *manifest = std::move(m);
  return out;
}

}  // namespace pointshade
