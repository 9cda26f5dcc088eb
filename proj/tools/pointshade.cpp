// SPDX-License-Identifier: Apache-2.0
// Command-line front end: datagen, train, render, bench, serve.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "pointshade/dataset.hpp"
#include "pointshade/pipeline.hpp"
#include "pointshade/service.hpp"
#include "pointshade/training.hpp"

namespace fs = std::filesystem;
using namespace pointshade;

namespace {

struct DatagenArgs {
  int count = 100;
  int resolution = 64;
  std::uint64_t seed = 0;
  double noise = 0.0;
  int points = 4000;
  bool material = false;
  std::string out_dir;
};

struct TrainArgs {
  std::string data;
  int steps = 1000;
  double lr = 1e-4;
  int batch = 1;
  int warmup = 0;
  std::string mode = "adain";
  bool no_encoding = false;
  int levels = 4;
  int base_channels = 64;
  int style_dim = 512;
  std::uint64_t seed = 0;
  std::uint64_t frequency_seed = 0;
  int checkpoint_every = 0;
  std::string out;
  std::string loss_csv;
};

struct RenderArgs {
  std::string model;
  std::string cloud;
  std::vector<double> color{0.8, 0.8, 0.8};
  std::vector<double> light{45.0, 45.0};
  std::vector<double> camera;
  std::vector<double> material;
  int resolution = 0;
  std::string out = "render.png";
};

struct BenchArgs {
  std::string model;
  int points = 5000;
  int resolution = 256;
  int repeat = 5;
  int levels = 4;
  int base_channels = 64;
  std::string out;
};

struct ServeArgs {
  std::string model;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  int max_resolution = 1024;
};

Settings settings_from(const RenderArgs& a, double default_radius) {
  if (a.color.size() != 3) throw CLI::ValidationError("--color", "expects r,g,b");
  if (a.light.size() != 2 && a.light.size() != 3) {
    throw CLI::ValidationError("--light", "expects azimuth,elevation[,radius]");
  }
  Settings s;
  s.color = {a.color[0], a.color[1], a.color[2]};
  s.light = {deg_to_rad(a.light[0]), deg_to_rad(a.light[1]),
             a.light.size() == 3 ? a.light[2] : default_radius};
  if (!a.material.empty()) {
    if (a.material.size() != 2) throw CLI::ValidationError("--material", "expects metallic,roughness");
    s.material = Material{a.material[0], a.material[1]};
  }
  return s;
}

int run_datagen(const DatagenArgs& a) {
  if (a.resolution % 16 != 0) {
    std::cerr << "warning: resolution " << a.resolution
              << " is not a multiple of 16; a default 4-level network cannot train on it\n";
  }
  DatagenConfig cfg;
  cfg.resolution = a.resolution;
  cfg.noise_fraction = a.noise;
  cfg.points_per_cloud = a.points;
  cfg.material_control = a.material;
  const fs::path root = a.out_dir;
  fs::create_directories(root);
  KeyValues manifest = manifest_for(cfg, a.count, a.seed);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < a.count; ++i) {
    const SceneSample s = generate_sample(cfg, a.seed, std::uint64_t(i));
    write_sample(sample_dir(root, std::size_t(i)), s.zbuffer, s.settings, s.target);
    char key[32];
    std::snprintf(key, sizeof(key), "sample.%06d.seed", i);
    manifest[key] = std::to_string(s.seed);
    if ((i + 1) % 100 == 0) std::cerr << "generated " << (i + 1) << "/" << a.count << "\n";
  }
  write_file(root / "manifest.txt", format_key_values(manifest));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "wrote " << a.count << " samples to " << root.string() << " in " << secs << " s\n";
  return 0;
}

RenderDefaults defaults_from(const DatagenConfig& c) {
  RenderDefaults d;
  d.zbuffer = c.zbuffer;
  d.resolution = c.resolution;
  d.camera_distance = c.camera_distance;
  d.camera_pitch_deg = c.camera_pitch_deg;
  d.focal_fraction = c.focal_fraction;
  d.light_radius = c.light_radius;
  return d;
}

int run_train(const TrainArgs& a) {
  DatasetManifest manifest;
  const auto data = read_dataset(a.data, &manifest);
  UNetConfig c;
  c.levels = a.levels;
  c.base_channels = a.base_channels;
  c.style_dim = a.style_dim;
  c.settings_mode = a.mode == "append" ? SettingsMode::kFeatureAppend : SettingsMode::kAdaIn;
  c.encoding_enabled = !a.no_encoding;
  c.material_control = manifest.config.material_control;
  c.init_seed = a.seed;
  Model<float> model = Model<float>::create(c, a.frequency_seed);
  model.check_input_size(std::size_t(data[0].zbuffer.height), std::size_t(data[0].zbuffer.width));
  std::cerr << "model: " << model.parameter_count() << " parameters, " << data.size() << " examples\n";

  TrainConfig tc;
  tc.adam.learning_rate = a.lr;
  tc.batch_size = a.batch;
  tc.steps = a.steps;
  tc.warmup_steps = a.warmup;
  tc.seed = a.seed;
  tc.checkpoint_every = a.checkpoint_every;

  const std::string csv_path = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << "step,total,mse_rgb,l1_mag,l1_alpha\n";
  const RenderDefaults render = defaults_from(manifest.config);

  TrainCallbacks<float> cb;
  cb.on_step = [&](const LossRecord& r) {
    csv << r.step << ',' << format_double(r.total) << ',' << format_double(r.components.mse_rgb) << ','
        << format_double(r.components.l1_magnitude) << ',' << format_double(r.components.l1_alpha) << '\n';
    if (r.step % 100 == 0) std::cerr << "step " << r.step << " loss " << r.total << "\n";
  };
  cb.on_checkpoint = [&](int step, const Model<float>& m) {
    save_model(make_bundle(m, render, {a.seed, std::uint64_t(step), 0.0f}),
               a.out + ".step" + std::to_string(step));
  };
  train(model, std::span<const TrainingExample>(data), tc, cb);
  csv.flush();

  const double final_loss = evaluate_loss(model, std::span<const TrainingExample>(data), tc.weights).first;
  save_model(make_bundle(model, render, {a.seed, std::uint64_t(a.steps), float(final_loss)}), a.out);
  std::cout << "final loss " << final_loss << "\nsaved " << a.out << "\n";
  return 0;
}

void print_timings(const StageTimings& t) {
  std::printf("project_ms=%.3f\nzbuffer_ms=%.3f\nforward_ms=%.3f\ntotal_ms=%.3f\n", t.project_ms,
              t.zbuffer_ms, t.forward_ms, t.total_ms);
}

int run_render(const RenderArgs& a) {
  const ModelBundle bundle = load_model(a.model);
  const Model<float> model = instantiate(bundle);
  const RenderDefaults& d = bundle.render;
  const Settings s = settings_from(a, d.light_radius);
  CameraPose pose{0.0, deg_to_rad(d.camera_pitch_deg), d.camera_distance};
  if (!a.camera.empty()) {
    if (a.camera.size() != 3) throw CLI::ValidationError("--camera", "expects yaw,pitch,distance");
    pose = {deg_to_rad(a.camera[0]), deg_to_rad(a.camera[1]), a.camera[2]};
  }
  validate_render_settings(s, pose, model.config().material_control);
  const NormalizedCloud cloud = normalize_cloud(read_point_cloud(a.cloud));
  const int res = a.resolution > 0 ? a.resolution : d.resolution;
  const RenderResult r = render_preview(model, cloud.cloud, s, pose, res, d);
  write_png_rgba(r.image, a.out);
  print_timings(r.timings);
  return 0;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int run_bench(const BenchArgs& a) {
  Model<float> model;
  RenderDefaults d;
  if (!a.model.empty()) {
    const ModelBundle b = load_model(a.model);
    model = instantiate(b);
    d = b.render;
  } else {
    UNetConfig c;
    c.levels = a.levels;
    c.base_channels = a.base_channels;
    model = Model<float>::create(c, 0);
  }
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  PointCloud cloud;
  for (int i = 0; i < a.points; ++i) cloud.points.push_back(normalized(Vec3{g(rng), g(rng), g(rng)}));
  const auto nc = normalize_cloud(cloud);
  Settings s;
  s.light = {deg_to_rad(45.0), deg_to_rad(45.0), d.light_radius};
  if (model.config().material_control) s.material = Material{0.5, 0.5};
  std::vector<double> project, zbuffer, forward, total;
  for (int i = 0; i < a.repeat; ++i) {
    const auto r = render_preview(model, nc.cloud, s, {0.0, deg_to_rad(d.camera_pitch_deg), d.camera_distance},
                                  a.resolution, d);
    project.push_back(r.timings.project_ms);
    zbuffer.push_back(r.timings.zbuffer_ms);
    forward.push_back(r.timings.forward_ms);
    total.push_back(r.timings.total_ms);
  }
  char line[256];
  std::snprintf(line, sizeof(line), "%d,%d,%d,%.3f,%.3f,%.3f,%.3f\n", a.points, a.resolution, a.repeat,
                median(project), median(zbuffer), median(forward), median(total));
  const std::string header = "points,resolution,repeat,project_ms,zbuffer_ms,forward_ms,total_ms\n";
  std::cout << header << line;
  if (!a.out.empty()) write_file(a.out, header + line);
  return 0;
}

RenderService* g_service = nullptr;

int run_serve(const ServeArgs& a) {
  const ModelBundle bundle = load_model(a.model);
  ServiceOptions opts;
  opts.static_dir = a.static_dir;
  opts.max_resolution = a.max_resolution;
  RenderService service(instantiate(bundle), bundle.render, opts);
  const int port = service.bind(a.host, a.port);
  if (port < 0) throw std::runtime_error("cannot bind " + a.host + ":" + std::to_string(a.port));
  g_service = &service;
  std::signal(SIGINT, [](int) { g_service->stop(); });
  std::signal(SIGTERM, [](int) { g_service->stop(); });
  std::cout << "listening on http://" << a.host << ":" << port << "\n" << std::flush;
  service.listen_after_bind();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pointshade: neural previews of point clouds"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value file supplying option defaults");

  DatagenArgs dg;
  auto* datagen = app.add_subcommand("datagen", "generate synthetic training pairs");
  datagen->add_option("--count", dg.count)->check(CLI::PositiveNumber);
  datagen->add_option("--resolution", dg.resolution)->check(CLI::PositiveNumber);
  datagen->add_option("--seed", dg.seed);
  datagen->add_option("--noise", dg.noise, "fraction of points displaced by Gaussian noise")
      ->check(CLI::Range(0.0, 1.0));
  datagen->add_option("--points", dg.points, "points per cloud")->check(CLI::PositiveNumber);
  datagen->add_flag("--material", dg.material, "add metallic/roughness settings");
  datagen->add_option("--out-dir", dg.out_dir)->required();

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "train a model on a generated dataset");
  trainc->add_option("--data", tr.data)->required()->check(CLI::ExistingDirectory);
  trainc->add_option("--steps", tr.steps)->check(CLI::NonNegativeNumber);
  trainc->add_option("--lr", tr.lr)->check(CLI::NonNegativeNumber);
  trainc->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
  trainc->add_option("--warmup", tr.warmup, "steps of linear learning-rate warmup")->check(CLI::NonNegativeNumber);
  trainc->add_option("--mode", tr.mode)->check(CLI::IsMember({"adain", "append"}));
  trainc->add_flag("--no-encoding", tr.no_encoding);
  trainc->add_option("--levels", tr.levels)->check(CLI::Range(1, 8));
  trainc->add_option("--base-channels", tr.base_channels)->check(CLI::PositiveNumber);
  trainc->add_option("--style-dim", tr.style_dim)->check(CLI::PositiveNumber);
  trainc->add_option("--seed", tr.seed, "initialization and shuffling seed");
  trainc->add_option("--frequency-seed", tr.frequency_seed);
  trainc->add_option("--checkpoint-every", tr.checkpoint_every)->check(CLI::NonNegativeNumber);
  trainc->add_option("--out", tr.out)->required();
  trainc->add_option("--loss-csv", tr.loss_csv, "defaults to <out>.loss.csv");

  RenderArgs rd;
  auto* render = app.add_subcommand("render", "render a point cloud to a PNG");
  render->add_option("--model", rd.model)->required()->check(CLI::ExistingFile);
  render->add_option("--cloud", rd.cloud)->required()->check(CLI::ExistingFile);
  render->add_option("--color", rd.color, "r,g,b in [0,1]")->delimiter(',');
  render->add_option("--light", rd.light, "azimuth,elevation[,radius] in degrees")->delimiter(',');
  render->add_option("--camera", rd.camera, "yaw,pitch,distance in degrees")->delimiter(',');
  render->add_option("--material", rd.material, "metallic,roughness")->delimiter(',');
  render->add_option("--resolution", rd.resolution)->check(CLI::PositiveNumber);
  render->add_option("--out", rd.out);

  BenchArgs bn;
  auto* bench = app.add_subcommand("bench", "time the render pipeline stages");
  bench->add_option("--model", bn.model, "model file; a random model is used when omitted")
      ->check(CLI::ExistingFile);
  bench->add_option("--points", bn.points)->check(CLI::PositiveNumber);
  bench->add_option("--resolution", bn.resolution)->check(CLI::PositiveNumber);
  bench->add_option("--repeat", bn.repeat)->check(CLI::PositiveNumber);
  bench->add_option("--levels", bn.levels)->check(CLI::Range(1, 8));
  bench->add_option("--base-channels", bn.base_channels)->check(CLI::PositiveNumber);
  bench->add_option("--out", bn.out, "also write the CSV here");

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "run the HTTP render service");
  serve->add_option("--model", sv.model)->required()->check(CLI::ExistingFile);
  serve->add_option("--host", sv.host);
  serve->add_option("--port", sv.port)->check(CLI::Range(0, 65535));
  serve->add_option("--static-dir", sv.static_dir)->check(CLI::ExistingDirectory);
  serve->add_option("--max-resolution", sv.max_resolution)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*datagen) return run_datagen(dg);
    if (*trainc) return run_train(tr);
    if (*render) return run_render(rd);
    if (*bench) return run_bench(bn);
    if (*serve) return run_serve(sv);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
