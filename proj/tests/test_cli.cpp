// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <sys/wait.h>

#include <httplib.h>

#include "pointshade/dataset.hpp"

namespace pointshade {
namespace {

namespace fs = std::filesystem;
const std::string kCli = POINTSHADE_CLI;
const fs::path kFixtures = POINTSHADE_FIXTURES;

struct CliResult {
  int code = -1;
  std::string out;  // stdout and stderr interleaved
};

CliResult run(const std::string& args) {
  CliResult r;
  FILE* p = popen((kCli + " " + args + " 2>&1").c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pointshade_test_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void make_model(const std::string& name, const std::string& extra = "") {
    ASSERT_EQ(run("datagen --count 3 --resolution 16 --points 800 --seed 4 --out-dir " + path("ds")).code, 0);
    const CliResult t = run("train --data " + path("ds") + " --steps 2 --levels 2 --base-channels 4 --style-dim 16 --out " +
                      path(name) + " " + extra);
    ASSERT_EQ(t.code, 0) << t.out;
  }

  fs::path dir_;
};

TEST_F(Cli, DatagenWritesReadableDataset) {
  const CliResult r = run("datagen --count 3 --resolution 16 --points 500 --seed 9 --noise 0.1 --out-dir " + path("ds"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("warning"), std::string::npos);
  DatasetManifest m;
  const auto data = read_dataset(path("ds"), &m);
  EXPECT_EQ(data.size(), 3u);
  EXPECT_EQ(m.seed, 9u);
  EXPECT_EQ(m.config.noise_fraction, 0.1);
  EXPECT_EQ(data[0].zbuffer.width, 16);
  // Identical to the library generator.
  DatagenConfig cfg = m.config;
  EXPECT_EQ(data[2].zbuffer.intensities, generate_sample(cfg, 9, 2).zbuffer.intensities);
}

TEST_F(Cli, DatagenWarnsOnIndivisibleResolution) {
  const CliResult r = run("datagen --count 1 --resolution 24 --points 200 --out-dir " + path("ds"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("warning: resolution 24"), std::string::npos) << r.out;
}

TEST_F(Cli, ConfigFileSuppliesDefaults) {
  write_file(path("c.ini"), "[datagen]\ncount=2\nresolution=16\npoints=300\n");
  const CliResult r = run("datagen --config " + path("c.ini") + " --out-dir " + path("ds"));
  ASSERT_EQ(r.code, 0) << r.out;
  DatasetManifest m;
  EXPECT_EQ(read_dataset(path("ds"), &m).size(), 2u);
  EXPECT_EQ(m.config.points_per_cloud, 300);
}

TEST_F(Cli, TrainWritesModelAndLossCsv) {
  make_model("m.z2pw", "--mode append --no-encoding");
  const ModelBundle b = load_model(path("m.z2pw"));
  EXPECT_EQ(b.config.settings_mode, SettingsMode::kFeatureAppend);
  EXPECT_FALSE(b.config.encoding_enabled);
  EXPECT_EQ(b.provenance.steps, 2u);
  EXPECT_GT(b.provenance.loss, 0.0f);
  EXPECT_EQ(b.render.resolution, 16);
  const std::string text = read_file(path("m.z2pw.loss.csv"));
  const auto lines = detail::split_lines(text);
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines[0], "step,total,mse_rgb,l1_mag,l1_alpha");
  EXPECT_EQ(lines[1].substr(0, 2), "0,");
  EXPECT_EQ(lines[2].substr(0, 2), "1,");
}

TEST_F(Cli, TrainZeroStepsSavesInitializedModel) {
  ASSERT_EQ(run("datagen --count 1 --resolution 16 --points 200 --out-dir " + path("ds")).code, 0);
  const CliResult r = run("train --data " + path("ds") + " --steps 0 --levels 2 --base-channels 4 --style-dim 16 --seed 6 --out " +
                    path("m.z2pw"));
  ASSERT_EQ(r.code, 0) << r.out;
  UNetConfig c;
  c.levels = 2;
  c.base_channels = 4;
  c.style_dim = 16;
  c.init_seed = 6;
  const auto fresh = Model<float>::create(c, 0);
  const auto loaded = instantiate(load_model(path("m.z2pw")));
  for (std::size_t i = 0; i < fresh.parameters().size(); ++i)
    EXPECT_EQ(loaded.parameters()[i].value, fresh.parameters()[i].value) << fresh.parameters()[i].name;
}

TEST_F(Cli, RenderWritesPngAndTimings) {
  make_model("m.z2pw");
  const CliResult r = run("render --model " + path("m.z2pw") + " --cloud " + (kFixtures / "sphere.xyz").string() +
                    " --color 1,0.5,0 --light 30,40,3 --camera 10,20,2.2 --resolution 32 --out " + path("r.png"));
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* k : {"project_ms=", "zbuffer_ms=", "forward_ms=", "total_ms="})
    EXPECT_NE(r.out.find(k), std::string::npos) << k;
  const auto img = read_png_rgba(path("r.png"));
  EXPECT_EQ(img.width, 32);
  EXPECT_EQ(img.height, 32);
}

TEST_F(Cli, RenderErrorsUseExitCodes) {
  make_model("m.z2pw");
  const std::string base = "render --model " + path("m.z2pw") + " --out " + path("r.png") + " --cloud ";
  write_file(path("bad.xyz"), "1 2 3\n4 5\n");
  const CliResult parse = run(base + path("bad.xyz"));
  EXPECT_EQ(parse.code, 2);
  EXPECT_NE(parse.out.find("line 2"), std::string::npos) << parse.out;
  EXPECT_EQ(run(base + path("missing.xyz")).code, 1);
  EXPECT_EQ(run(base + (kFixtures / "sphere.xyz").string() + " --color 2,0,0").code, 2);
  EXPECT_EQ(run(base + (kFixtures / "sphere.xyz").string() + " --resolution 30").code, 2);
  EXPECT_EQ(run(base + (kFixtures / "sphere.xyz").string() + " --light 1").code, 1);
}

TEST_F(Cli, BenchPrintsCsv) {
  const CliResult r = run("bench --points 500 --resolution 32 --repeat 3 --levels 2 --base-channels 4 --out " +
                    path("b.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string text = read_file(path("b.csv"));
  const auto lines = detail::split_lines(text);
  ASSERT_GE(lines.size(), 2u);
  EXPECT_EQ(lines[0], "points,resolution,repeat,project_ms,zbuffer_ms,forward_ms,total_ms");
  EXPECT_EQ(lines[1].substr(0, 10), "500,32,3,0");
}

TEST_F(Cli, UsageErrors) {
  const CliResult serve = run("serve");
  EXPECT_EQ(serve.code, 1);
  EXPECT_NE(serve.out.find("--model"), std::string::npos);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("train --data " + path("") + " --out x --mode sideways").code, 1);
  EXPECT_EQ(run("train --data " + path("") + " --out x --warmup -5").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, ServeAnswersHealthAndRender) {
  make_model("m.z2pw");
  FILE* p = popen(("sh -c 'echo $$; exec " + kCli + " serve --port 0 --model " + path("m.z2pw") + "'").c_str(), "r");
  ASSERT_TRUE(p);
  char line[256];
  ASSERT_TRUE(std::fgets(line, sizeof(line), p));
  const pid_t pid = pid_t(std::stol(line));
  ASSERT_TRUE(std::fgets(line, sizeof(line), p));
  const std::string listening = line;
  const auto colon = listening.rfind(':');
  ASSERT_NE(colon, std::string::npos) << listening;
  const int port = std::stoi(listening.substr(colon + 1));

  httplib::Client c("127.0.0.1", port);
  c.set_read_timeout(60, 0);
  auto h = c.Get("/api/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->body, "ok");
  auto up = c.Post("/api/pointclouds", read_file(kFixtures / "sphere.xyz"), "text/plain");
  ASSERT_TRUE(up);
  EXPECT_EQ(up->status, 200);
  auto r = c.Post("/api/render",
                  R"({"cloud_id":"pc-1","settings":{"color":[1,1,1],"light":{"az":0,"el":45}},"resolution":16})",
                  "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200) << r->body;
  kill(pid, SIGTERM);
  const int status = pclose(p);
  EXPECT_TRUE(WIFEXITED(status) || WIFSIGNALED(status));
}

}  // namespace
}  // namespace pointshade
