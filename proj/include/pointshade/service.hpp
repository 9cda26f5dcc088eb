// SPDX-License-Identifier: Apache-2.0
#pragma once

// Local HTTP render service. The model is loaded once and only read afterwards;
// uploaded clouds live in memory for the lifetime of the process.
//
//   GET  /api/health       -> "ok"
//   GET  /api/model        -> configuration, settings length, accepted ranges
//   GET  /api/pointclouds  -> [{cloud_id, point_count}]
//   POST /api/pointclouds  -> {cloud_id, point_count, normalization}
//   POST /api/render       -> image/png, X-Time-{Project,Zbuffer,Forward,Total}-Ms

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pointshade/io.hpp"
#include "pointshade/pipeline.hpp"

namespace pointshade {

struct ServiceOptions {
  std::filesystem::path static_dir;  // served at "/" when non-empty
  int max_resolution = 1024;
  SettingsRanges ranges;
};

/// Thread-safe in-memory store of normalized clouds (uploads exclusive, reads shared).
class CloudStore {
 public:
  struct Entry {
    std::string id;
    NormalizedCloud cloud;
  };

  std::shared_ptr<const Entry> add(NormalizedCloud cloud) {
    std::unique_lock lock(mutex_);
    auto e = std::make_shared<Entry>();
    e->id = "pc-" + std::to_string(++counter_);
    e->cloud = std::move(cloud);
    entries_.emplace(e->id, e);
    order_.push_back(e->id);
    return e;
  }

  std::shared_ptr<const Entry> find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : it->second;
  }

  std::vector<std::shared_ptr<const Entry>> list() const {
    std::shared_lock lock(mutex_);
    std::vector<std::shared_ptr<const Entry>> out;
    for (const auto& id : order_) out.push_back(entries_.at(id));
    return out;
  }

 private:
  mutable std::shared_mutex mutex_;
  std::uint64_t counter_ = 0;
  std::map<std::string, std::shared_ptr<const Entry>> entries_;
  std::vector<std::string> order_;
};

/// Maps a request failure to an HTTP status.
class RequestError : public std::runtime_error {
 public:
  RequestError(int status, const std::string& msg) : std::runtime_error(msg), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

inline const char* settings_mode_name(SettingsMode m) {
  return m == SettingsMode::kAdaIn ? "adain" : "append";
}

struct RenderRequest {
  std::string cloud_id;
  std::optional<PointCloud> points;
  Settings settings;
  CameraPose camera;
  int resolution = 0;
};

/// Parses a render request. Angles are read in degrees.
inline RenderRequest parse_render_request(const nlohmann::json& j, const RenderDefaults& d) {
  using nlohmann::json;
  auto bad = [](const std::string& m) { throw RequestError(400, m); };
  if (!j.is_object()) bad("request body must be a JSON object");
  auto number = [&](const json& obj, const char* key, double fallback, bool required) {
    if (!obj.contains(key)) {
      if (required) bad(std::string("missing field '") + key + "'");
      return fallback;
    }
    if (!obj[key].is_number()) bad(std::string("field '") + key + "' must be a number");
    return obj[key].get<double>();
  };

  RenderRequest r;
  const bool has_id = j.contains("cloud_id");
  const bool has_points = j.contains("points");
  if (has_id == has_points) bad("exactly one of 'cloud_id' and 'points' is required");
  if (has_id) {
    if (!j["cloud_id"].is_string()) bad("'cloud_id' must be a string");
    r.cloud_id = j["cloud_id"].get<std::string>();
  } else {
    const json& pts = j["points"];
    if (!pts.is_array() || pts.empty()) bad("'points' must be a non-empty array of [x, y, z]");
    PointCloud cloud;
    for (const json& p : pts) {
      if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() ||
          !p[2].is_number()) {
        bad("'points' entries must be [x, y, z] numbers");
      }
      cloud.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    r.points = std::move(cloud);
  }

  if (!j.contains("settings") || !j["settings"].is_object()) bad("missing object 'settings'");
  const json& s = j["settings"];
  if (!s.contains("color") || !s["color"].is_array() || s["color"].size() != 3) {
    bad("'settings.color' must be [r, g, b]");
  }
  for (int c = 0; c < 3; ++c) {
    if (!s["color"][c].is_number()) bad("'settings.color' must contain numbers");
    r.settings.color[c] = s["color"][c].get<double>();
  }
  if (!s.contains("light") || !s["light"].is_object()) bad("missing object 'settings.light'");
  const json& l = s["light"];
  r.settings.light.azimuth = deg_to_rad(number(l, "az", 0.0, true));
  r.settings.light.elevation = deg_to_rad(number(l, "el", 0.0, true));
  r.settings.light.radius = number(l, "radius", d.light_radius, false);
  if (s.contains("material")) {
    const json& m = s["material"];
    if (!m.is_object()) bad("'settings.material' must be an object");
    r.settings.material = Material{number(m, "metallic", 0.0, true),
                                   number(m, "roughness", 0.0, true)};
  }

  r.camera = {0.0, deg_to_rad(d.camera_pitch_deg), d.camera_distance};
  if (j.contains("camera")) {
    const json& c = j["camera"];
    if (!c.is_object()) bad("'camera' must be an object");
    r.camera.yaw = deg_to_rad(number(c, "yaw", 0.0, false));
    r.camera.pitch = deg_to_rad(number(c, "pitch", d.camera_pitch_deg, false));
    r.camera.distance = number(c, "distance", d.camera_distance, false);
  }
  r.resolution = int(d.resolution);
  if (j.contains("resolution")) {
    if (!j["resolution"].is_number_integer()) bad("'resolution' must be an integer");
    const auto res = j["resolution"].get<std::int64_t>();
    if (res < 1 || res > 1 << 16) throw RequestError(422, "resolution out of range");
    r.resolution = int(res);
  }
  return r;
}

class RenderService {
 public:
  RenderService(Model<float> model, RenderDefaults defaults, ServiceOptions options = {})
      : model_(std::move(model)), defaults_(defaults), options_(std::move(options)) {
    routes();
  }

  RenderService(const RenderService&) = delete;
  RenderService& operator=(const RenderService&) = delete;

  /// Binds to `host`; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port) {
    if (port == 0) return server_.bind_to_any_port(host);
    return server_.bind_to_port(host, port) ? port : -1;
  }

  /// Blocks serving requests until stop().
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  void stop() { server_.stop(); }

  const Model<float>& model() const { return model_; }
  CloudStore& clouds() { return clouds_; }

  nlohmann::json model_info() const {
    const UNetConfig& c = model_.config();
    const SettingsRanges& r = options_.ranges;
    nlohmann::json ranges = {
        {"color", {0.0, 1.0}},
        {"light_azimuth_deg", {-360.0, 360.0}},
        {"light_elevation_deg", {r.min_elevation_deg, r.max_elevation_deg}},
        {"light_radius", {r.min_light_radius, r.max_light_radius}},
        {"camera_pitch_deg", {r.min_pitch_deg, r.max_pitch_deg}},
        {"camera_distance", {r.min_camera_distance, r.max_camera_distance}}};
    if (c.material_control) {
      ranges["metallic"] = {0.0, 1.0};
      ranges["roughness"] = {0.0, 1.0};
    }
    return {
        {"config",
         {{"levels", c.levels},
          {"base_channels", c.base_channels},
          {"max_channels", c.max_channels},
          {"settings_mode", settings_mode_name(c.settings_mode)},
          {"encoding_enabled", c.encoding_enabled},
          {"material_control", c.material_control},
          {"style_dim", c.style_dim},
          {"parameter_count", model_.parameter_count()}}},
        {"settings_length", c.settings_length()},
        {"resolution",
         {{"multiple_of", c.size_multiple()},
          {"default", defaults_.resolution},
          {"max", options_.max_resolution}}},
        {"angle_units", "degrees"},
        {"ranges", ranges},
        {"defaults",
         {{"camera_pitch_deg", defaults_.camera_pitch_deg},
          {"camera_distance", defaults_.camera_distance},
          {"light_radius", defaults_.light_radius}}}};
  }

  /// Full render path shared by the HTTP handler and tests.
  RenderResult render(const RenderRequest& req) const {
    std::shared_ptr<const CloudStore::Entry> entry;
    NormalizedCloud inline_cloud;
    const PointCloud* cloud = nullptr;
    if (req.points) {
      try {
        inline_cloud = normalize_cloud(*req.points);
      } catch (const std::invalid_argument& e) {
        throw RequestError(400, e.what());
      }
      cloud = &inline_cloud.cloud;
    } else {
      entry = clouds_.find(req.cloud_id);
      if (!entry) throw RequestError(404, "unknown cloud_id '" + req.cloud_id + "'");
      cloud = &entry->cloud.cloud;
    }
    try {
      validate_render_settings(req.settings, req.camera, model_.config().material_control,
                               options_.ranges);
    } catch (const SettingsRangeError& e) {
      throw RequestError(422, e.what());
    }
    if (req.resolution > options_.max_resolution) {
      throw RequestError(422, "resolution exceeds " + std::to_string(options_.max_resolution));
    }
    try {
      model_.check_input_size(std::size_t(req.resolution), std::size_t(req.resolution));
    } catch (const InputSizeError& e) {
      throw RequestError(409, e.what());
    }
    return render_preview(model_, *cloud, req.settings, req.camera, req.resolution, defaults_);
  }

 private:
  static void error(httplib::Response& res, int status, const std::string& msg,
                    std::optional<std::size_t> line = std::nullopt) {
    nlohmann::json body = {{"error", msg}};
    if (line) body["line"] = *line;
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static std::string fmt_ms(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                 {"Access-Control-Allow-Headers", "Content-Type"},
                                 {"Access-Control-Expose-Headers",
                                  "X-Time-Project-Ms, X-Time-Zbuffer-Ms, X-Time-Forward-Ms, "
                                  "X-Time-Total-Ms"}});
    server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });
    server_.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });
    server_.Get("/api/model", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(model_info().dump(), "application/json");
    });
    server_.Get("/api/pointclouds", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& e : clouds_.list()) {
        list.push_back({{"cloud_id", e->id}, {"point_count", e->cloud.cloud.size()}});
      }
      res.set_content(list.dump(), "application/json");
    });
    server_.Post("/api/pointclouds", [this](const httplib::Request& req, httplib::Response& res) {
      NormalizedCloud nc;
      try {
        nc = normalize_cloud(parse_point_cloud(req.body));
      } catch (const ParseError& e) {
        return error(res, 400, e.what(), e.line());
      } catch (const std::invalid_argument& e) {
        return error(res, 400, e.what());
      }
      const Vec3 c = nc.centroid;
      const double scale = nc.scale;
      auto entry = clouds_.add(std::move(nc));
      nlohmann::json body = {{"cloud_id", entry->id},
                             {"point_count", entry->cloud.cloud.size()},
                             {"normalization", {{"scale", scale}, {"centroid", {c.x, c.y, c.z}}}}};
      res.set_content(body.dump(), "application/json");
    });
    server_.Post("/api/render", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
          throw RequestError(400, std::string("malformed JSON: ") + e.what());
        }
        const RenderResult out = render(parse_render_request(j, defaults_));
        const auto png = encode_png_rgba(out.image);
        res.set_header("X-Time-Project-Ms", fmt_ms(out.timings.project_ms));
        res.set_header("X-Time-Zbuffer-Ms", fmt_ms(out.timings.zbuffer_ms));
        res.set_header("X-Time-Forward-Ms", fmt_ms(out.timings.forward_ms));
        res.set_header("X-Time-Total-Ms", fmt_ms(out.timings.total_ms));
        res.set_content(std::string(png.begin(), png.end()), "image/png");
      } catch (const RequestError& e) {
        error(res, e.status(), e.what());
      } catch (const std::exception& e) {
        error(res, 500, e.what());
      }
    });
    if (!options_.static_dir.empty()) {
      if (!server_.set_mount_point("/", options_.static_dir.string())) {
        throw std::invalid_argument("static directory not found: " +
                                    options_.static_dir.string());
      }
    }
  }

  httplib::Server server_;
  const Model<float> model_;
  const RenderDefaults defaults_;
  const ServiceOptions options_;
  mutable CloudStore clouds_;
};

}  // namespace pointshade
