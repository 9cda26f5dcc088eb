// SPDX-License-Identifier: Apache-2.0
#pragma once

// Point-cloud parsing (XYZ text, ASCII PLY), RGBA PNG encoding and the
// versioned model container.

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pointshade/image.hpp"
#include "pointshade/network.hpp"
#include "pointshade/projection.hpp"

namespace pointshade {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

/// Malformed input; `line` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& msg)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line),
        message_(msg) {}
  std::size_t line() const { return line_; }
  /// Diagnostic without the line prefix.
  const std::string& message() const { return message_; }

 private:
  std::size_t line_;
  std::string message_;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Point clouds

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view tok) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> parse_u64(std::string_view tok) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

// Splits into lines, dropping a trailing '\r'.
inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view l = text.substr(start, end - start);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    lines.push_back(l);
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

inline bool blank(std::string_view l) {
  return std::all_of(l.begin(), l.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace detail

/// Whitespace-separated "x y z [extra...]" rows; '#' comments and blank lines skipped.
inline PointCloud parse_xyz(std::string_view text) {
  PointCloud cloud;
  const auto lines = detail::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view l = lines[i];
    if (detail::blank(l)) continue;
    const auto toks = detail::split_ws(l);
    if (toks.front().front() == '#') continue;
    if (toks.size() < 3) throw ParseError(i + 1, "expected at least 3 coordinates");
    double xyz[3];
    for (int k = 0; k < 3; ++k) {
      auto v = detail::parse_double(toks[std::size_t(k)]);
      if (!v) throw ParseError(i + 1, "invalid coordinate '" + std::string(toks[std::size_t(k)]) + "'");
      xyz[k] = *v;
    }
    cloud.points.push_back({xyz[0], xyz[1], xyz[2]});
  }
  if (cloud.empty()) throw ParseError(0, "point cloud contains no points");
  return cloud;
}

/// ASCII PLY; reads x, y, z of the "vertex" element and ignores everything else.
inline PointCloud parse_ply(std::string_view text) {
  struct Element {
    std::string name;
    std::uint64_t count = 0;
    std::vector<std::string> props;
    std::vector<bool> is_list;
  };
  const auto lines = detail::split_lines(text);
  if (lines.empty() || detail::split_ws(lines[0]) != std::vector<std::string_view>{"ply"}) {
    throw ParseError(1, "missing 'ply' magic");
  }
  std::vector<Element> elements;
  std::size_t i = 1;
  bool format_seen = false, header_done = false;
  for (; i < lines.size(); ++i) {
    const auto toks = detail::split_ws(lines[i]);
    if (toks.empty()) continue;
    const std::string_view kw = toks[0];
    if (kw == "comment" || kw == "obj_info") continue;
    if (kw == "format") {
      if (toks.size() != 3) throw ParseError(i + 1, "malformed format line");
      if (toks[1] != "ascii") {
        throw ParseError(i + 1, "unsupported PLY format '" + std::string(toks[1]) +
                                    "' (only ascii is supported)");
      }
      format_seen = true;
    } else if (kw == "element") {
      if (toks.size() != 3) throw ParseError(i + 1, "malformed element line");
      auto n = detail::parse_u64(toks[2]);
      if (!n) throw ParseError(i + 1, "invalid element count '" + std::string(toks[2]) + "'");
      elements.push_back({std::string(toks[1]), *n, {}, {}});
    } else if (kw == "property") {
      if (elements.empty()) throw ParseError(i + 1, "property before any element");
      const bool list = toks.size() >= 2 && toks[1] == "list";
      if ((list && toks.size() != 5) || (!list && toks.size() != 3)) {
        throw ParseError(i + 1, "malformed property line");
      }
      elements.back().props.emplace_back(toks.back());
      elements.back().is_list.push_back(list);
    } else if (kw == "end_header") {
      header_done = true;
      ++i;
      break;
    } else {
      throw ParseError(i + 1, "unknown header keyword '" + std::string(kw) + "'");
    }
  }
  if (!header_done) throw ParseError(i, "missing end_header");
  if (!format_seen) throw ParseError(i, "missing format line");

  PointCloud cloud;
  bool vertex_seen = false;
  for (const Element& el : elements) {
    int xi = -1, yi = -1, zi = -1;
    const bool is_vertex = el.name == "vertex";
    if (is_vertex) {
      vertex_seen = true;
      for (std::size_t k = 0; k < el.props.size(); ++k) {
        if (el.is_list[k]) continue;
        if (el.props[k] == "x") xi = int(k);
        if (el.props[k] == "y") yi = int(k);
        if (el.props[k] == "z") zi = int(k);
      }
      if (xi < 0 || yi < 0 || zi < 0) throw ParseError(0, "element 'vertex' lacks x, y, z properties");
    }
    for (std::uint64_t r = 0; r < el.count; ++r) {
      while (i < lines.size() && detail::blank(lines[i])) ++i;
      if (i >= lines.size()) {
        throw ParseError(lines.size(), "element '" + el.name + "' declares " +
                                           std::to_string(el.count) + " entries but the file ends after " +
                                           std::to_string(r));
      }
      const auto toks = detail::split_ws(lines[i]);
      // Count tokens, expanding list properties by their leading length.
      std::size_t t = 0;
      std::vector<std::size_t> scalar_pos(el.props.size(), 0);
      for (std::size_t k = 0; k < el.props.size(); ++k) {
        if (t >= toks.size()) throw ParseError(i + 1, "too few values for element '" + el.name + "'");
        scalar_pos[k] = t;
        if (el.is_list[k]) {
          auto len = detail::parse_u64(toks[t]);
          if (!len || *len > toks.size()) {
            throw ParseError(i + 1, "invalid list length in element '" + el.name + "'");
          }
          t += 1 + *len;
        } else {
          if (!detail::parse_double(toks[t])) {
            throw ParseError(i + 1, "invalid value '" + std::string(toks[t]) + "' in element '" +
                                        el.name + "'");
          }
          t += 1;
        }
      }
      if (t != toks.size()) {
        throw ParseError(i + 1, "expected " + std::to_string(t) + " values for element '" + el.name +
                                    "', found " + std::to_string(toks.size()));
      }
      if (is_vertex) {
        cloud.points.push_back({*detail::parse_double(toks[scalar_pos[std::size_t(xi)]]),
                                *detail::parse_double(toks[scalar_pos[std::size_t(yi)]]),
                                *detail::parse_double(toks[scalar_pos[std::size_t(zi)]])});
      }
      ++i;
    }
  }
  for (; i < lines.size(); ++i) {
    if (!detail::blank(lines[i])) {
      const std::string last = elements.empty() ? "" : elements.back().name;
      throw ParseError(i + 1, "data beyond the declared count of element '" + last + "'");
    }
  }
  if (!vertex_seen) throw ParseError(0, "PLY has no 'vertex' element");
  if (cloud.empty()) throw ParseError(0, "point cloud contains no points");
  return cloud;
}

/// Detects PLY by its magic line, otherwise parses XYZ text.
inline PointCloud parse_point_cloud(std::string_view text) {
  std::string_view head = text.substr(0, std::min<std::size_t>(text.size(), 4));
  if (head.substr(0, 3) == "ply" && (head.size() == 3 || std::isspace(static_cast<unsigned char>(head[3])))) {
    return parse_ply(text);
  }
  return parse_xyz(text);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline PointCloud read_point_cloud(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_point_cloud(text);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.message());
  }
}

// ---------------------------------------------------------------------------
// PNG

struct Rgba8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // RGBA interleaved
};

inline std::uint8_t quantize_unit(float v) {
  const float c = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
  return std::uint8_t(std::lround(double(c) * 255.0));
}

inline std::vector<std::uint8_t> encode_png_rgba(const RgbaImage& img) {
  if (img.width <= 0 || img.height <= 0) throw std::invalid_argument("cannot encode an empty image");
  std::vector<std::uint8_t> raw(img.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = quantize_unit(img.pixels[i]);
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  pi.width = png_uint_32(img.width);
  pi.height = png_uint_32(img.height);
  pi.format = PNG_FORMAT_RGBA;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, raw.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("PNG encode failed: ") + pi.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, raw.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("PNG encode failed: ") + pi.message);
  }
  out.resize(size);
  return out;
}

inline Rgba8Image decode_png_rgba(std::span<const std::uint8_t> bytes) {
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size())) {
    throw FormatError(std::string("PNG decode failed: ") + pi.message);
  }
  pi.format = PNG_FORMAT_RGBA;
  Rgba8Image out;
  out.width = int(pi.width);
  out.height = int(pi.height);
  out.pixels.resize(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&pi);
    throw FormatError(std::string("PNG decode failed: ") + pi.message);
  }
  return out;
}

inline RgbaImage to_float_image(const Rgba8Image& img) {
  RgbaImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = float(img.pixels[i]) / 255.0f;
  return out;
}

inline void write_png_rgba(const RgbaImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_png_rgba(img);
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline Rgba8Image read_png_rgba(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return decode_png_rgba(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

// ---------------------------------------------------------------------------
// Little-endian binary helpers

namespace detail {

class ByteWriter {
 public:
  template <typename V>
  void put(V v) {
    static_assert(std::is_trivially_copyable_v<V>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(V));
  }
  void bytes(std::string_view s) { buf_.append(s); }
  void str(std::string_view s) {
    put(std::uint32_t(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <typename V>
  V get(const char* what) {
    need(sizeof(V), what);
    V v;
    std::memcpy(&v, data_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str(const char* what) {
    const auto n = get<std::uint32_t>(what);
    return std::string(bytes(n, what));
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (n > data_.size() - pos_) throw FormatError(std::string("truncated file while reading ") + what);
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Model bundle

inline constexpr char kModelMagic[4] = {'Z', '2', 'P', 'W'};
inline constexpr std::uint32_t kModelVersion = 1;

/// Render-time constants fixed at training time.
struct RenderDefaults {
  ZBufferParams zbuffer;
  int resolution = 64;
  double camera_distance = 2.2;
  double camera_pitch_deg = 20.0;
  double focal_fraction = 0.75;
  double light_radius = 3.0;

  bool operator==(const RenderDefaults& o) const {
    return zbuffer.alpha == o.zbuffer.alpha && zbuffer.beta == o.zbuffer.beta &&
           zbuffer.window == o.zbuffer.window && resolution == o.resolution &&
           camera_distance == o.camera_distance && camera_pitch_deg == o.camera_pitch_deg &&
           focal_fraction == o.focal_fraction && light_radius == o.light_radius;
  }
};

struct Provenance {
  std::uint64_t train_seed = 0;
  std::uint64_t steps = 0;
  float loss = 0.0f;

  bool operator==(const Provenance&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor<float> value;

  bool operator==(const NamedTensor&) const = default;
};

struct ModelBundle {
  UNetConfig config;
  std::optional<FourierEncoding> encoding;
  RenderDefaults render;
  Provenance provenance;
  std::vector<NamedTensor> parameters;

  bool operator==(const ModelBundle&) const = default;
};

inline ModelBundle make_bundle(const Model<float>& model, const RenderDefaults& render,
                               const Provenance& provenance) {
  ModelBundle b{model.config(), model.encoding(), render, provenance, {}};
  for (const auto& p : model.parameters()) b.parameters.push_back({p.name, p.value});
  return b;
}

/// Builds a model for `bundle.config` and copies the stored weights into it. Every
/// parameter must be present with the expected shape.
inline Model<float> instantiate(const ModelBundle& bundle) {
  Model<float> model(bundle.config, bundle.encoding);
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& nt : bundle.parameters) by_name[nt.name] = &nt;
  for (auto& p : model.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("model file lacks parameter '" + p.name + "'");
    if (it->second->value.shape() != p.value.shape()) {
      throw FormatError("parameter '" + p.name + "' has shape " +
                        shape_string(it->second->value.shape()) + " but the configuration expects " +
                        shape_string(p.value.shape()));
    }
    p.value = it->second->value;
    p.zero_grad();
  }
  if (by_name.size() != model.parameters().size()) {
    for (const auto& nt : bundle.parameters) {
      if (!model.find(nt.name)) throw FormatError("model file has unexpected parameter '" + nt.name + "'");
    }
  }
  return model;
}

inline std::string serialize_model(const ModelBundle& b) {
  detail::ByteWriter w;
  w.bytes(std::string_view(kModelMagic, 4));
  w.put(kModelVersion);
  const UNetConfig& c = b.config;
  w.put(std::uint32_t(c.levels));
  w.put(std::uint32_t(c.base_channels));
  w.put(std::uint32_t(c.max_channels));
  w.put(std::uint32_t(c.input_channels()));
  w.put(std::uint32_t(c.output_channels));
  w.put(std::uint32_t(c.settings_mode));
  w.put(std::uint32_t(c.encoding_enabled));
  w.put(std::uint32_t(c.material_control));
  w.put(std::uint32_t(c.style_dim));
  w.put(std::uint32_t(c.mapping_hidden_layers));
  w.put(c.adain_eps);
  w.put(c.leaky_slope);
  w.put(std::uint64_t(c.init_seed));

  const auto n_freq = std::uint32_t(b.encoding ? b.encoding->frequencies.size() : 0);
  w.put(n_freq);
  if (b.encoding) {
    for (float f : b.encoding->frequencies) w.put(f);
  }
  w.put(std::uint64_t(b.encoding ? b.encoding->seed : 0));

  const RenderDefaults& r = b.render;
  w.put(r.zbuffer.alpha);
  w.put(r.zbuffer.beta);
  w.put(std::uint32_t(r.zbuffer.window));
  w.put(std::uint32_t(r.resolution));
  w.put(r.camera_distance);
  w.put(r.camera_pitch_deg);
  w.put(r.focal_fraction);
  w.put(r.light_radius);

  w.put(b.provenance.train_seed);
  w.put(b.provenance.steps);
  w.put(b.provenance.loss);

  w.put(std::uint32_t(b.parameters.size()));
  for (const auto& p : b.parameters) {
    w.str(p.name);
    w.put(std::uint32_t(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.put(std::uint32_t(d));
    for (float v : p.value.data()) w.put(v);
  }
  return w.take();
}

inline ModelBundle deserialize_model(std::string_view data) {
  detail::ByteReader r(data);
  if (r.bytes(4, "magic") != std::string_view(kModelMagic, 4)) throw FormatError("not a model file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kModelVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  ModelBundle b;
  UNetConfig& c = b.config;
  c.levels = int(r.get<std::uint32_t>("config"));
  c.base_channels = int(r.get<std::uint32_t>("config"));
  c.max_channels = int(r.get<std::uint32_t>("config"));
  const auto input_channels = r.get<std::uint32_t>("config");
  c.output_channels = int(r.get<std::uint32_t>("config"));
  const auto mode = r.get<std::uint32_t>("config");
  if (mode > 1) throw FormatError("unknown settings mode " + std::to_string(mode));
  c.settings_mode = SettingsMode(mode);
  c.encoding_enabled = r.get<std::uint32_t>("config") != 0;
  c.material_control = r.get<std::uint32_t>("config") != 0;
  c.style_dim = int(r.get<std::uint32_t>("config"));
  c.mapping_hidden_layers = int(r.get<std::uint32_t>("config"));
  c.adain_eps = r.get<float>("config");
  c.leaky_slope = r.get<float>("config");
  c.init_seed = r.get<std::uint64_t>("config");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid model configuration: ") + e.what());
  }
  if (input_channels != std::uint32_t(c.input_channels())) {
    throw FormatError("input channel count " + std::to_string(input_channels) +
                      " inconsistent with configuration");
  }

  const auto n_freq = r.get<std::uint32_t>("frequency count");
  if (n_freq > 1024) throw FormatError("implausible frequency count");
  std::vector<float> freqs(n_freq);
  for (float& f : freqs) f = r.get<float>("frequencies");
  const auto freq_seed = r.get<std::uint64_t>("frequency seed");
  if ((n_freq > 0) != c.encoding_enabled) {
    throw FormatError("frequencies must be present iff positional encoding is enabled");
  }
  if (c.encoding_enabled) b.encoding = FourierEncoding{std::move(freqs), freq_seed};

  b.render.zbuffer.alpha = r.get<double>("render defaults");
  b.render.zbuffer.beta = r.get<double>("render defaults");
  b.render.zbuffer.window = int(r.get<std::uint32_t>("render defaults"));
  b.render.resolution = int(r.get<std::uint32_t>("render defaults"));
  b.render.camera_distance = r.get<double>("render defaults");
  b.render.camera_pitch_deg = r.get<double>("render defaults");
  b.render.focal_fraction = r.get<double>("render defaults");
  b.render.light_radius = r.get<double>("render defaults");

  b.provenance.train_seed = r.get<std::uint64_t>("provenance");
  b.provenance.steps = r.get<std::uint64_t>("provenance");
  b.provenance.loss = r.get<float>("provenance");

  const auto count = r.get<std::uint32_t>("parameter count");
  std::set<std::string> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor nt;
    nt.name = r.str("parameter name");
    if (!seen.insert(nt.name).second) throw FormatError("duplicate parameter '" + nt.name + "'");
    const auto rank = r.get<std::uint32_t>("parameter rank");
    if (rank > 8) throw FormatError("parameter '" + nt.name + "' has implausible rank");
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = r.get<std::uint32_t>("parameter shape");
      numel *= d;
      if (numel > r.remaining()) throw FormatError("truncated file while reading parameter '" + nt.name + "'");
    }
    if (numel * sizeof(float) > r.remaining()) {
      throw FormatError("truncated file while reading parameter '" + nt.name + "'");
    }
    std::vector<float> values(numel);
    for (float& v : values) v = r.get<float>("parameter data");
    nt.value = Tensor<float>(std::move(shape), std::move(values));
    b.parameters.push_back(std::move(nt));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after model data");
  return b;
}

inline void save_model(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::set<std::string> names;
  for (const auto& p : bundle.parameters) {
    if (!names.insert(p.name).second) throw FormatError("duplicate parameter '" + p.name + "'");
  }
  write_file(path, serialize_model(bundle));
}

inline ModelBundle load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file(path));
}

/// Loads a bundle and checks it against an expected configuration.
inline Model<float> load_model(const std::filesystem::path& path, const UNetConfig& expected) {
  ModelBundle b = load_model(path);
  Model<float> reference(expected, expected.encoding_enabled ? b.encoding : std::nullopt);
  std::map<std::string, const NamedTensor*> stored;
  for (const auto& nt : b.parameters) stored[nt.name] = &nt;
  for (const auto& p : reference.parameters()) {
    auto it = stored.find(p.name);
    if (it == stored.end()) {
      throw FormatError("parameter '" + p.name + "' expected with shape " + shape_string(p.value.shape()) +
                        " is missing from " + path.string());
    }
    if (it->second->value.shape() != p.value.shape()) {
      throw FormatError("parameter '" + p.name + "' has shape " + shape_string(it->second->value.shape()) +
                        ", expected " + shape_string(p.value.shape()));
    }
  }
  b.config = expected;
  return instantiate(b);
}

}  // namespace pointshade
