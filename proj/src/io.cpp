#include "scrwkv/io.hpp"

#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace scrwkv {

using nlohmann::json;

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

template <typename T>
void append_le(std::string& out, const T* values, std::size_t n) {
  const auto* bytes = reinterpret_cast<const char*>(values);
  const std::size_t start = out.size();
  out.append(bytes, n * sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < n; ++i)
      std::reverse(out.begin() + static_cast<std::ptrdiff_t>(start + i * sizeof(T)),
                   out.begin() + static_cast<std::ptrdiff_t>(start + (i + 1) * sizeof(T)));
}

template <typename T>
void read_le(const char* src, T* values, std::size_t n) {
  std::memcpy(values, src, n * sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < n; ++i) {
      auto* b = reinterpret_cast<unsigned char*>(values + i);
      std::reverse(b, b + sizeof(T));
    }
}

template <typename Scalar>
constexpr const char* dtype_name() {
  return sizeof(Scalar) == 4 ? "f32" : "f64";
}

struct ManifestEntry {
  std::string name, dtype;
  Shape shape;
  std::size_t offset = 0, bytes = 0;
};

struct Manifest {
  ModelConfig config;
  std::vector<ManifestEntry> entries;
  std::string payload;
};

Manifest parse_checkpoint(const fs::path& path) {
  const std::string blob = read_text_file(path);
  std::istringstream in(blob);
  auto corrupt = [&](const std::string& why) {
    return IoError("corrupt checkpoint " + path.string() + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw corrupt("bad magic line");
  Manifest m;
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0) throw corrupt("missing config");
  try {
    m.config = model_config_from_json(line.substr(7));
  } catch (const ShapeError& e) {
    throw corrupt(e.what());
  }
  std::size_t count = 0;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "tensors %zu", &count) != 1)
    throw corrupt("missing tensor count");
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw corrupt("truncated manifest");
    std::istringstream ls(line);
    ManifestEntry e;
    Index rank = 0;
    if (!(ls >> e.name >> e.dtype >> rank) || rank < 0 || rank > 8) throw corrupt("bad line '" + line + "'");
    e.shape.resize(static_cast<std::size_t>(rank));
    for (auto& d : e.shape)
      if (!(ls >> d) || d < 1) throw corrupt("bad shape for " + e.name);
    if (!(ls >> e.offset >> e.bytes)) throw corrupt("bad offsets for " + e.name);
    const std::size_t width = e.dtype == "f32" ? 4 : e.dtype == "f64" ? 8 : 0;
    if (width == 0) throw corrupt("unknown dtype '" + e.dtype + "' for " + e.name);
    if (e.offset != expected_offset || e.bytes != width * static_cast<std::size_t>(shape_numel(e.shape)))
      throw corrupt("non-contiguous or inconsistent extent for " + e.name);
    expected_offset += e.bytes;
    m.entries.push_back(std::move(e));
  }
  if (!std::getline(in, line) || line != "end") throw corrupt("missing end marker");
  const auto start = static_cast<std::size_t>(in.tellg());
  if (blob.size() - start != expected_offset)
    throw corrupt("payload is " + std::to_string(blob.size() - start) + " bytes, manifest expects " +
                  std::to_string(expected_offset));
  m.payload = blob.substr(start);
  return m;
}

}  // namespace

template <typename Scalar>
void save_checkpoint(const fs::path& path, const ModelConfig& cfg, const ParamStore<Scalar>& params) {
  std::ostringstream head;
  head << kCheckpointMagic << '\n' << "config " << to_json(cfg) << '\n';
  head << "tensors " << params.size() << '\n';
  std::string payload;
  for (const auto& v : params.vars()) {
    const Tensor<Scalar>& t = v.value();
    head << v.name() << ' ' << dtype_name<Scalar>() << ' ' << t.rank();
    for (Index d : t.shape()) head << ' ' << d;
    head << ' ' << payload.size() << ' ' << t.size() * sizeof(Scalar) << '\n';
    append_le(payload, t.data(), static_cast<std::size_t>(t.size()));
  }
  head << "end\n";
  write_file_atomic(path, head.str() + payload);
}

ModelConfig read_checkpoint_config(const fs::path& path) { return parse_checkpoint(path).config; }

template <typename Scalar>
ModelConfig load_checkpoint(const fs::path& path, ParamStore<Scalar>& params) {
  const Manifest m = parse_checkpoint(path);
  std::vector<std::string> unknown;
  for (const auto& e : m.entries)
    if (!params.contains(e.name)) unknown.push_back(e.name);
  if (!unknown.empty()) {
    std::string list;
    for (const auto& n : unknown) list += (list.empty() ? "" : ", ") + n;
    throw ShapeError("checkpoint " + path.string() + ": unknown tensors: " + list);
  }
  std::set<std::string> seen;
  for (const auto& e : m.entries) {
    if (!seen.insert(e.name).second) throw IoError("checkpoint: duplicate tensor " + e.name);
    const Var<Scalar>& target = params.at(e.name);
    if (target.shape() != e.shape)
      throw ShapeError("checkpoint: tensor " + e.name + " has shape " + shape_str(e.shape) +
                       ", model expects " + shape_str(target.shape()));
    if (e.dtype != dtype_name<Scalar>())
      throw ShapeError("checkpoint: tensor " + e.name + " is " + e.dtype + ", model uses " +
                       dtype_name<Scalar>());
  }
  for (const auto& v : params.vars())
    if (!seen.count(v.name())) throw ShapeError("checkpoint: missing tensor " + v.name());
  for (const auto& e : m.entries) {
    Tensor<Scalar>& t = params.at(e.name).mutable_value();
    read_le(m.payload.data() + e.offset, t.data(), static_cast<std::size_t>(t.size()));
  }
  return m.config;
}

template void save_checkpoint(const fs::path&, const ModelConfig&, const ParamStore<float>&);
template void save_checkpoint(const fs::path&, const ModelConfig&, const ParamStore<double>&);
template ModelConfig load_checkpoint(const fs::path&, ParamStore<float>&);
template ModelConfig load_checkpoint(const fs::path&, ParamStore<double>&);

namespace {

struct Raster {
  Index height = 0, width = 0, channels = 0;
  std::vector<double> data;  // interleaved, scaled to [0,1]
};

Raster read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  Raster r{static_cast<Index>(image.height), static_cast<Index>(image.width), 3, {}};
  r.data.reserve(buffer.size());
  for (png_byte b : buffer) r.data.push_back(b / 255.0);
  return r;
}

Raster read_pgm(const fs::path& path) {
  const std::string blob = read_text_file(path);
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) { return IoError("bad PGM " + path.string() + ": " + why); };
  auto token = [&]() {
    while (pos < blob.size()) {
      if (blob[pos] == '#') {
        while (pos < blob.size() && blob[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(blob[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < blob.size() && !std::isspace(static_cast<unsigned char>(blob[pos]))) ++pos;
    if (start == pos) throw fail("truncated header");
    return blob.substr(start, pos - start);
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P2") throw fail("unsupported magic " + magic);
  Raster r;
  long maxval = 0;
  try {
    r.width = std::stol(token());
    r.height = std::stol(token());
    maxval = std::stol(token());
  } catch (const std::exception&) {
    throw fail("non-numeric header");
  }
  if (r.width < 1 || r.height < 1 || maxval < 1 || maxval > 65535) throw fail("invalid header values");
  r.channels = 1;
  const std::size_t n = static_cast<std::size_t>(r.width * r.height);
  r.data.resize(n);
  if (magic == "P5") {
    ++pos;  // single whitespace after maxval
    const std::size_t width = maxval > 255 ? 2 : 1;
    if (blob.size() < pos + n * width) throw fail("truncated pixel data");
    for (std::size_t i = 0; i < n; ++i) {
      const auto* p = reinterpret_cast<const unsigned char*>(blob.data() + pos + i * width);
      const long v = width == 2 ? (p[0] << 8) | p[1] : p[0];
      r.data[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) r.data[i] = std::stod(token()) / static_cast<double>(maxval);
  }
  return r;
}

bool has_extension(const fs::path& path, const char* ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

Raster read_raster(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  return has_extension(path, ".pgm") ? read_pgm(path) : read_png(path);
}

}  // namespace

Tensor<float> read_image(const fs::path& path) {
  const Raster r = read_raster(path);
  Tensor<float> out({3, r.height, r.width});
  const Index plane = r.height * r.width;
  for (Index i = 0; i < plane; ++i)
    for (Index c = 0; c < 3; ++c)
      out[c * plane + i] =
          static_cast<float>(r.data[static_cast<std::size_t>(i * r.channels + (r.channels == 3 ? c : 0))]);
  return out;
}

Tensor<float> read_gray(const fs::path& path) {
  const Raster r = read_raster(path);
  Tensor<float> out({r.height, r.width});
  for (Index i = 0; i < r.height * r.width; ++i) {
    double v = 0;
    for (Index c = 0; c < r.channels; ++c) v += r.data[static_cast<std::size_t>(i * r.channels + c)];
    out[i] = static_cast<float>(v / static_cast<double>(r.channels));
  }
  return out;
}

void write_gray(const fs::path& path, const Tensor<float>& values) {
  if (values.rank() != 2) throw ShapeError("write_gray: expected [H,W], got " + shape_str(values.shape()));
  const Index h = values.dim(0), w = values.dim(1);
  std::vector<png_byte> pixels(static_cast<std::size_t>(h * w));
  for (Index i = 0; i < h * w; ++i)
    pixels[static_cast<std::size_t>(i)] =
        static_cast<png_byte>(std::lround(std::clamp(values[i], 0.0f, 1.0f) * 255.0f));
  std::string content;
  if (has_extension(path, ".pgm")) {
    content = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    content.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  } else {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(image, size, 0, pixels.data(), 0, nullptr))
      throw IoError("cannot encode PNG for " + path.string());
    content.resize(size);
    if (!png_image_write_to_memory(&image, content.data(), &size, 0, pixels.data(), 0, nullptr))
      throw IoError("cannot encode PNG for " + path.string() + ": " + image.message);
    content.resize(size);
  }
  write_file_atomic(path, content);
}

void write_mask(const fs::path& path, const Tensor<float>& probs, double threshold) {
  Tensor<float> mask(probs.shape());
  for (Index i = 0; i < probs.size(); ++i) mask[i] = probs[i] >= threshold ? 1.0f : 0.0f;
  write_gray(path, mask);
}

bool is_image_file(const fs::path& path) {
  return fs::is_regular_file(path) && (has_extension(path, ".png") || has_extension(path, ".pgm"));
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

void reject_unknown(const json& j, const std::vector<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ShapeError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ShapeError("config: unknown key '" + key + "' in " + where);
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ShapeError(std::string("config: invalid JSON: ") + e.what());
  }
  reject_unknown(j, {"model", "loss", "optim", "data", "batch_size", "thresholds", "paths"}, "root");
  RunConfig rc;
  try {
    if (j.contains("model")) rc.model = model_config_from_json(j.at("model").dump());
    if (j.contains("loss")) {
      const json& l = j.at("loss");
      reject_unknown(l, {"alpha", "beta", "epsilon"}, "loss");
      rc.loss.alpha = l.value("alpha", rc.loss.alpha);
      rc.loss.beta = l.value("beta", rc.loss.beta);
      rc.loss.epsilon = l.value("epsilon", rc.loss.epsilon);
      rc.loss = rc.loss.normalized();
    }
    if (j.contains("optim")) {
      const json& o = j.at("optim");
      reject_unknown(o, {"lr", "weight_decay", "beta1", "beta2", "eps", "power", "max_steps", "seed"},
                     "optim");
      OptimConfig& oc = rc.optim;
      oc.lr = o.value("lr", oc.lr);
      oc.weight_decay = o.value("weight_decay", oc.weight_decay);
      oc.beta1 = o.value("beta1", oc.beta1);
      oc.beta2 = o.value("beta2", oc.beta2);
      oc.eps = o.value("eps", oc.eps);
      oc.power = o.value("power", oc.power);
      oc.max_steps = o.value("max_steps", oc.max_steps);
      oc.seed = o.value("seed", oc.seed);
      if (oc.lr <= 0 || oc.power <= 0 || oc.max_steps < 0)
        throw ShapeError("config: optim requires lr > 0, power > 0, max_steps >= 0");
    }
    if (j.contains("data")) {
      const json& d = j.at("data");
      reject_unknown(d, {"source", "samples", "size", "seed", "min_width", "max_width", "max_strokes"},
                     "data");
      rc.data.source = d.value("source", rc.data.source);
      rc.data.samples = d.value("samples", rc.data.samples);
      rc.data.size = d.value("size", rc.data.size);
      rc.data.seed = d.value("seed", rc.data.seed);
      rc.data.synth.min_width = d.value("min_width", rc.data.synth.min_width);
      rc.data.synth.max_width = d.value("max_width", rc.data.synth.max_width);
      rc.data.synth.max_strokes = d.value("max_strokes", rc.data.synth.max_strokes);
    }
    rc.batch_size = j.value("batch_size", rc.batch_size);
    if (rc.batch_size < 1) throw ShapeError("config: batch_size must be >= 1");
    if (j.contains("thresholds")) {
      rc.thresholds = j.at("thresholds").get<std::vector<double>>();
      if (rc.thresholds.empty() || !std::is_sorted(rc.thresholds.begin(), rc.thresholds.end()))
        throw ShapeError("config: thresholds must be a non-empty ascending list");
    }
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      reject_unknown(p, {"input", "output"}, "paths");
      rc.input_dir = p.value("input", rc.input_dir);
      rc.output_dir = p.value("output", rc.output_dir);
    }
  } catch (const json::exception& e) {
    throw ShapeError(std::string("config: ") + e.what());
  }
  return rc;
}

RunConfig load_run_config(const fs::path& path) { return run_config_from_json(read_text_file(path)); }

}  // namespace scrwkv
