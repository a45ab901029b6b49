#include "gms/core_types.hpp"

#include "gms/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gms {

void ImageGrid::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("image dimensions must be positive");
  if (channels != 1 && channels != 3) throw ValidationError("image channels must be 1 or 3");
  if (data.size() != pixel_count() * channels)
    throw ValidationError("image data length does not match dimensions");
  for (double v : data)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("image value outside [0,1]");
}

ImageGrid make_image(int width, int height, int channels, double fill) {
  ImageGrid img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.data.assign(static_cast<std::size_t>(width) * height * channels, fill);
  return img;
}

std::vector<double> luminance(const ImageGrid& img) {
  std::vector<double> lum(img.pixel_count());
  if (img.channels == 1) {
    lum.assign(img.data.begin(), img.data.end());
  } else {
    for (std::size_t i = 0; i < lum.size(); ++i) {
      const double* px = img.data.data() + i * 3;
      lum[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    }
  }
  return lum;
}

PixelMap make_map(int width, int height, MapKind kind, double fill) {
  PixelMap m;
  m.width = width;
  m.height = height;
  m.kind = kind;
  m.data.assign(static_cast<std::size_t>(width) * height, fill);
  return m;
}

InstanceAnnotation InstanceAnnotation::make(double cx, double cy, double w, double h) {
  if (!(w > 0.0) || !(h > 0.0)) throw ValidationError("annotation box sides must be positive");
  InstanceAnnotation a;
  a.cx = cx;
  a.cy = cy;
  a.w = w;
  a.h = h;
  a.scale = w * h;
  return a;
}

void Scene::validate() const {
  image.validate();
  for (const auto& a : annotations) {
    if (!(a.w > 0.0) || !(a.h > 0.0)) throw ValidationError("annotation box sides must be positive");
    if (a.scale != a.w * a.h) throw ValidationError("annotation scale must equal w*h");
    if (a.cx < 0.0 || a.cx >= image.width || a.cy < 0.0 || a.cy >= image.height)
      throw ValidationError("annotation center outside the image grid");
  }
}

BoxExtent box_extent(const InstanceAnnotation& a, int width, int height) {
  const int bw = std::max<int>(1, static_cast<int>(std::llround(a.w)));
  const int bh = std::max<int>(1, static_cast<int>(std::llround(a.h)));
  const int x0 = static_cast<int>(std::llround(a.cx - a.w / 2.0));
  const int y0 = static_cast<int>(std::llround(a.cy - a.h / 2.0));
  BoxExtent e;
  e.x0 = std::clamp(x0, 0, width);
  e.x1 = std::clamp(x0 + bw, 0, width);
  e.y0 = std::clamp(y0, 0, height);
  e.y1 = std::clamp(y0 + bh, 0, height);
  return e;
}

namespace {

int line_of_offset(const std::string& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

SceneHeader load_annotations(const std::string& path, int* clamped_out) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const int line = line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError(path + ":" + std::to_string(line) + ": " + e.what(), line);
  }
  SceneHeader hdr;
  try {
    hdr.id = j.at("id").get<std::string>();
    hdr.width = j.at("width").get<int>();
    hdr.height = j.at("height").get<int>();
    if (hdr.width <= 0 || hdr.height <= 0)
      throw ValidationError(path + ": width/height must be positive");
    int clamped = 0;
    for (const auto& inst : j.at("instances")) {
      double cx = inst.at("cx").get<double>();
      double cy = inst.at("cy").get<double>();
      const double w = inst.at("w").get<double>();
      const double h = inst.at("h").get<double>();
      if (!(w > 0.0) || !(h > 0.0))
        throw ValidationError(path + ": instance box sides must be positive");
      const double mx = static_cast<double>(hdr.width - 1);
      const double my = static_cast<double>(hdr.height - 1);
      const double ox = cx, oy = cy;
      cx = std::clamp(cx, 0.0, mx);
      cy = std::clamp(cy, 0.0, my);
      if (cx != ox || cy != oy) ++clamped;
      hdr.annotations.push_back(InstanceAnnotation::make(cx, cy, w, h));
    }
    if (clamped_out) *clamped_out = clamped;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  return hdr;
}

Scene load_scene(const std::string& annotation_path, const std::string& image_path,
                 int* clamped_out) {
  SceneHeader hdr = load_annotations(annotation_path, clamped_out);
  Scene scene;
  scene.id = hdr.id;
  scene.image = load_image(image_path);
  scene.annotations = std::move(hdr.annotations);
  if (scene.image.width != hdr.width || scene.image.height != hdr.height) {
    std::ostringstream msg;
    msg << "annotation/image dimension mismatch: annotation says " << hdr.width << "x"
        << hdr.height << " but " << image_path << " is " << scene.image.width << "x"
        << scene.image.height;
    throw ValidationError(msg.str());
  }
  scene.validate();
  return scene;
}

namespace {

// Shortest round-trip decimal form, as nlohmann::json prints scalars.
std::string num(double v) {
  return nlohmann::json(v).dump();
}

}  // namespace

std::string annotations_to_json(const Scene& scene) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"id\": " << nlohmann::json(scene.id).dump() << ",\n";
  out << "  \"width\": " << scene.image.width << ",\n";
  out << "  \"height\": " << scene.image.height << ",\n";
  out << "  \"instances\": [";
  for (std::size_t i = 0; i < scene.annotations.size(); ++i) {
    const auto& a = scene.annotations[i];
    out << (i ? ",\n    " : "\n    ");
    out << "{\"cx\": " << num(a.cx) << ", \"cy\": " << num(a.cy) << ", \"w\": " << num(a.w)
        << ", \"h\": " << num(a.h) << "}";
  }
  out << (scene.annotations.empty() ? "]" : "\n  ]") << "\n}\n";
  return out.str();
}

void save_annotations(const Scene& scene, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << annotations_to_json(scene);
  if (!out) throw IoError("write failed: " + path);
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  spare_ = mag * std::sin(2.0 * M_PI * u2);
  has_spare_ = true;
  return mag * std::cos(2.0 * M_PI * u2);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(engine_() % span);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& id, const std::string& purpose) {
  return splitmix64(base ^ splitmix64(fnv1a64(id)) ^ fnv1a64(purpose));
}

}  // namespace gms
