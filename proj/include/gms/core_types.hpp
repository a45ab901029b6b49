#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gms {

// ---- errors --------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
// JSON / image decode failures; carries a 1-based line when known.
struct ParseError : IoError {
  ParseError(const std::string& msg, int line_) : IoError(msg), line(line_) {}
  int line = 0;
};
struct BudgetError : Error {
  using Error::Error;
};
struct InsufficientDataError : Error {
  using Error::Error;
};

// ---- pixel grids -----------------------------------------------------------

// Row-major intensity grid, values in [0,1]. channels is 1 or 3; three-channel
// data is interleaved.
struct ImageGrid {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  double& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  void validate() const;  // throws ValidationError
};

ImageGrid make_image(int width, int height, int channels = 1, double fill = 0.0);

// Single-channel luminance plane (Rec.601 weights for RGB input).
std::vector<double> luminance(const ImageGrid& img);

enum class MapKind { Confidence, Threshold, Binary };

struct PixelMap {
  int width = 0;
  int height = 0;
  MapKind kind = MapKind::Confidence;
  std::vector<double> data;

  double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return static_cast<std::size_t>(width) * height; }
};

PixelMap make_map(int width, int height, MapKind kind, double fill = 0.0);

// ---- scenes ----------------------------------------------------------------

struct InstanceAnnotation {
  double cx = 0.0;  // column of the head center
  double cy = 0.0;  // row of the head center
  double w = 0.0;
  double h = 0.0;
  double scale = 0.0;  // box area, always w*h

  static InstanceAnnotation make(double cx, double cy, double w, double h);
};

struct Scene {
  std::string id;
  ImageGrid image;
  std::vector<InstanceAnnotation> annotations;

  void validate() const;
};

// Pixel extent of an annotation box, half-open [x0,x1) x [y0,y1), clipped to
// the grid. Width/height round to the nearest integer so a 10x10 box covers
// exactly 100 interior pixels.
struct BoxExtent {
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool empty() const { return x0 >= x1 || y0 >= y1; }
};
BoxExtent box_extent(const InstanceAnnotation& a, int width, int height);

// ---- annotation / scene IO -------------------------------------------------

// Parse the annotation JSON alone (no image). clamped_out, when non-null,
// receives the number of center coordinates clamped back inside the grid.
struct SceneHeader {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<InstanceAnnotation> annotations;
};
SceneHeader load_annotations(const std::string& path, int* clamped_out = nullptr);

Scene load_scene(const std::string& annotation_path, const std::string& image_path,
                 int* clamped_out = nullptr);

// Canonical writer; loading then saving a canonical file is byte-identical.
void save_annotations(const Scene& scene, const std::string& path);
std::string annotations_to_json(const Scene& scene);

// ---- deterministic randomness ------------------------------------------

// mt19937_64 with hand-rolled distributions so streams are identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01();                       // [0,1)
  double uniform(double lo, double hi);     // [lo,hi)
  double normal();                          // Box-Muller
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t fnv1a64(const std::string& s);
std::uint64_t splitmix64(std::uint64_t x);
// Stable sub-stream seed for (base seed, scene id, purpose).
std::uint64_t derive_seed(std::uint64_t base, const std::string& id, const std::string& purpose);

}  // namespace gms
