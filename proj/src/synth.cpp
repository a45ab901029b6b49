#include "gms/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gms/image_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace gms {

std::vector<SynthBand> strong_shift_bands() {
  return {
      {0.0, 1.0 / 3.0, 60.0, 0.18, 0.55},
      {1.0 / 3.0, 2.0 / 3.0, 250.0, 0.18, 0.30},
      {2.0 / 3.0, 1.0, 1000.0, 0.18, 0.15},
  };
}

namespace {

double box_iou(const InstanceAnnotation& a, const InstanceAnnotation& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
  const double ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
  const double by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

void render_head(ImageGrid& img, const InstanceAnnotation& a, const SynthConfig& cfg,
                 double intensity, Rng& rng) {
  const BoxExtent e = box_extent(a, img.width, img.height);
  if (e.empty()) return;
  auto paint = [&](int y, int x, double base) {
    if (cfg.dropout > 0.0 && rng.uniform01() < cfg.dropout) return;
    const double t = cfg.texture > 0.0 ? rng.uniform(-cfg.texture / 2.0, cfg.texture / 2.0) : 0.0;
    const double v = std::clamp(base + t, 0.0, 1.0);
    for (int c = 0; c < img.channels; ++c) img.at(y, x, c) = std::max(img.at(y, x, c), v);
  };
  if (cfg.style == HeadStyle::Square) {
    for (int y = e.y0; y < e.y1; ++y)
      for (int x = e.x0; x < e.x1; ++x) paint(y, x, intensity);
    return;
  }
  // Annular disc inscribed in the pixel extent; edge-center pixels always
  // fill, so the tight bounding box of the rendered head equals the extent.
  const double cx = 0.5 * (e.x0 + e.x1);
  const double cy = 0.5 * (e.y0 + e.y1);
  const double rx = 0.5 * (e.x1 - e.x0);
  const double ry = 0.5 * (e.y1 - e.y0);
  const double core2 = cfg.ring_core_frac * cfg.ring_core_frac;
  for (int y = e.y0; y < e.y1; ++y) {
    for (int x = e.x0; x < e.x1; ++x) {
      const double dx = (x + 0.5 - cx) / rx;
      const double dy = (y + 0.5 - cy) / ry;
      const double r2 = dx * dx + dy * dy;
      if (r2 > 1.0) continue;
      paint(y, x, r2 <= core2 ? intensity * cfg.ring_core_level : intensity);
    }
  }
}

void render_disc_speckle(ImageGrid& img, double cx, double cy, int r, double intensity,
                         const SynthConfig& cfg, Rng& rng) {
  const int x0 = std::max(0, static_cast<int>(cx) - r), x1 = std::min(img.width - 1, static_cast<int>(cx) + r);
  const int y0 = std::max(0, static_cast<int>(cy) - r), y1 = std::min(img.height - 1, static_cast<int>(cy) + r);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= static_cast<double>(r) * r) {
        if (cfg.dropout > 0.0 && rng.uniform01() < cfg.dropout) continue;
        const double t =
            cfg.texture > 0.0 ? rng.uniform(-cfg.texture / 2.0, cfg.texture / 2.0) : 0.0;
        const double v = std::clamp(intensity + t, 0.0, 1.0);
        for (int c = 0; c < img.channels; ++c) img.at(y, x, c) = std::max(img.at(y, x, c), v);
      }
    }
}

struct Placement {
  InstanceAnnotation ann;
  int band = -1;
  double intensity = 0.0;
};

}  // namespace

std::pair<Scene, SynthTruth> generate_scene(const SynthConfig& cfg, std::uint64_t seed,
                                            const std::string& id) {
  if (cfg.width < 8 || cfg.height < 8) throw ValidationError("synth scene too small");
  std::vector<SynthBand> bands = cfg.bands;
  if (bands.empty() && !cfg.continuous) bands = strong_shift_bands();
  for (std::size_t i = 1; i < bands.size(); ++i)
    if (bands[i].v_lo < bands[i - 1].v_hi) throw ValidationError("synth band v-ranges overlap");

  Rng rng(seed);
  const double W = cfg.width, H = cfg.height;
  const int n_target = static_cast<int>(rng.uniform_int(cfg.n_min, std::max(cfg.n_min, cfg.n_max)));

  // Per-band instance counts proportional to weight.
  std::vector<int> band_counts;
  if (!cfg.continuous) {
    double wsum = 0.0;
    for (const auto& b : bands) wsum += b.weight;
    band_counts.assign(bands.size(), 0);
    int assigned = 0;
    for (std::size_t b = 0; b + 1 < bands.size(); ++b) {
      band_counts[b] = static_cast<int>(std::floor(n_target * bands[b].weight / wsum));
      assigned += band_counts[b];
    }
    band_counts.back() = n_target - assigned;
  }

  SynthTruth truth;
  truth.bands = bands;
  std::vector<Placement> placed;
  auto try_place = [&](int band_idx) {
    for (int attempt = 0; attempt < cfg.max_tries; ++attempt) {
      if (cfg.continuous) {
        const double v = rng.uniform(0.0, 1.0);
        double area = cfg.law_a * std::exp(cfg.law_b * v) * std::exp(cfg.law_jitter * rng.normal());
        area = std::max(4.0, area);
        const double s = std::sqrt(area);
        const double margin = s / 2.0 + 1.0;
        if (2.0 * margin >= W || 2.0 * margin >= H) continue;
        const double cy = std::clamp(v * H, margin, H - margin);
        const double cx = rng.uniform(margin, W - margin);
        Placement p;
        p.ann = InstanceAnnotation::make(cx, cy, s, s);
        p.intensity = std::clamp(cfg.contrast_base + cfg.contrast_slope * std::log(area) +
                                     rng.uniform(-cfg.head_jitter, cfg.head_jitter),
                                 cfg.head_lo, cfg.head_hi);
        bool ok = true;
        for (const auto& q : placed)
          if (box_iou(p.ann, q.ann) > cfg.max_iou) {
            ok = false;
            break;
          }
        if (ok) {
          placed.push_back(p);
          return true;
        }
      } else {
        const SynthBand& b = bands[band_idx];
        const double area = std::max(4.0, b.mean_area * std::exp(b.jitter * rng.normal()));
        const double s = std::sqrt(area);
        const double margin = s / 2.0 + 1.0;
        if (2.0 * margin >= W || 2.0 * margin >= H) continue;
        const double ylo = std::max(b.v_lo * H, margin);
        const double yhi = std::min(b.v_hi * H, H - margin);
        if (yhi <= ylo) continue;
        const double cy = rng.uniform(ylo, yhi);
        const double cx = rng.uniform(margin, W - margin);
        Placement p;
        p.ann = InstanceAnnotation::make(cx, cy, s, s);
        p.band = band_idx;
        p.intensity = std::clamp(cfg.contrast_base + cfg.contrast_slope * std::log(area) +
                                     rng.uniform(-cfg.head_jitter, cfg.head_jitter),
                                 cfg.head_lo, cfg.head_hi);
        bool ok = true;
        for (const auto& q : placed)
          if (box_iou(p.ann, q.ann) > cfg.max_iou) {
            ok = false;
            break;
          }
        if (ok) {
          placed.push_back(p);
          return true;
        }
      }
    }
    return false;
  };

  if (cfg.continuous) {
    for (int i = 0; i < n_target; ++i)
      if (!try_place(-1)) ++truth.skipped;
  } else {
    for (std::size_t b = 0; b < bands.size(); ++b)
      for (int i = 0; i < band_counts[b]; ++i)
        if (!try_place(static_cast<int>(b))) ++truth.skipped;
  }

  Scene scene;
  scene.id = id;
  scene.image = make_image(cfg.width, cfg.height, 1, 0.0);
  // Background, speckle distractors, then heads (draw order is part of the
  // deterministic byte contract).
  for (double& px : scene.image.data)
    px = cfg.background + (cfg.noise_level > 0.0 ? rng.uniform(0.0, cfg.noise_level) : 0.0);
  const int n_speckle = static_cast<int>(std::llround(cfg.speckle_per_pixel * W * H));
  for (int i = 0; i < n_speckle; ++i) {
    const double cx = rng.uniform(0.0, W);
    const double cy = rng.uniform(0.0, H);
    const int r = static_cast<int>(rng.uniform_int(cfg.speckle_r_min, cfg.speckle_r_max));
    const double si = rng.uniform(cfg.speckle_lo, cfg.speckle_hi);
    render_disc_speckle(scene.image, cx, cy, r, si, cfg, rng);
  }
  for (const auto& p : placed) {
    render_head(scene.image, p.ann, cfg, p.intensity, rng);
    scene.annotations.push_back(p.ann);
    truth.instance_band.push_back(p.band);
  }
  for (double& px : scene.image.data) px = std::clamp(px, 0.0, 1.0);
  scene.validate();
  return {std::move(scene), std::move(truth)};
}

namespace {

std::string truth_to_json(const SynthTruth& truth) {
  nlohmann::ordered_json j;
  j["bands"] = nlohmann::ordered_json::array();
  for (const auto& b : truth.bands) {
    nlohmann::ordered_json jb;
    jb["v_lo"] = b.v_lo;
    jb["v_hi"] = b.v_hi;
    jb["mean_area"] = b.mean_area;
    jb["jitter"] = b.jitter;
    jb["weight"] = b.weight;
    j["bands"].push_back(jb);
  }
  j["instance_band"] = truth.instance_band;
  j["skipped"] = truth.skipped;
  return j.dump(2) + "\n";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

DatasetSummary generate_benchmark(const SynthConfig& cfg, int n_train, int n_val, int n_test,
                                  std::uint64_t seed, const std::string& out_dir) {
  if (n_train < 0 || n_val < 0 || n_test < 0)
    throw ValidationError("split sizes must be non-negative");
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "anns");
  fs::create_directories(fs::path(out_dir) / "truth");

  DatasetSummary summary;
  summary.dir = out_dir;
  auto emit = [&](const std::string& split, int index, std::vector<std::string>& ids) {
    std::ostringstream name;
    name << split << "_" << std::setw(4) << std::setfill('0') << index;
    const std::string id = name.str();
    const auto [scene, truth] = generate_scene(cfg, derive_seed(seed, id, "scene"), id);
    save_image_png(scene.image, (fs::path(out_dir) / "images" / (id + ".png")).string());
    save_annotations(scene, (fs::path(out_dir) / "anns" / (id + ".json")).string());
    write_text((fs::path(out_dir) / "truth" / (id + ".json")).string(), truth_to_json(truth));
    ids.push_back(id);
  };
  for (int i = 0; i < n_train; ++i) emit("train", i, summary.train_ids);
  for (int i = 0; i < n_val; ++i) emit("val", i, summary.val_ids);
  for (int i = 0; i < n_test; ++i) emit("test", i, summary.test_ids);

  nlohmann::ordered_json splits;
  splits["train"] = summary.train_ids;
  splits["val"] = summary.val_ids;
  splits["test"] = summary.test_ids;
  write_text((fs::path(out_dir) / "splits.json").string(), splits.dump(2) + "\n");
  return summary;
}

std::vector<std::string> load_split_ids(const std::string& dir, const std::string& split) {
  const auto j = nlohmann::json::parse(read_text((fs::path(dir) / "splits.json").string()));
  if (!j.contains(split)) throw ValidationError("unknown split '" + split + "'");
  return j.at(split).get<std::vector<std::string>>();
}

Scene load_dataset_scene(const std::string& dir, const std::string& id) {
  return load_scene((fs::path(dir) / "anns" / (id + ".json")).string(),
                    (fs::path(dir) / "images" / (id + ".png")).string());
}

std::vector<Scene> load_split(const std::string& dir, const std::string& split) {
  std::vector<Scene> scenes;
  for (const auto& id : load_split_ids(dir, split)) scenes.push_back(load_dataset_scene(dir, id));
  return scenes;
}

SynthTruth load_truth(const std::string& dir, const std::string& id) {
  const auto j = nlohmann::json::parse(read_text((fs::path(dir) / "truth" / (id + ".json")).string()));
  SynthTruth truth;
  for (const auto& jb : j.at("bands")) {
    SynthBand b;
    b.v_lo = jb.at("v_lo").get<double>();
    b.v_hi = jb.at("v_hi").get<double>();
    b.mean_area = jb.at("mean_area").get<double>();
    b.jitter = jb.at("jitter").get<double>();
    b.weight = jb.at("weight").get<double>();
    truth.bands.push_back(b);
  }
  truth.instance_band = j.at("instance_band").get<std::vector<int>>();
  truth.skipped = j.at("skipped").get<int>();
  return truth;
}

}  // namespace gms
