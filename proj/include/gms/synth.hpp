#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gms/core_types.hpp"

namespace gms {

enum class HeadStyle { Disc, Square };

struct SynthBand {
  double v_lo = 0.0;   // fraction of image height
  double v_hi = 1.0;
  double mean_area = 250.0;
  double jitter = 0.18;  // lognormal sigma on the area
  double weight = 1.0;   // share of instances
};

struct SynthConfig {
  int width = 512;
  int height = 512;
  int n_min = 90;
  int n_max = 140;
  std::vector<SynthBand> bands;  // empty + !continuous -> strong-shift default
  bool continuous = false;       // area(v) = law_a * exp(law_b * v) instead of bands
  double law_a = 40.0;
  double law_b = 3.2;
  double law_jitter = 0.25;
  HeadStyle style = HeadStyle::Disc;
  double background = 0.10;
  double noise_level = 0.28;
  double speckle_per_pixel = 0.0012;
  int speckle_r_min = 1;
  int speckle_r_max = 2;
  double speckle_lo = 0.32;
  double speckle_hi = 0.46;
  // Head contrast follows the area: intensity = contrast_base +
  // contrast_slope * ln(area), jittered and clamped to [head_lo, head_hi].
  // Distant (small) heads fade toward the distractor range.
  double contrast_base = 0.10;
  double contrast_slope = 0.105;
  double head_jitter = 0.03;
  double head_lo = 0.42;
  double head_hi = 0.88;
  // Per-pixel texture inside heads and speckle blobs.
  double texture = 0.25;
  // Fraction of blob pixels left unpainted (salt holes). Small heads then
  // fire spottily at native resolution and only form stable blobs once
  // zoomed, which is what gives scale alignment measurable work.
  double dropout = 0.0;
  // Disc heads render as a bright rim around a dim core when
  // ring_core_level < 1.
  double ring_core_frac = 0.6;
  double ring_core_level = 1.0;
  double max_iou = 0.3;
  int max_tries = 60;
  std::uint64_t seed = 1;
};

// Three vertical bands with mean areas 60/250/1000 top to bottom, straddling
// the default landmark area of 250; tiny instances get the largest share.
std::vector<SynthBand> strong_shift_bands();

struct SynthTruth {
  std::vector<SynthBand> bands;
  std::vector<int> instance_band;  // generating band per annotation, -1 when continuous
  int skipped = 0;                 // placements dropped after max_tries
};

std::pair<Scene, SynthTruth> generate_scene(const SynthConfig& cfg, std::uint64_t seed,
                                            const std::string& id = "scene");

struct DatasetSummary {
  std::string dir;
  std::vector<std::string> train_ids, val_ids, test_ids;
};

// Writes images/<id>.png, anns/<id>.json, truth/<id>.json and splits.json.
DatasetSummary generate_benchmark(const SynthConfig& cfg, int n_train, int n_val, int n_test,
                                  std::uint64_t seed, const std::string& out_dir);

std::vector<std::string> load_split_ids(const std::string& dir, const std::string& split);
Scene load_dataset_scene(const std::string& dir, const std::string& id);
std::vector<Scene> load_split(const std::string& dir, const std::string& split);
SynthTruth load_truth(const std::string& dir, const std::string& id);

}  // namespace gms
