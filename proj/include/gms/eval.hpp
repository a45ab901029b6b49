#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "gms/core_types.hpp"

namespace gms {

struct PredictedInstance {
  double cx = 0.0;  // centroid, pixel-center coordinates
  double cy = 0.0;
  double area = 0.0;  // component pixel count
  int component_id = 0;
};

struct MatchResult {
  std::vector<std::pair<int, int>> tp_pairs;  // (pred index, gt index)
  std::vector<int> fp;                        // unmatched pred indices
  std::vector<int> fn;                        // unmatched gt indices
};

struct F1Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1m = 0.0;
  bool degenerate = false;  // a zero denominator was hit
};

struct CountMetrics {
  double mae = 0.0;
  double mse = 0.0;  // root of the mean squared count error
  double nae = 0.0;
};

struct MetricsReport {
  F1Metrics localization;
  CountMetrics counting;
  std::array<std::optional<double>, 6> bin_recall;  // A0..A5, absent when empty
};

// 8-connected components of a binary map; components smaller than min_area
// pixels are dropped.
std::vector<PredictedInstance> extract_instances(const PixelMap& binary, int min_area = 2);

// Greedy center matching: candidate pairs within sigma = sqrt(w^2+h^2)/2 of
// the ground-truth box, taken in ascending distance order (ties by pred then
// gt index), each side used at most once.
MatchResult match(const std::vector<PredictedInstance>& preds,
                  const std::vector<InstanceAnnotation>& gts);

F1Metrics f1_metrics(const MatchResult& m);
F1Metrics f1_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn);

CountMetrics count_metrics(const std::vector<double>& pred_counts,
                           const std::vector<double>& gt_counts);

// Recall per instance-area decade bin: A0 = (0,10], then (10,100], ... and
// A5 = (1e5, inf).
std::array<std::optional<double>, 6> scale_level_recall(const MatchResult& m,
                                                        const std::vector<InstanceAnnotation>& gts);

int scale_bin(double area);

struct PearsonResult {
  double r_vertical = 0.0;
  double r_horizontal = 0.0;
  bool degenerate = false;  // zero variance on some axis
};

// Pearson correlation between instance area and the (cy, cx) coordinates.
PearsonResult pearson_scale_correlation(const Scene& scene);

}  // namespace gms
