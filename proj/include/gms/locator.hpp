#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gms/core_types.hpp"
#include "gms/scope.hpp"

namespace gms {

// Multi-scale box-filter responses on luminance: 5 local means and 5
// center-surround differences at radii {1,2,4,8,16}, each standardized per
// image. Computed at the input's own resolution, so zooming an image shifts
// which radius a head responds to.
inline constexpr int kFeatureChannels = 10;
inline constexpr int kFeatureRadii[5] = {1, 2, 4, 8, 16};

inline constexpr double kThresholdMin = 0.25;
inline constexpr double kThresholdMax = 0.90;

struct FeatureStack {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;  // planar, channel-major

  const double* plane(int k) const {
    return data.data() + static_cast<std::size_t>(k) * width * height;
  }
  double* plane(int k) { return data.data() + static_cast<std::size_t>(k) * width * height; }
  std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
};

// Linear confidence and threshold heads over the feature stack; weight
// layout is K channel weights followed by the bias.
struct LocatorParams {
  std::vector<double> conf;
  std::vector<double> thr;
  std::uint64_t version = 0;

  static LocatorParams zeros(int k = kFeatureChannels);
  bool finite() const;
};

struct LossReport {
  double seg_loss = 0.0;
  double consis_loss = 0.0;
  double total = 0.0;
};

FeatureStack extract_features(const ImageGrid& img);

PixelMap predict_confidence(const LocatorParams& params, const FeatureStack& features);
PixelMap predict_threshold(const LocatorParams& params, const FeatureStack& features);

PixelMap binarize(const PixelMap& confidence, const PixelMap& threshold);
PixelMap binarize_fixed(const PixelMap& confidence, double epsilon);

// Ground-truth foreground: annotation boxes rasterized and unioned.
PixelMap gt_binary_map(const Scene& scene);

// Mean over pixels of squared confidence error plus absolute binary error.
double seg_loss(const PixelMap& confidence, const PixelMap& binary, const PixelMap& gt);

// One gradient step. The confidence head descends the exact gradient of its
// squared-error term; the threshold head moves along the straight-through
// relaxation of the binary term (sign of the binary error, chained through
// the logistic range map).
struct TrainTarget {
  const Scene* scene = nullptr;
  const PixelMap* consistency_target = nullptr;  // optional teacher binary map
};

std::pair<LocatorParams, LossReport> train_step_targets(const LocatorParams& params,
                                                        std::span<const TrainTarget> batch,
                                                        double lr_conf, double lr_thr,
                                                        double consistency_weight = 1.0);

std::pair<LocatorParams, LossReport> train_step(const LocatorParams& params,
                                                std::span<const Scene> batch, double lr_conf,
                                                double lr_thr);

// Locator interface adapter running the full forward pass.
class LinearLocator final : public Locator {
 public:
  explicit LinearLocator(const LocatorParams& params) : params_(params) {}
  PixelMap predict_binary(const ImageGrid& img) const override;

 private:
  const LocatorParams& params_;
};

std::string params_to_json(const LocatorParams& params);
LocatorParams params_from_json(const std::string& text);

}  // namespace gms
