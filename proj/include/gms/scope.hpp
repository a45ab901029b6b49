#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gms/core_types.hpp"

namespace gms {

// One decoupled sub-distribution realized as a horizontal stripe of the
// image: rows [v_lo, v_hi), the annotation indices assigned to it, and the
// mean raw box area of those members.
struct SubDistributionBand {
  int component_index = 0;
  int v_lo = 0;
  int v_hi = 0;
  std::vector<int> member_indices;
  double mean_scale = 0.0;
};

enum class FactorMode {
  SqrtAreaRatio,  // linear zoom mapping band mean area onto the landmark
  LiteralMeanSum, // sum(alpha_i) / (alpha_o * (N_c - 1)), fidelity mode
};

struct ScopeParams {
  double optimal_scale = 250.0;
  double gamma_min = 0.25;
  double gamma_max = 4.0;
  FactorMode mode = FactorMode::SqrtAreaRatio;
};

struct ScopePlan {
  std::vector<SubDistributionBand> bands;
  std::vector<double> factors;
  double optimal_scale = 250.0;

  void validate(int image_height) const;
};

// Linear zoom factor that maps a band of mean area `mean_scale` onto the
// landmark area, clamped to [gamma_min, gamma_max].
double zoom_factor(double mean_scale, double optimal_scale, double gamma_min = 0.25,
                   double gamma_max = 4.0);

ScopePlan plan_scope(const std::vector<SubDistributionBand>& bands, const ScopeParams& params);

// Bilinear resample by a positive linear factor; output dims round(factor*dim),
// at least 1x1. Throws BudgetError if the output exceeds max_pixels.
ImageGrid interpolate(const ImageGrid& img, double factor,
                      std::size_t max_pixels = 50'000'000);

// Resamples a map to new dims. Binary maps use nearest-neighbor so values
// stay in {0,1}; confidence/threshold maps use bilinear.
PixelMap resize_map(const PixelMap& map, int out_width, int out_height);

// Anything that turns an image into a binary localization map.
class Locator {
 public:
  virtual ~Locator() = default;
  virtual PixelMap predict_binary(const ImageGrid& img) const = 0;
};

// Test/diagnostic decorator counting predict calls.
class CountingLocator final : public Locator {
 public:
  explicit CountingLocator(const Locator& inner) : inner_(inner) {}
  PixelMap predict_binary(const ImageGrid& img) const override {
    ++calls_;
    return inner_.predict_binary(img);
  }
  int calls() const { return calls_; }

 private:
  const Locator& inner_;
  mutable int calls_ = 0;
};

// Whole-image scoped prediction with sub-distribution re-aggregation: one
// locator pass per distinct factor, each binary result mapped back to the
// original grid, band rows copied from their own pyramid level.
PixelMap scope_predict(const Scene& scene, const ScopePlan& plan, const Locator& locator,
                       std::size_t max_pixels = 50'000'000);

enum class PatchMode { Divide, Whole };

// Ablation baselines: per-band crop processing (Divide) or a spliced canvas
// of zoomed bands (Whole).
PixelMap predict_patchwise(const Scene& scene, const ScopePlan& plan, const Locator& locator,
                           PatchMode mode, std::size_t max_pixels = 50'000'000);

std::string scope_plan_to_json(const ScopePlan& plan);
ScopePlan scope_plan_from_json(const std::string& text);

}  // namespace gms
