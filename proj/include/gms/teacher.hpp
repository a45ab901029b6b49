#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gms/core_types.hpp"
#include "gms/gmm.hpp"
#include "gms/locator.hpp"
#include "gms/scope.hpp"

namespace gms {

enum class EvalWith { Teacher, Student };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 4;
  double lr_conf = 1e-5;   // confidence head rate
  double lr_thr = 1e-6;    // threshold head rate
  double lr_decay = 0.99;  // per epoch
  double ema_m = 0.999;
  double optimal_scale = 250.0;
  int c_max = 6;
  int components = 0;  // 0 selects C by BIC
  std::uint64_t seed = 1;
  EvalWith eval_with = EvalWith::Teacher;
  double gamma_min = 0.25;
  double gamma_max = 4.0;
  std::size_t max_pixels = 50'000'000;
  int min_component_area = 2;  // instance extraction filter during validation
  int checkpoint_every = 0;    // write params every N epochs (0 = never)
  std::string checkpoint_dir;
};

struct TrainHistory {
  std::vector<double> seg, consis, total, val_f1;
  std::vector<std::uint64_t> version;

  std::size_t epochs() const { return seg.size(); }
};

struct TrainOutput {
  LocatorParams student;
  LocatorParams teacher;
  TrainHistory history;
  int excluded_scenes = 0;
};

// Element-wise convex combination m*teacher + (1-m)*student; the teacher's
// version counts EMA applications (nothing else may move it).
LocatorParams ema_update(const LocatorParams& teacher, const LocatorParams& student, double m);

// Eq-style consistency penalty: mean of squared confidence-vs-teacher error
// plus absolute binary disagreement.
double consistency_loss(const PixelMap& conf_ori, const PixelMap& bin_ori,
                        const PixelMap& bin_scoped);

struct PlanSettings {
  int components = 0;  // 0 = BIC with c_max
  int c_max = 6;
  double optimal_scale = 250.0;
  double gamma_min = 0.25;
  double gamma_max = 4.0;
  AlphaTransform transform = AlphaTransform::LogArea;
  FactorMode mode = FactorMode::SqrtAreaRatio;
  std::uint64_t seed = 0;
};

// Fit -> decouple -> plan for one annotated scene.
ScopePlan make_scene_plan(const Scene& scene, const PlanSettings& settings);

PlanSettings plan_settings_from(const TrainConfig& cfg);

// Full scoped-teacher training: student reads originals, the EMA teacher
// reads scoped inputs, a consistency loss carries the scoped knowledge over.
// Returns the best-validation-F1 snapshot.
TrainOutput train_scoped(const std::vector<Scene>& train, const std::vector<Scene>& val,
                         const TrainConfig& cfg);

// Ablation control arm: segmentation loss only.
TrainOutput train_baseline(const std::vector<Scene>& train, const std::vector<Scene>& val,
                           const TrainConfig& cfg);

// Teacher without GMS: consistency against the teacher's plain prediction.
TrainOutput train_plain_teacher(const std::vector<Scene>& train, const std::vector<Scene>& val,
                                const TrainConfig& cfg);

// Single forward pass at the original resolution.
PixelMap infer(const LocatorParams& params, const ImageGrid& img);

// Global-counts F1 over a scene set (optionally with test-time scoping).
double dataset_f1(const LocatorParams& params, const std::vector<Scene>& scenes,
                  int min_component_area = 2);

std::string history_to_csv(const TrainHistory& history);

}  // namespace gms
