#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gms/synth.hpp"
#include "gms/teacher.hpp"
#include "test_util.hpp"

using namespace gms;

namespace {

std::vector<Scene> small_dataset(int n, std::uint64_t seed, int size = 96) {
  SynthConfig cfg;
  cfg.width = size;
  cfg.height = size;
  cfg.n_min = 8;
  cfg.n_max = 12;
  cfg.bands = {{0.0, 0.5, 40.0, 0.15, 0.5}, {0.5, 1.0, 160.0, 0.15, 0.5}};
  cfg.noise_level = 0.15;
  cfg.speckle_per_pixel = 0.0008;
  std::vector<Scene> scenes;
  for (int i = 0; i < n; ++i) {
    auto [scene, truth] =
        generate_scene(cfg, derive_seed(seed, std::to_string(i), "ds"), "s" + std::to_string(i));
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

TrainConfig fast_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.lr_conf = 3.0;
  cfg.lr_thr = 0.3;
  cfg.ema_m = 0.8;
  cfg.components = 2;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("EMA arithmetic hand cases") {
  LocatorParams t = LocatorParams::zeros(2);
  LocatorParams s = LocatorParams::zeros(2);
  t.conf = {1.0, 1.0, 1.0};
  t.thr = {1.0, 1.0, 1.0};
  s.conf = {0.0, 0.0, 0.0};
  s.thr = {0.0, 0.0, 0.0};
  const LocatorParams u = ema_update(t, s, 0.9);
  for (double v : u.conf) CHECK(v == doctest::Approx(0.9));
  const LocatorParams keep = ema_update(t, s, 1.0);
  CHECK(keep.conf == t.conf);
  CHECK(keep.thr == t.thr);
  const LocatorParams copy = ema_update(t, s, 0.0);
  CHECK(copy.conf == s.conf);
  CHECK(copy.thr == s.thr);
}

TEST_CASE("EMA equals the element-wise formula on random vectors") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LocatorParams t = gmstest::random_params(seed, 2.0);
    const LocatorParams s = gmstest::random_params(seed + 100, 2.0);
    const double m = 0.1 * static_cast<double>(seed);
    const LocatorParams u = ema_update(t, s, m);
    for (std::size_t i = 0; i < u.conf.size(); ++i)
      CHECK(u.conf[i] == m * t.conf[i] + (1.0 - m) * s.conf[i]);
    for (std::size_t i = 0; i < u.thr.size(); ++i)
      CHECK(u.thr[i] == m * t.thr[i] + (1.0 - m) * s.thr[i]);
  }
}

TEST_CASE("EMA audits its inputs") {
  const LocatorParams t = LocatorParams::zeros(10);
  const LocatorParams s = LocatorParams::zeros(4);
  CHECK_THROWS_AS(ema_update(t, s, 0.5), ValidationError);
  CHECK_THROWS_AS(ema_update(t, t, 1.5), ValidationError);
  const LocatorParams u = ema_update(t, t, 0.5);
  CHECK(u.version == t.version + 1);
}

TEST_CASE("consistency loss hand cases") {
  const PixelMap ones = make_map(6, 6, MapKind::Binary, 1.0);
  const PixelMap conf_half = make_map(6, 6, MapKind::Confidence, 0.5);
  CHECK(consistency_loss(PixelMap(ones), ones, ones) == 0.0);
  CHECK(consistency_loss(conf_half, ones, ones) == doctest::Approx(0.25));
}

TEST_CASE("consistency loss matches a scalar loop on random maps") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const int w = 5 + static_cast<int>(s % 11), h = 4 + static_cast<int>(s % 5);
    const PixelMap f = gmstest::random_map(w, h, MapKind::Confidence, s);
    const PixelMap b = gmstest::random_map(w, h, MapKind::Binary, s + 50);
    const PixelMap t = gmstest::random_map(w, h, MapKind::Binary, s + 90);
    double want = 0.0;
    for (std::size_t i = 0; i < f.data.size(); ++i)
      want += (f.data[i] - t.data[i]) * (f.data[i] - t.data[i]) + std::fabs(b.data[i] - t.data[i]);
    want /= static_cast<double>(f.data.size());
    CHECK(std::fabs(consistency_loss(f, b, t) - want) <= 1e-12);
  }
}

TEST_CASE("scene plans cover the image and respect clamps") {
  const auto scenes = small_dataset(2, 9);
  PlanSettings settings;
  settings.components = 2;
  for (const Scene& scene : scenes) {
    const ScopePlan plan = make_scene_plan(scene, settings);
    plan.validate(scene.image.height);
    for (double f : plan.factors) {
      CHECK(f >= settings.gamma_min);
      CHECK(f <= settings.gamma_max);
    }
  }
}

TEST_CASE("scoped training is deterministic") {
  const auto train = small_dataset(4, 13);
  const auto val = small_dataset(2, 14);
  const TrainConfig cfg = fast_config();
  const TrainOutput a = train_scoped(train, val, cfg);
  const TrainOutput b = train_scoped(train, val, cfg);
  CHECK(a.student.conf == b.student.conf);
  CHECK(a.teacher.conf == b.teacher.conf);
  CHECK(a.history.seg == b.history.seg);
  CHECK(a.history.val_f1 == b.history.val_f1);
  CHECK(history_to_csv(a.history) == history_to_csv(b.history));
}

TEST_CASE("ema zero with a plain teacher keeps teacher and student identical") {
  const auto train = small_dataset(3, 15);
  const auto val = small_dataset(2, 16);
  TrainConfig cfg = fast_config();
  cfg.ema_m = 0.0;
  const TrainOutput out = train_plain_teacher(train, val, cfg);
  CHECK(out.teacher.conf == out.student.conf);
  CHECK(out.teacher.thr == out.student.thr);
  // Inference with either parameter set is then the same map.
  const PixelMap a = infer(out.teacher, val[0].image);
  const PixelMap b = infer(out.student, val[0].image);
  CHECK(a.data == b.data);
}

TEST_CASE("baseline histories carry no consistency loss") {
  const auto train = small_dataset(3, 17);
  const auto val = small_dataset(2, 18);
  const TrainOutput out = train_baseline(train, val, fast_config());
  for (double c : out.history.consis) CHECK(c == 0.0);
  for (std::size_t e = 0; e < out.history.epochs(); ++e)
    CHECK(out.history.total[e] == out.history.seg[e]);
  CHECK(out.history.epochs() == 3);
}

TEST_CASE("teacher parameters move only through EMA (version audit)") {
  const auto train = small_dataset(3, 19);
  const auto val = small_dataset(2, 20);
  TrainConfig cfg = fast_config();
  cfg.epochs = 2;
  cfg.eval_with = EvalWith::Student;
  const TrainOutput out = train_plain_teacher(train, val, cfg);
  // 3 scenes, batch 2 -> 2 steps per epoch, 2 epochs -> 4 EMA applications;
  // the best snapshot is taken at an epoch boundary.
  CHECK(out.history.version.back() == 4);
  CHECK(out.teacher.version <= 4);
  CHECK(out.teacher.version % 2 == 0);
}

TEST_CASE("training rejects empty splits") {
  const auto scenes = small_dataset(2, 21);
  CHECK_THROWS_AS(train_baseline({}, scenes, fast_config()), ValidationError);
  CHECK_THROWS_AS(train_baseline(scenes, {}, fast_config()), ValidationError);
}

TEST_CASE("annotation-free scenes are excluded from teacher arms") {
  auto train = small_dataset(3, 22);
  Scene blank;
  blank.id = "blank";
  blank.image = make_image(96, 96, 1, 0.2);
  train.push_back(blank);
  const auto val = small_dataset(2, 23);
  const TrainOutput out = train_scoped(train, val, fast_config());
  CHECK(out.excluded_scenes == 1);
}

TEST_CASE("inference with zero parameters yields an empty binary map") {
  const PixelMap out = infer(LocatorParams::zeros(), gmstest::noise_image(32, 32, 7));
  for (double v : out.data) CHECK(v == 0.0);  // 0.5 confidence under 0.575 threshold
}

TEST_CASE("history CSV has the documented schema") {
  TrainHistory h;
  h.seg = {0.5, 0.4};
  h.consis = {0.1, 0.05};
  h.total = {0.6, 0.45};
  h.val_f1 = {0.2, 0.3};
  h.version = {2, 4};
  const std::string csv = history_to_csv(h);
  CHECK(csv.rfind("epoch,seg,consis,total,val_f1\n", 0) == 0);
  CHECK(csv.find("\n0,0.5,0.1,0.6,0.2\n") != std::string::npos);
}
