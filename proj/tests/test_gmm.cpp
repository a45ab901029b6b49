#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gms/gmm.hpp"
#include "test_util.hpp"

using namespace gms;

namespace {

std::vector<ScaleObservation> make_obs(const std::vector<std::pair<double, double>>& av) {
  std::vector<ScaleObservation> obs;
  for (std::size_t i = 0; i < av.size(); ++i)
    obs.push_back({av[i].first, av[i].second, static_cast<int>(i)});
  return obs;
}

// Two well-separated clusters in (alpha, v); returns observations plus the
// generating label per observation.
std::pair<std::vector<ScaleObservation>, std::vector<int>> two_cluster_sample(
    int n, std::uint64_t seed, double sep = 5.0, double sigma = 0.1) {
  Rng rng(seed);
  std::vector<ScaleObservation> obs;
  std::vector<int> labels;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    const double ca = label ? 4.0 + sep * sigma : 4.0;
    const double cv = label ? 0.7 : 0.2;
    obs.push_back({ca + sigma * rng.normal(),
                   std::clamp(cv + sigma * rng.normal(), 0.0, 1.0), i});
    labels.push_back(label);
  }
  return {obs, labels};
}

// Dense evaluation of the responsibility formula, no log-space tricks.
std::vector<double> dense_responsibility_row(const MixtureModel& m, double alpha, double v) {
  std::vector<double> num(m.components.size());
  double denom = 0.0;
  for (std::size_t c = 0; c < m.components.size(); ++c) {
    const auto& comp = m.components[c];
    const double da = alpha - comp.mean[0];
    const double dv = v - comp.mean[1];
    const double pdf = std::exp(-0.5 * da * da / comp.var[0]) / std::sqrt(2 * M_PI * comp.var[0]) *
                       std::exp(-0.5 * dv * dv / comp.var[1]) / std::sqrt(2 * M_PI * comp.var[1]);
    num[c] = comp.pi * pdf;
    denom += num[c];
  }
  for (double& x : num) x /= denom;
  return num;
}

Scene banded_scene(int n_per_band, std::uint64_t seed) {
  Rng rng(seed);
  Scene scene;
  scene.id = "bands";
  scene.image = make_image(120, 120, 1, 0.0);
  const double sides[3] = {4.0, 8.0, 16.0};
  for (int b = 0; b < 3; ++b) {
    for (int i = 0; i < n_per_band; ++i) {
      const double s = sides[b] * std::exp(0.05 * rng.normal());
      const double cy = rng.uniform(40.0 * b + 6.0, 40.0 * b + 34.0);
      const double cx = rng.uniform(10.0, 110.0);
      scene.annotations.push_back(InstanceAnnotation::make(cx, cy, s, s));
    }
  }
  return scene;
}

}  // namespace

TEST_CASE("collect_observations applies the log transform and normalizes v") {
  Scene scene = gmstest::scene_with_boxes(100, 100, {{50, 50, 10, 10}});
  const auto obs = collect_observations(scene);
  REQUIRE(obs.size() == 1);
  CHECK(obs[0].alpha == std::log(100.0));
  CHECK(obs[0].v == 0.5);
  CHECK(obs[0].index == 0);
}

TEST_CASE("identical boxes at different rows share alpha but not v") {
  Scene scene = gmstest::scene_with_boxes(100, 100, {{30, 20, 8, 8}, {60, 80, 8, 8}});
  const auto obs = collect_observations(scene);
  CHECK(obs[0].alpha == obs[1].alpha);
  CHECK(obs[0].v != obs[1].v);
}

TEST_CASE("raw-alpha transform keeps plain areas") {
  Scene scene = gmstest::scene_with_boxes(100, 100, {{50, 50, 10, 10}});
  const auto obs = collect_observations(scene, AlphaTransform::RawArea);
  CHECK(obs[0].alpha == 100.0);
}

TEST_CASE("empty scenes cannot produce observations") {
  Scene scene;
  scene.id = "empty";
  scene.image = make_image(10, 10);
  CHECK_THROWS_AS(collect_observations(scene), InsufficientDataError);
}

TEST_CASE("init with one component centers on the sample mean") {
  const auto obs = make_obs({{1.0, 0.1}, {2.0, 0.5}, {6.0, 0.9}});
  const MixtureModel m = init_mixture(obs, 1, 0);
  CHECK(m.components[0].pi == 1.0);
  CHECK(m.components[0].mean[0] == doctest::Approx(3.0));
  CHECK(m.components[0].mean[1] == doctest::Approx(0.5));
}

TEST_CASE("init with two v-separated clusters lands one mean per cluster") {
  auto [obs, labels] = two_cluster_sample(200, 42);
  const MixtureModel m = init_mixture(obs, 2, 0);
  // Chunk oracle: mean v of the lower/upper halves of the v-sorted sample.
  std::vector<double> vs;
  for (const auto& o : obs) vs.push_back(o.v);
  std::sort(vs.begin(), vs.end());
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < vs.size() / 2; ++i) lo += vs[i];
  for (std::size_t i = vs.size() / 2; i < vs.size(); ++i) hi += vs[i];
  CHECK(m.components[0].mean[1] == doctest::Approx(lo / (vs.size() / 2)));
  CHECK(m.components[1].mean[1] == doctest::Approx(hi / (vs.size() - vs.size() / 2)));
  CHECK(m.components[0].mean[1] < 0.35);
  CHECK(m.components[1].mean[1] > 0.55);
}

TEST_CASE("init is insufficient-data safe and deterministic") {
  const auto obs = make_obs({{1.0, 0.2}, {2.0, 0.8}});
  CHECK_THROWS_AS(init_mixture(obs, 3, 0), InsufficientDataError);
  const MixtureModel a = init_mixture(obs, 2, 7);
  const MixtureModel b = init_mixture(obs, 2, 7);
  CHECK(mixture_to_json(a) == mixture_to_json(b));
}

TEST_CASE("e-step with a single component returns all-ones responsibilities") {
  const auto obs = make_obs({{1.0, 0.1}, {5.0, 0.9}, {3.0, 0.4}});
  const MixtureModel m = init_mixture(obs, 1, 0);
  const Responsibilities r = e_step(m, obs);
  for (int i = 0; i < r.n; ++i) CHECK(r.at(i, 0) == 1.0);
}

TEST_CASE("e-step matches the dense responsibility formula") {
  MixtureModel m;
  m.components.push_back({0.6, {1.0, 0.2}, {0.05, 0.01}});
  m.components.push_back({0.4, {3.0, 0.8}, {0.20, 0.02}});
  const auto obs = make_obs({{1.0, 0.2}, {2.5, 0.6}, {3.2, 0.9}, {0.4, 0.5}});
  const Responsibilities r = e_step(m, obs);
  for (int i = 0; i < r.n; ++i) {
    const auto want = dense_responsibility_row(m, obs[i].alpha, obs[i].v);
    double row = 0.0;
    for (int c = 0; c < r.c; ++c) {
      CHECK(r.at(i, c) == doctest::Approx(want[c]).epsilon(1e-12));
      row += r.at(i, c);
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
  }
  // Observation sitting on component 1's mean with far-apart components.
  CHECK(r.at(0, 0) > 0.99);
}

TEST_CASE("two identical components split responsibility evenly") {
  MixtureModel m;
  m.components.push_back({0.5, {2.0, 0.5}, {0.1, 0.1}});
  m.components.push_back({0.5, {2.0, 0.5}, {0.1, 0.1}});
  const auto obs = make_obs({{1.0, 0.3}, {2.0, 0.5}, {9.0, 0.99}});
  const Responsibilities r = e_step(m, obs);
  for (int i = 0; i < r.n; ++i) {
    CHECK(r.at(i, 0) == doctest::Approx(0.5));
    CHECK(r.at(i, 1) == doctest::Approx(0.5));
  }
}

TEST_CASE("extreme separation stays finite in log-space") {
  MixtureModel m;
  m.components.push_back({0.5, {0.0, 0.0}, {1e-6, 1e-6}});
  m.components.push_back({0.5, {1000.0, 1.0}, {1e-6, 1e-6}});
  const auto obs = make_obs({{0.0, 0.0}, {1000.0, 1.0}, {500.0, 0.5}});
  const Responsibilities r = e_step(m, obs);
  for (double v : r.lambda) CHECK(std::isfinite(v));
  CHECK(r.at(0, 0) == doctest::Approx(1.0));
  CHECK(r.at(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("m-step with one-hot responsibilities recovers cluster statistics") {
  auto [obs, labels] = two_cluster_sample(100, 3);
  Responsibilities r;
  r.n = static_cast<int>(obs.size());
  r.c = 2;
  r.lambda.assign(static_cast<std::size_t>(r.n) * 2, 0.0);
  for (int i = 0; i < r.n; ++i) r.at(i, labels[i]) = 1.0;
  const MixtureModel m = m_step(obs, r);
  for (int c = 0; c < 2; ++c) {
    double sa = 0, sv = 0;
    int n = 0;
    for (int i = 0; i < r.n; ++i)
      if (labels[i] == c) {
        sa += obs[i].alpha;
        sv += obs[i].v;
        ++n;
      }
    const double ma = sa / n, mv = sv / n;
    double qa = 0, qv = 0;
    for (int i = 0; i < r.n; ++i)
      if (labels[i] == c) {
        qa += (obs[i].alpha - ma) * (obs[i].alpha - ma);
        qv += (obs[i].v - mv) * (obs[i].v - mv);
      }
    CHECK(m.components[c].pi == doctest::Approx(static_cast<double>(n) / r.n));
    CHECK(m.components[c].mean[0] == doctest::Approx(ma).epsilon(1e-12));
    CHECK(m.components[c].mean[1] == doctest::Approx(mv).epsilon(1e-12));
    CHECK(m.components[c].var[0] == doctest::Approx(qa / n).epsilon(1e-10));
    CHECK(m.components[c].var[1] == doctest::Approx(qv / n).epsilon(1e-10));
  }
}

TEST_CASE("m-step with uniform responsibilities collapses to global statistics") {
  auto [obs, labels] = two_cluster_sample(60, 4);
  Responsibilities r;
  r.n = static_cast<int>(obs.size());
  r.c = 3;
  r.lambda.assign(static_cast<std::size_t>(r.n) * 3, 1.0 / 3.0);
  const MixtureModel m = m_step(obs, r);
  for (int c = 1; c < 3; ++c) {
    CHECK(m.components[c].mean[0] == doctest::Approx(m.components[0].mean[0]));
    CHECK(m.components[c].var[1] == doctest::Approx(m.components[0].var[1]));
    CHECK(m.components[c].pi == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("m-step is a fixed point after convergence") {
  auto [obs, labels] = two_cluster_sample(300, 5);
  const FitResult fit = fit_em(obs, 2, 1e-12, 500, 1);
  const Responsibilities r = e_step(fit.model, obs);
  const MixtureModel again = m_step(obs, r);
  for (int c = 0; c < 2; ++c) {
    CHECK(again.components[c].mean[0] ==
          doctest::Approx(fit.model.components[c].mean[0]).epsilon(1e-6));
    CHECK(again.components[c].mean[1] ==
          doctest::Approx(fit.model.components[c].mean[1]).epsilon(1e-6));
    CHECK(again.components[c].pi == doctest::Approx(fit.model.components[c].pi).epsilon(1e-6));
  }
}

TEST_CASE("degenerate component is re-seeded at the worst-explained point") {
  const auto obs = make_obs({{1.0, 0.1}, {1.1, 0.12}, {9.0, 0.9}});
  Responsibilities r;
  r.n = 3;
  r.c = 2;
  r.lambda = {1, 0, 1, 0, 1, 0};  // second component owns nothing
  const MixtureModel m = m_step(obs, r);
  double total = 0.0;
  for (const auto& c : m.components) {
    total += c.pi;
    CHECK(c.var[0] >= kVarianceFloor);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  // The re-seed lands on an actual observation.
  bool found = false;
  for (const auto& o : obs)
    if (m.components[1].mean[0] == o.alpha && m.components[1].mean[1] == o.v) found = true;
  CHECK(found);
}

TEST_CASE("EM recovers a well-separated two-component mixture") {
  auto [obs, labels] = two_cluster_sample(500, 11);
  const FitResult fit = fit_em(obs, 2, 1e-8, 200, 1);
  REQUIRE(fit.model.component_count() == 2);
  // Components are v-ordered: cluster 0 sits at v 0.2, cluster 1 at 0.7.
  CHECK(fit.model.components[0].mean[0] == doctest::Approx(4.0).epsilon(0.1));
  CHECK(fit.model.components[0].mean[1] == doctest::Approx(0.2).epsilon(0.1));
  CHECK(fit.model.components[1].mean[1] == doctest::Approx(0.7).epsilon(0.1));
  int correct = 0;
  for (int i = 0; i < fit.resp.n; ++i) {
    const int hard = fit.resp.at(i, 1) > fit.resp.at(i, 0) ? 1 : 0;
    if (hard == labels[i]) ++correct;
  }
  CHECK(correct >= 475);  // 95 percent
  for (std::size_t i = 1; i < fit.model.loglik_history.size(); ++i)
    CHECK(fit.model.loglik_history[i] >= fit.model.loglik_history[i - 1] - 1e-7);
}

TEST_CASE("single-component EM converges immediately") {
  auto [obs, labels] = two_cluster_sample(100, 12);
  const FitResult fit = fit_em(obs, 1, 1e-8, 200, 1);
  CHECK(fit.model.loglik_history.size() <= 2);
}

TEST_CASE("infinite tolerance stops after exactly one EM iteration") {
  auto [obs, labels] = two_cluster_sample(100, 13);
  const FitResult fit = fit_em(obs, 2, std::numeric_limits<double>::infinity(), 200, 1);
  CHECK(fit.model.loglik_history.size() == 2);
}

TEST_CASE("EM responsibilities are row-stochastic and weights sum to one") {
  auto [obs, labels] = two_cluster_sample(150, 14, 2.0, 0.3);
  const FitResult fit = fit_em(obs, 3, 1e-8, 100, 2);
  double pis = 0.0;
  for (const auto& c : fit.model.components) pis += c.pi;
  CHECK(pis == doctest::Approx(1.0).epsilon(1e-9));
  for (int i = 0; i < fit.resp.n; ++i) {
    double row = 0.0;
    for (int c = 0; c < fit.resp.c; ++c) {
      row += fit.resp.at(i, c);
      CHECK(fit.resp.at(i, c) >= 0.0);
      CHECK(fit.resp.at(i, c) <= 1.0);
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("identical inputs give bit-identical fits") {
  auto [obs, labels] = two_cluster_sample(200, 15);
  const FitResult a = fit_em(obs, 2, 1e-8, 200, 9);
  const FitResult b = fit_em(obs, 2, 1e-8, 200, 9);
  CHECK(mixture_to_json(a.model) == mixture_to_json(b.model));
  CHECK(a.resp.lambda == b.resp.lambda);
}

TEST_CASE("BIC prefers one component for a single tight cluster") {
  Rng rng(21);
  std::vector<ScaleObservation> obs;
  for (int i = 0; i < 120; ++i)
    obs.push_back({3.0 + 0.05 * rng.normal(), std::clamp(0.5 + 0.05 * rng.normal(), 0.0, 1.0), i});
  CHECK(select_component_count(obs, 4, 1) == 1);
  // Oracle: BIC from independent fits must be minimized at the returned C.
  std::vector<double> bic;
  for (int c = 1; c <= 4; ++c) {
    const FitResult fit = fit_em(obs, c, 1e-8, 200, 1);
    bic.push_back(-2.0 * fit.model.loglik_history.back() +
                  (5.0 * c - 1.0) * std::log(static_cast<double>(obs.size())));
  }
  CHECK(std::min_element(bic.begin(), bic.end()) == bic.begin());
}

TEST_CASE("BIC finds three well-separated bands") {
  Rng rng(22);
  std::vector<ScaleObservation> obs;
  const double centers[3][2] = {{2.0, 0.15}, {4.0, 0.5}, {6.0, 0.85}};
  for (int i = 0; i < 300; ++i) {
    const auto& c = centers[i % 3];
    obs.push_back({c[0] + 0.08 * rng.normal(), std::clamp(c[1] + 0.03 * rng.normal(), 0.0, 1.0),
                   i});
  }
  CHECK(select_component_count(obs, 6, 1) == 3);
}

TEST_CASE("single observation selects a single component") {
  const auto obs = make_obs({{2.0, 0.5}});
  CHECK(select_component_count(obs, 6, 1) == 1);
}

TEST_CASE("decoupling one component yields one full-height band") {
  Scene scene = banded_scene(10, 31);
  const auto obs = collect_observations(scene);
  const FitResult fit = fit_em(obs, 1, 1e-8, 100, 1);
  const auto bands = decouple(fit.model, fit.resp, scene);
  REQUIRE(bands.size() == 1);
  CHECK(bands[0].v_lo == 0);
  CHECK(bands[0].v_hi == scene.image.height);
  CHECK(bands[0].member_indices.size() == scene.annotations.size());
}

TEST_CASE("symmetric components cut at the midpoint of their means") {
  MixtureModel m;
  m.components.push_back({0.5, {2.0, 0.3}, {0.1, 0.01}});
  m.components.push_back({0.5, {2.0, 0.7}, {0.1, 0.01}});
  Scene scene = gmstest::scene_with_boxes(100, 100, {{50, 30, 5, 5}, {50, 70, 5, 5}});
  Responsibilities r;
  r.n = 2;
  r.c = 2;
  r.lambda = {1, 0, 0, 1};
  const auto bands = decouple(m, r, scene);
  REQUIRE(bands.size() == 2);
  CHECK(bands[0].v_hi == 50);
  CHECK(bands[1].v_lo == 50);
}

TEST_CASE("three-band scene decouples with high membership purity") {
  Scene scene = banded_scene(40, 33);
  const auto obs = collect_observations(scene);
  const FitResult fit = fit_em(obs, 3, 1e-8, 200, 1);
  const auto bands = decouple(fit.model, fit.resp, scene);
  REQUIRE(bands.size() == 3);
  // Partition and member-conservation invariants.
  CHECK(bands[0].v_lo == 0);
  CHECK(bands[2].v_hi == scene.image.height);
  CHECK(bands[0].v_hi == bands[1].v_lo);
  CHECK(bands[1].v_hi == bands[2].v_lo);
  std::vector<int> seen(scene.annotations.size(), 0);
  for (const auto& band : bands)
    for (int idx : band.member_indices) ++seen[idx];
  for (int s : seen) CHECK(s == 1);
  // Generating band = index of the band whose row range holds the instance.
  int pure = 0;
  for (std::size_t i = 0; i < scene.annotations.size(); ++i) {
    const int gen = static_cast<int>(scene.annotations[i].cy / 40.0);
    for (int b = 0; b < 3; ++b)
      for (int idx : bands[b].member_indices)
        if (idx == static_cast<int>(i) && b == gen) ++pure;
  }
  CHECK(pure >= static_cast<int>(0.95 * scene.annotations.size()));
}

TEST_CASE("empty bands borrow the nearest populated mean scale") {
  MixtureModel m;
  m.components.push_back({0.98, {2.0, 0.3}, {0.1, 0.01}});
  m.components.push_back({0.02, {2.0, 0.9}, {0.1, 0.01}});
  Scene scene = gmstest::scene_with_boxes(100, 100, {{50, 30, 5, 5}, {50, 32, 5, 5}});
  Responsibilities r;
  r.n = 2;
  r.c = 2;
  r.lambda = {1, 0, 1, 0};
  const auto bands = decouple(m, r, scene);
  REQUIRE(bands.size() == 2);
  CHECK(bands[1].member_indices.empty());
  CHECK(bands[1].mean_scale == bands[0].mean_scale);
  CHECK(bands[0].v_hi == bands[1].v_lo);
}

TEST_CASE("mixture JSON round-trips") {
  auto [obs, labels] = two_cluster_sample(100, 44);
  const FitResult fit = fit_em(obs, 2, 1e-8, 50, 3);
  const MixtureModel back = mixture_from_json(mixture_to_json(fit.model));
  CHECK(mixture_to_json(back) == mixture_to_json(fit.model));
}
