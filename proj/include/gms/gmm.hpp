#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gms/core_types.hpp"
#include "gms/scope.hpp"

namespace gms {

struct ScaleObservation {
  double alpha = 0.0;  // transformed scale (default ln of box area)
  double v = 0.0;      // vertical position normalized to [0,1]
  int index = 0;       // owning annotation index
};

enum class AlphaTransform { LogArea, RawArea };

struct GaussianComponent {
  double pi = 0.0;
  std::array<double, 2> mean{};  // (alpha, v)
  std::array<double, 2> var{};   // per-axis variance, diagonal covariance
};

struct MixtureModel {
  std::vector<GaussianComponent> components;
  std::vector<double> loglik_history;

  int component_count() const { return static_cast<int>(components.size()); }
  void validate() const;
};

struct Responsibilities {
  int n = 0;
  int c = 0;
  std::vector<double> lambda;  // row-major n x c

  double& at(int i, int k) { return lambda[static_cast<std::size_t>(i) * c + k]; }
  double at(int i, int k) const { return lambda[static_cast<std::size_t>(i) * c + k]; }
};

constexpr double kVarianceFloor = 1e-6;

std::vector<ScaleObservation> collect_observations(const Scene& scene,
                                                   AlphaTransform transform = AlphaTransform::LogArea);

MixtureModel init_mixture(const std::vector<ScaleObservation>& obs, int components,
                          std::uint64_t seed);

Responsibilities e_step(const MixtureModel& model, const std::vector<ScaleObservation>& obs);

// E-step that also reports the log-likelihood of the observations.
double e_step_loglik(const MixtureModel& model, const std::vector<ScaleObservation>& obs,
                     Responsibilities* resp);

MixtureModel m_step(const std::vector<ScaleObservation>& obs, const Responsibilities& resp);

struct FitResult {
  MixtureModel model;
  Responsibilities resp;
};

FitResult fit_em(const std::vector<ScaleObservation>& obs, int components, double tol = 1e-8,
                 int max_iter = 200, std::uint64_t seed = 0);

// BIC selection over C in [1, min(c_max, N)], 5C-1 free parameters per model.
int select_component_count(const std::vector<ScaleObservation>& obs, int c_max,
                           std::uint64_t seed = 0);

// Splits the fitted mixture into vertically compact bands partitioning
// [0, H): each instance goes to its argmax-responsibility component, band
// boundaries sit where adjacent weighted v-marginals intersect.
std::vector<SubDistributionBand> decouple(const MixtureModel& model, const Responsibilities& resp,
                                          const Scene& scene);

std::string mixture_to_json(const MixtureModel& model);
MixtureModel mixture_from_json(const std::string& text);

}  // namespace gms
