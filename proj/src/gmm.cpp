#include "gms/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace gms {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLogClamp = -745.0;  // exp underflows to 0 just below this

double log_density(const GaussianComponent& comp, double alpha, double v) {
  const double da = alpha - comp.mean[0];
  const double dv = v - comp.mean[1];
  return -0.5 * (kLog2Pi + std::log(comp.var[0]) + da * da / comp.var[0]) +
         -0.5 * (kLog2Pi + std::log(comp.var[1]) + dv * dv / comp.var[1]);
}

// Global per-axis mean/variance of the observations, variance floored.
void global_stats(const std::vector<ScaleObservation>& obs, std::array<double, 2>& mean,
                  std::array<double, 2>& var) {
  const double n = static_cast<double>(obs.size());
  double sa = 0, sv = 0;
  for (const auto& o : obs) {
    sa += o.alpha;
    sv += o.v;
  }
  mean = {sa / n, sv / n};
  double qa = 0, qv = 0;
  for (const auto& o : obs) {
    qa += (o.alpha - mean[0]) * (o.alpha - mean[0]);
    qv += (o.v - mean[1]) * (o.v - mean[1]);
  }
  var = {std::max(kVarianceFloor, qa / n), std::max(kVarianceFloor, qv / n)};
}

void sort_components_by_v(MixtureModel& model, Responsibilities* resp) {
  const int c = model.component_count();
  std::vector<int> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return model.components[a].mean[1] < model.components[b].mean[1];
  });
  bool already = true;
  for (int k = 0; k < c; ++k) already = already && order[k] == k;
  if (already) return;
  std::vector<GaussianComponent> comps(c);
  for (int k = 0; k < c; ++k) comps[k] = model.components[order[k]];
  model.components = std::move(comps);
  if (resp) {
    Responsibilities permuted = *resp;
    for (int i = 0; i < resp->n; ++i)
      for (int k = 0; k < c; ++k) permuted.at(i, k) = resp->at(i, order[k]);
    *resp = std::move(permuted);
  }
}

}  // namespace

void MixtureModel::validate() const {
  if (components.empty()) throw ValidationError("mixture has no components");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.pi > 0.0 && c.pi <= 1.0)) throw ValidationError("mixing weight outside (0,1]");
    if (c.var[0] < kVarianceFloor || c.var[1] < kVarianceFloor)
      throw ValidationError("component variance below floor");
    total += c.pi;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ValidationError("mixing weights do not sum to 1");
  for (std::size_t i = 1; i < loglik_history.size(); ++i)
    if (loglik_history[i] < loglik_history[i - 1] - 1e-7)
      throw ValidationError("log-likelihood decreased during EM");
}

std::vector<ScaleObservation> collect_observations(const Scene& scene, AlphaTransform transform) {
  if (scene.annotations.empty())
    throw InsufficientDataError("scene '" + scene.id + "' has no annotations");
  std::vector<ScaleObservation> obs;
  obs.reserve(scene.annotations.size());
  const double height = static_cast<double>(scene.image.height);
  for (std::size_t i = 0; i < scene.annotations.size(); ++i) {
    const auto& a = scene.annotations[i];
    ScaleObservation o;
    o.alpha = transform == AlphaTransform::LogArea ? std::log(a.scale) : a.scale;
    o.v = a.cy / height;
    o.index = static_cast<int>(i);
    if (!std::isfinite(o.alpha)) throw ValidationError("non-finite scale observation");
    obs.push_back(o);
  }
  return obs;
}

MixtureModel init_mixture(const std::vector<ScaleObservation>& obs, int components,
                          std::uint64_t seed) {
  (void)seed;  // initialization is fully deterministic; seed kept for the contract
  const int n = static_cast<int>(obs.size());
  if (components < 1) throw ValidationError("component count must be >= 1");
  if (components > n)
    throw InsufficientDataError("need at least " + std::to_string(components) +
                                " observations for " + std::to_string(components) +
                                " components, have " + std::to_string(n));
  std::array<double, 2> gmean{}, gvar{};
  global_stats(obs, gmean, gvar);

  // v-sorted observations split into near-equal contiguous chunks; one
  // component per chunk with the chunk mean as its center.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return obs[a].v < obs[b].v; });

  MixtureModel model;
  model.components.resize(components);
  for (int k = 0; k < components; ++k) {
    const int lo = static_cast<int>(static_cast<std::int64_t>(n) * k / components);
    const int hi = static_cast<int>(static_cast<std::int64_t>(n) * (k + 1) / components);
    double sa = 0, sv = 0;
    for (int i = lo; i < hi; ++i) {
      sa += obs[order[i]].alpha;
      sv += obs[order[i]].v;
    }
    const double m = static_cast<double>(hi - lo);
    GaussianComponent& comp = model.components[k];
    comp.pi = 1.0 / components;
    comp.mean = {sa / m, sv / m};
    comp.var = gvar;
  }
  return model;
}

double e_step_loglik(const MixtureModel& model, const std::vector<ScaleObservation>& obs,
                     Responsibilities* resp) {
  const int n = static_cast<int>(obs.size());
  const int c = model.component_count();
  if (resp) {
    resp->n = n;
    resp->c = c;
    resp->lambda.assign(static_cast<std::size_t>(n) * c, 0.0);
  }
  std::vector<double> logp(c);
  double loglik = 0.0;
  for (int i = 0; i < n; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < c; ++k) {
      logp[k] = std::log(model.components[k].pi) +
                log_density(model.components[k], obs[i].alpha, obs[i].v);
      peak = std::max(peak, logp[k]);
    }
    double wsum = 0.0;
    for (int k = 0; k < c; ++k) {
      logp[k] = std::exp(std::max(logp[k] - peak, kLogClamp));
      wsum += logp[k];
    }
    loglik += peak + std::log(wsum);
    if (resp)
      for (int k = 0; k < c; ++k) resp->at(i, k) = logp[k] / wsum;
  }
  return loglik;
}

Responsibilities e_step(const MixtureModel& model, const std::vector<ScaleObservation>& obs) {
  Responsibilities resp;
  e_step_loglik(model, obs, &resp);
  return resp;
}

MixtureModel m_step(const std::vector<ScaleObservation>& obs, const Responsibilities& resp) {
  const int n = resp.n;
  const int c = resp.c;
  MixtureModel model;
  model.components.resize(c);
  std::vector<int> degenerate;
  for (int k = 0; k < c; ++k) {
    double nk = 0.0;
    for (int i = 0; i < n; ++i) nk += resp.at(i, k);
    GaussianComponent& comp = model.components[k];
    if (nk < 1e-12) {
      degenerate.push_back(k);
      continue;
    }
    double sa = 0, sv = 0;
    for (int i = 0; i < n; ++i) {
      sa += resp.at(i, k) * obs[i].alpha;
      sv += resp.at(i, k) * obs[i].v;
    }
    comp.mean = {sa / nk, sv / nk};
    double qa = 0, qv = 0;
    for (int i = 0; i < n; ++i) {
      const double da = obs[i].alpha - comp.mean[0];
      const double dv = obs[i].v - comp.mean[1];
      qa += resp.at(i, k) * da * da;
      qv += resp.at(i, k) * dv * dv;
    }
    comp.var = {std::max(kVarianceFloor, qa / nk), std::max(kVarianceFloor, qv / nk)};
    comp.pi = nk / n;
  }
  if (!degenerate.empty()) {
    // Re-seed collapsed components at the observations the mixture explains
    // worst, then renormalize the weights.
    std::array<double, 2> gmean{}, gvar{};
    global_stats(obs, gmean, gvar);
    std::vector<std::pair<double, int>> worst(n);
    for (int i = 0; i < n; ++i) {
      double best = 0.0;
      for (int k = 0; k < c; ++k) best = std::max(best, resp.at(i, k));
      worst[i] = {best, i};
    }
    std::stable_sort(worst.begin(), worst.end());
    for (std::size_t d = 0; d < degenerate.size(); ++d) {
      const int i = worst[std::min<std::size_t>(d, worst.size() - 1)].second;
      GaussianComponent& comp = model.components[degenerate[d]];
      comp.mean = {obs[i].alpha, obs[i].v};
      comp.var = gvar;
      comp.pi = 1.0 / n;
    }
    double total = 0.0;
    for (const auto& comp : model.components) total += comp.pi;
    for (auto& comp : model.components) comp.pi /= total;
  }
  return model;
}

FitResult fit_em(const std::vector<ScaleObservation>& obs, int components, double tol,
                 int max_iter, std::uint64_t seed) {
  if (max_iter < 1) throw ValidationError("max_iter must be >= 1");
  FitResult out;
  out.model = init_mixture(obs, components, seed);
  double prev = 0.0;
  for (int it = 0;; ++it) {
    const double ll = e_step_loglik(out.model, obs, &out.resp);
    out.model.loglik_history.push_back(ll);
    if ((it > 0 && ll - prev < tol) || it == max_iter) break;
    prev = ll;
    MixtureModel next = m_step(obs, out.resp);
    next.loglik_history = std::move(out.model.loglik_history);
    out.model = std::move(next);
  }
  sort_components_by_v(out.model, &out.resp);
  return out;
}

int select_component_count(const std::vector<ScaleObservation>& obs, int c_max,
                           std::uint64_t seed) {
  if (c_max < 1) throw ValidationError("c_max must be >= 1");
  const int n = static_cast<int>(obs.size());
  const int upper = std::min(c_max, n);
  int best_c = 1;
  double best_bic = std::numeric_limits<double>::infinity();
  for (int c = 1; c <= upper; ++c) {
    const FitResult fit = fit_em(obs, c, 1e-8, 200, seed);
    const double ll = fit.model.loglik_history.back();
    const double k = 5.0 * c - 1.0;
    const double bic = -2.0 * ll + k * std::log(static_cast<double>(n));
    if (bic < best_bic) {
      best_bic = bic;
      best_c = c;
    }
  }
  return best_c;
}

namespace {

// Root of the weighted v-marginal density difference between two adjacent
// components, searched by bisection on (a, b); midpoint when no sign change.
double band_boundary(const GaussianComponent& lo, const GaussianComponent& hi, double a,
                     double b) {
  auto diff = [&](double v) {
    const double dl = v - lo.mean[1];
    const double dh = v - hi.mean[1];
    const double gl = std::log(lo.pi) - 0.5 * (std::log(lo.var[1]) + dl * dl / lo.var[1]);
    const double gh = std::log(hi.pi) - 0.5 * (std::log(hi.var[1]) + dh * dh / hi.var[1]);
    return gl - gh;
  };
  double fa = diff(a), fb = diff(b);
  if (!(fa > 0.0 && fb < 0.0)) return 0.5 * (a + b);
  for (int it = 0; it < 80; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = diff(m);
    if (fm > 0.0) {
      a = m;
      fa = fm;
    } else {
      b = m;
      fb = fm;
    }
  }
  (void)fa;
  (void)fb;
  return 0.5 * (a + b);
}

}  // namespace

std::vector<SubDistributionBand> decouple(const MixtureModel& model, const Responsibilities& resp,
                                          const Scene& scene) {
  model.validate();
  const int c = model.component_count();
  const int height = scene.image.height;
  if (height < c) throw ValidationError("image shorter than component count");
  for (int k = 1; k < c; ++k)
    if (model.components[k].mean[1] < model.components[k - 1].mean[1])
      throw ValidationError("components must be ordered by mean v");
  if (resp.c != c || resp.n != static_cast<int>(scene.annotations.size()))
    throw ValidationError("responsibility shape does not match model/scene");

  // Row boundaries between adjacent components.
  std::vector<int> cuts(c + 1);
  cuts[0] = 0;
  cuts[c] = height;
  for (int k = 1; k < c; ++k) {
    const double v = band_boundary(model.components[k - 1], model.components[k],
                                   model.components[k - 1].mean[1], model.components[k].mean[1]);
    cuts[k] = static_cast<int>(std::llround(v * height));
  }
  for (int k = 1; k < c; ++k) cuts[k] = std::clamp(cuts[k], k, height - (c - k));
  for (int k = 1; k < c; ++k) cuts[k] = std::max(cuts[k], cuts[k - 1] + 1);

  std::vector<SubDistributionBand> bands(c);
  for (int k = 0; k < c; ++k) {
    bands[k].component_index = k;
    bands[k].v_lo = cuts[k];
    bands[k].v_hi = cuts[k + 1];
  }
  for (int i = 0; i < resp.n; ++i) {
    int best = 0;
    for (int k = 1; k < c; ++k)
      if (resp.at(i, k) > resp.at(i, best)) best = k;  // ties keep the lowest index
    bands[best].member_indices.push_back(i);
  }
  for (int k = 0; k < c; ++k) {
    if (bands[k].member_indices.empty()) continue;
    double total = 0.0;
    for (int idx : bands[k].member_indices) total += scene.annotations[idx].scale;
    bands[k].mean_scale = total / static_cast<double>(bands[k].member_indices.size());
  }
  for (int k = 0; k < c; ++k) {
    if (!bands[k].member_indices.empty()) continue;
    int nearest = -1;
    for (int d = 1; d < c && nearest < 0; ++d) {
      if (k - d >= 0 && !bands[k - d].member_indices.empty()) nearest = k - d;
      else if (k + d < c && !bands[k + d].member_indices.empty()) nearest = k + d;
    }
    if (nearest < 0) throw ValidationError("no populated band to borrow a scale from");
    bands[k].mean_scale = bands[nearest].mean_scale;
  }
  return bands;
}

std::string mixture_to_json(const MixtureModel& model) {
  nlohmann::ordered_json j;
  j["components"] = nlohmann::ordered_json::array();
  for (const auto& c : model.components) {
    nlohmann::ordered_json jc;
    jc["pi"] = c.pi;
    jc["mean"] = {c.mean[0], c.mean[1]};
    jc["var"] = {c.var[0], c.var[1]};
    j["components"].push_back(jc);
  }
  j["loglik"] = model.loglik_history;
  return j.dump(2) + "\n";
}

MixtureModel mixture_from_json(const std::string& text) {
  MixtureModel model;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& jc : j.at("components")) {
      GaussianComponent c;
      c.pi = jc.at("pi").get<double>();
      c.mean = {jc.at("mean").at(0).get<double>(), jc.at("mean").at(1).get<double>()};
      c.var = {jc.at("var").at(0).get<double>(), jc.at("var").at(1).get<double>()};
      model.components.push_back(c);
    }
    model.loglik_history = j.at("loglik").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mixture JSON: ") + e.what(), 0);
  }
  return model;
}

}  // namespace gms
