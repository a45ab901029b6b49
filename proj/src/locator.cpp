#include "gms/locator.hpp"

#include <algorithm>
#include <cmath>

#include "gms/kernels.hpp"
#include "json.hpp"

namespace gms {

namespace {

void logistic_inplace(std::vector<double>& z) {
  // +-35 keeps the output strictly inside (0,1) in double precision.
  for (double& v : z) {
    const double c = std::clamp(v, -35.0, 35.0);
    v = 1.0 / (1.0 + std::exp(-c));
  }
}

// z = bias + sum_k w_k * plane_k
std::vector<double> head_logits(const std::vector<double>& weights, const FeatureStack& f) {
  const std::size_t n = f.plane_size();
  std::vector<double> z(n, weights.back());
  for (int k = 0; k < f.channels; ++k) kernels::axpy(weights[k], f.plane(k), z.data(), n);
  return z;
}

void check_same_dims(const PixelMap& a, const PixelMap& b, const char* what) {
  if (a.width != b.width || a.height != b.height)
    throw ValidationError(std::string("map dimension mismatch in ") + what);
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

LocatorParams LocatorParams::zeros(int k) {
  LocatorParams p;
  p.conf.assign(k + 1, 0.0);
  p.thr.assign(k + 1, 0.0);
  return p;
}

bool LocatorParams::finite() const {
  for (double v : conf)
    if (!std::isfinite(v)) return false;
  for (double v : thr)
    if (!std::isfinite(v)) return false;
  return true;
}

FeatureStack extract_features(const ImageGrid& img) {
  img.validate();
  const int w = img.width, h = img.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const std::vector<double> lum = luminance(img);

  std::vector<double> ii(static_cast<std::size_t>(w + 1) * (h + 1));
  kernels::build_integral(lum.data(), w, h, ii.data());

  // Box means at the five radii plus their doubled surrounds.
  constexpr int kAllRadii[6] = {1, 2, 4, 8, 16, 32};
  std::vector<std::vector<double>> means(6, std::vector<double>(n));
  for (int r = 0; r < 6; ++r) kernels::box_mean(ii.data(), w, h, kAllRadii[r], means[r].data());

  FeatureStack f;
  f.width = w;
  f.height = h;
  f.channels = kFeatureChannels;
  f.data.resize(n * kFeatureChannels);
  auto standardize = [&](const double* src, double* dst) {
    const double mean = kernels::sum(src, n) / static_cast<double>(n);
    kernels::scale_shift(src, mean, 1.0, dst, n);
    const double var = kernels::dot(dst, dst, n) / static_cast<double>(n);
    const double sd = std::sqrt(var);
    if (sd < (1.0 + std::fabs(mean)) * 1e-10) {
      std::fill(dst, dst + n, 0.0);
    } else {
      kernels::scale_shift(dst, 0.0, 1.0 / sd, dst, n);
    }
  };
  std::vector<double> cs(n);
  for (int r = 0; r < 5; ++r) {
    standardize(means[r].data(), f.plane(r));
    for (std::size_t i = 0; i < n; ++i) cs[i] = means[r][i] - means[r + 1][i];
    standardize(cs.data(), f.plane(5 + r));
  }
  return f;
}

PixelMap predict_confidence(const LocatorParams& params, const FeatureStack& features) {
  if (!params.finite()) throw ValidationError("locator parameters are not finite");
  std::vector<double> z = head_logits(params.conf, features);
  logistic_inplace(z);
  PixelMap out = make_map(features.width, features.height, MapKind::Confidence);
  out.data = std::move(z);
  return out;
}

PixelMap predict_threshold(const LocatorParams& params, const FeatureStack& features) {
  if (!params.finite()) throw ValidationError("locator parameters are not finite");
  std::vector<double> z = head_logits(params.thr, features);
  logistic_inplace(z);
  for (double& v : z) v = kThresholdMin + (kThresholdMax - kThresholdMin) * v;
  PixelMap out = make_map(features.width, features.height, MapKind::Threshold);
  out.data = std::move(z);
  return out;
}

PixelMap binarize(const PixelMap& confidence, const PixelMap& threshold) {
  check_same_dims(confidence, threshold, "binarize");
  PixelMap out = make_map(confidence.width, confidence.height, MapKind::Binary);
  kernels::binarize_ge(confidence.data.data(), threshold.data.data(), out.data.data(),
                       out.size());
  return out;
}

PixelMap binarize_fixed(const PixelMap& confidence, double epsilon) {
  PixelMap out = make_map(confidence.width, confidence.height, MapKind::Binary);
  const std::vector<double> eps(out.size(), epsilon);
  kernels::binarize_ge(confidence.data.data(), eps.data(), out.data.data(), out.size());
  return out;
}

PixelMap gt_binary_map(const Scene& scene) {
  PixelMap out = make_map(scene.image.width, scene.image.height, MapKind::Binary);
  for (const auto& a : scene.annotations) {
    const BoxExtent e = box_extent(a, scene.image.width, scene.image.height);
    for (int y = e.y0; y < e.y1; ++y)
      for (int x = e.x0; x < e.x1; ++x) out.at(y, x) = 1.0;
  }
  return out;
}

double seg_loss(const PixelMap& confidence, const PixelMap& binary, const PixelMap& gt) {
  check_same_dims(confidence, binary, "seg_loss");
  check_same_dims(confidence, gt, "seg_loss");
  double sq = 0.0, l1 = 0.0;
  kernels::sq_l1_accum(confidence.data.data(), binary.data.data(), gt.data.data(),
                       confidence.size(), &sq, &l1);
  return (sq + l1) / static_cast<double>(confidence.size());
}

std::pair<LocatorParams, LossReport> train_step_targets(const LocatorParams& params,
                                                        std::span<const TrainTarget> batch,
                                                        double lr_conf, double lr_thr,
                                                        double consistency_weight) {
  if (batch.empty()) throw ValidationError("training batch is empty");
  const int k = static_cast<int>(params.conf.size()) - 1;
  std::vector<double> grad_conf(k + 1, 0.0);
  std::vector<double> delta_thr(k + 1, 0.0);
  LossReport report;

  for (const TrainTarget& target : batch) {
    const Scene& scene = *target.scene;
    const FeatureStack feats = extract_features(scene.image);
    const std::size_t n = feats.plane_size();
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<double> zc = head_logits(params.conf, feats);
    logistic_inplace(zc);
    const std::vector<double>& conf = zc;

    std::vector<double> st = head_logits(params.thr, feats);
    logistic_inplace(st);
    std::vector<double> thr(n);
    for (std::size_t i = 0; i < n; ++i)
      thr[i] = kThresholdMin + (kThresholdMax - kThresholdMin) * st[i];

    std::vector<double> bin(n);
    kernels::binarize_ge(conf.data(), thr.data(), bin.data(), n);

    const PixelMap gt = gt_binary_map(scene);

    double sq = 0.0, l1 = 0.0;
    kernels::sq_l1_accum(conf.data(), bin.data(), gt.data.data(), n, &sq, &l1);
    report.seg_loss += (sq + l1) * inv_n;

    const PixelMap* consis = target.consistency_target;
    if (consis) {
      check_same_dims(gt, *consis, "consistency target");
      double csq = 0.0, cl1 = 0.0;
      kernels::sq_l1_accum(conf.data(), bin.data(), consis->data.data(), n, &csq, &cl1);
      report.consis_loss += consistency_weight * (csq + cl1) * inv_n;
    }

    // Per-pixel upstream gradients for the two heads.
    std::vector<double> g_conf(n), g_thr(n);
    const double range = kThresholdMax - kThresholdMin;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = conf[i];
      const double dsig = f * (1.0 - f);
      double e2 = f - gt.data[i];
      double sgn = sign(bin[i] - gt.data[i]);
      if (consis) {
        e2 += consistency_weight * (f - consis->data[i]);
        sgn += consistency_weight * sign(bin[i] - consis->data[i]);
      }
      g_conf[i] = 2.0 * e2 * dsig * inv_n;
      g_thr[i] = sgn * range * st[i] * (1.0 - st[i]) * inv_n;
    }
    for (int c = 0; c < k; ++c) {
      grad_conf[c] += kernels::dot(g_conf.data(), feats.plane(c), n);
      delta_thr[c] += kernels::dot(g_thr.data(), feats.plane(c), n);
    }
    grad_conf[k] += kernels::sum(g_conf.data(), n);
    delta_thr[k] += kernels::sum(g_thr.data(), n);

    for (double v : grad_conf)
      if (!std::isfinite(v))
        throw Error("non-finite confidence gradient on scene '" + scene.id + "'");
    for (double v : delta_thr)
      if (!std::isfinite(v))
        throw Error("non-finite threshold update on scene '" + scene.id + "'");
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LocatorParams next = params;
  for (int c = 0; c <= k; ++c) {
    next.conf[c] -= lr_conf * grad_conf[c] * inv_b;
    // Threshold update follows the relaxation T <- T + lr * dL/dB.
    next.thr[c] += lr_thr * delta_thr[c] * inv_b;
  }
  next.version = params.version + 1;
  report.seg_loss *= inv_b;
  report.consis_loss *= inv_b;
  report.total = report.seg_loss + report.consis_loss;
  return {std::move(next), report};
}

std::pair<LocatorParams, LossReport> train_step(const LocatorParams& params,
                                                std::span<const Scene> batch, double lr_conf,
                                                double lr_thr) {
  std::vector<TrainTarget> targets(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) targets[i].scene = &batch[i];
  return train_step_targets(params, targets, lr_conf, lr_thr, 0.0);
}

PixelMap LinearLocator::predict_binary(const ImageGrid& img) const {
  const FeatureStack feats = extract_features(img);
  const PixelMap conf = predict_confidence(params_, feats);
  const PixelMap thr = predict_threshold(params_, feats);
  return binarize(conf, thr);
}

std::string params_to_json(const LocatorParams& params) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["k"] = static_cast<int>(params.conf.size()) - 1;
  j["conf"] = params.conf;
  j["thr"] = params.thr;
  j["version"] = params.version;
  return j.dump(2) + "\n";
}

LocatorParams params_from_json(const std::string& text) {
  LocatorParams p;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("schema_version").get<int>() != 1)
      throw ParseError("unsupported locator params schema", 0);
    p.conf = j.at("conf").get<std::vector<double>>();
    p.thr = j.at("thr").get<std::vector<double>>();
    p.version = j.at("version").get<std::uint64_t>();
    const int k = j.at("k").get<int>();
    if (static_cast<int>(p.conf.size()) != k + 1 || static_cast<int>(p.thr.size()) != k + 1)
      throw ParseError("locator params length mismatch", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("locator params JSON: ") + e.what(), 0);
  }
  return p;
}

}  // namespace gms
