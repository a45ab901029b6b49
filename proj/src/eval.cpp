#include "gms/eval.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace gms {

std::vector<PredictedInstance> extract_instances(const PixelMap& binary, int min_area) {
  if (binary.kind != MapKind::Binary)
    throw ValidationError("instance extraction expects a binary map");
  const int w = binary.width, h = binary.height;
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<PredictedInstance> out;
  std::vector<int> stack;
  int next_id = 0;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const std::size_t start = static_cast<std::size_t>(y0) * w + x0;
      if (binary.data[start] == 0.0 || label[start] >= 0) continue;
      // Flood fill with 8-connectivity.
      stack.clear();
      stack.push_back(static_cast<int>(start));
      label[start] = next_id;
      double sx = 0.0, sy = 0.0;
      long count = 0;
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int py = p / w, px = p % w;
        sx += px + 0.5;
        sy += py + 0.5;
        ++count;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dy && !dx) continue;
            const int ny = py + dy, nx = px + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
            if (binary.data[q] != 0.0 && label[q] < 0) {
              label[q] = next_id;
              stack.push_back(static_cast<int>(q));
            }
          }
        }
      }
      if (count >= min_area) {
        PredictedInstance inst;
        inst.cx = sx / count;
        inst.cy = sy / count;
        inst.area = static_cast<double>(count);
        inst.component_id = next_id;
        out.push_back(inst);
      }
      ++next_id;
    }
  }
  return out;
}

MatchResult match(const std::vector<PredictedInstance>& preds,
                  const std::vector<InstanceAnnotation>& gts) {
  struct Candidate {
    double dist;
    int pred;
    int gt;
  };
  std::vector<Candidate> cands;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const double sigma = std::sqrt(gts[g].w * gts[g].w + gts[g].h * gts[g].h) / 2.0;
    for (std::size_t p = 0; p < preds.size(); ++p) {
      const double dx = preds[p].cx - gts[g].cx;
      const double dy = preds[p].cy - gts[g].cy;
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d <= sigma) cands.push_back({d, static_cast<int>(p), static_cast<int>(g)});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.dist, a.pred, a.gt) < std::tie(b.dist, b.pred, b.gt);
  });
  MatchResult result;
  std::vector<char> pred_used(preds.size(), 0), gt_used(gts.size(), 0);
  for (const auto& c : cands) {
    if (pred_used[c.pred] || gt_used[c.gt]) continue;
    pred_used[c.pred] = 1;
    gt_used[c.gt] = 1;
    result.tp_pairs.emplace_back(c.pred, c.gt);
  }
  for (std::size_t p = 0; p < preds.size(); ++p)
    if (!pred_used[p]) result.fp.push_back(static_cast<int>(p));
  for (std::size_t g = 0; g < gts.size(); ++g)
    if (!gt_used[g]) result.fn.push_back(static_cast<int>(g));
  return result;
}

F1Metrics f1_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  F1Metrics m;
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  else m.degenerate = true;
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  else m.degenerate = true;
  if (m.precision > 0.0 && m.recall > 0.0)
    m.f1m = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

F1Metrics f1_metrics(const MatchResult& m) {
  return f1_from_counts(static_cast<std::int64_t>(m.tp_pairs.size()),
                        static_cast<std::int64_t>(m.fp.size()),
                        static_cast<std::int64_t>(m.fn.size()));
}

CountMetrics count_metrics(const std::vector<double>& pred_counts,
                           const std::vector<double>& gt_counts) {
  if (pred_counts.size() != gt_counts.size() || pred_counts.empty())
    throw ValidationError("count metrics need equal-length non-empty vectors");
  CountMetrics out;
  double sq = 0.0;
  for (std::size_t i = 0; i < pred_counts.size(); ++i) {
    if (!(gt_counts[i] > 0.0)) throw ValidationError("NAE needs positive ground-truth counts");
    const double d = std::fabs(gt_counts[i] - pred_counts[i]);
    out.mae += d;
    sq += d * d;
    out.nae += d / gt_counts[i];
  }
  const double n = static_cast<double>(pred_counts.size());
  out.mae /= n;
  out.mse = std::sqrt(sq / n);
  out.nae /= n;
  return out;
}

int scale_bin(double area) {
  if (area <= 10.0) return 0;
  if (area <= 100.0) return 1;
  if (area <= 1000.0) return 2;
  if (area <= 10000.0) return 3;
  if (area <= 100000.0) return 4;
  return 5;
}

std::array<std::optional<double>, 6> scale_level_recall(
    const MatchResult& m, const std::vector<InstanceAnnotation>& gts) {
  std::array<long, 6> total{};
  std::array<long, 6> matched{};
  std::vector<char> gt_matched(gts.size(), 0);
  for (const auto& [p, g] : m.tp_pairs) gt_matched[g] = 1;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const int bin = scale_bin(gts[g].scale);
    ++total[bin];
    if (gt_matched[g]) ++matched[bin];
  }
  std::array<std::optional<double>, 6> out;
  for (int b = 0; b < 6; ++b)
    if (total[b] > 0) out[b] = static_cast<double>(matched[b]) / static_cast<double>(total[b]);
  return out;
}

namespace {

PearsonResult pearson_xy(const std::vector<double>& areas, const std::vector<double>& ys,
                         const std::vector<double>& xs) {
  auto corr = [](const std::vector<double>& a, const std::vector<double>& b, bool* degenerate) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) {
      *degenerate = true;
      return 0.0;
    }
    return sab / std::sqrt(saa * sbb);
  };
  PearsonResult r;
  r.r_vertical = corr(areas, ys, &r.degenerate);
  r.r_horizontal = corr(areas, xs, &r.degenerate);
  return r;
}

}  // namespace

PearsonResult pearson_scale_correlation(const Scene& scene) {
  if (scene.annotations.size() < 2) {
    PearsonResult r;
    r.degenerate = true;
    return r;
  }
  std::vector<double> areas, ys, xs;
  areas.reserve(scene.annotations.size());
  for (const auto& a : scene.annotations) {
    areas.push_back(a.scale);
    ys.push_back(a.cy);
    xs.push_back(a.cx);
  }
  return pearson_xy(areas, ys, xs);
}

}  // namespace gms
