#include "gms/scope.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "gms/kernels.hpp"
#include "json.hpp"

namespace gms {

void ScopePlan::validate(int image_height) const {
  if (bands.empty()) throw ValidationError("scope plan has no bands");
  if (factors.size() != bands.size())
    throw ValidationError("scope plan factor count does not match band count");
  if (bands.front().v_lo != 0 || bands.back().v_hi != image_height)
    throw ValidationError("scope plan bands do not cover the image height");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    if (bands[i].v_lo >= bands[i].v_hi) throw ValidationError("empty scope band");
    if (i && bands[i].v_lo != bands[i - 1].v_hi)
      throw ValidationError("scope bands overlap or leave a gap");
    if (!(factors[i] > 0.0)) throw ValidationError("non-positive zoom factor");
  }
}

double zoom_factor(double mean_scale, double optimal_scale, double gamma_min, double gamma_max) {
  if (!(mean_scale > 0.0) || !(optimal_scale > 0.0))
    throw ValidationError("zoom_factor requires positive areas");
  return std::clamp(std::sqrt(optimal_scale / mean_scale), gamma_min, gamma_max);
}

ScopePlan plan_scope(const std::vector<SubDistributionBand>& bands, const ScopeParams& params) {
  if (bands.empty()) throw ValidationError("cannot plan a scope for zero bands");
  ScopePlan plan;
  plan.bands = bands;
  plan.optimal_scale = params.optimal_scale;
  plan.factors.reserve(bands.size());
  for (const auto& band : bands) {
    double f;
    if (params.mode == FactorMode::SqrtAreaRatio) {
      f = zoom_factor(band.mean_scale, params.optimal_scale, params.gamma_min, params.gamma_max);
    } else {
      // Literal printed form of the alignment factor, kept for fidelity runs.
      const double n = static_cast<double>(std::max<std::size_t>(1, band.member_indices.size()));
      const double denom = params.optimal_scale * std::max(1.0, n - 1.0);
      f = std::clamp(band.mean_scale * n / denom, params.gamma_min, params.gamma_max);
    }
    plan.factors.push_back(f);
  }
  return plan;
}

namespace {

struct AxisMap {
  std::vector<int32_t> i0, i1;
  std::vector<double> frac;
};

// Half-pixel-center source coordinates (the common resize convention).
AxisMap build_axis(int in_size, int out_size) {
  AxisMap m;
  m.i0.resize(out_size);
  m.i1.resize(out_size);
  m.frac.resize(out_size);
  const double ratio = static_cast<double>(in_size) / out_size;
  for (int j = 0; j < out_size; ++j) {
    double src = (j + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    double f = src - i0;
    if (i0 >= in_size - 1) {
      i0 = in_size - 1;
      f = 0.0;
    }
    m.i0[j] = i0;
    m.i1[j] = std::min(i0 + 1, in_size - 1);
    m.frac[j] = f;
  }
  return m;
}

void bilinear_plane(const double* src, int in_w, int in_h, double* dst, int out_w, int out_h) {
  const AxisMap xm = build_axis(in_w, out_w);
  const AxisMap ym = build_axis(in_h, out_h);
  for (int y = 0; y < out_h; ++y) {
    const double* r0 = src + static_cast<std::size_t>(ym.i0[y]) * in_w;
    const double* r1 = src + static_cast<std::size_t>(ym.i1[y]) * in_w;
    kernels::bilinear_row(r0, r1, ym.frac[y], xm.i0.data(), xm.i1.data(), xm.frac.data(),
                          dst + static_cast<std::size_t>(y) * out_w, out_w);
  }
}

void nearest_plane(const double* src, int in_w, int in_h, double* dst, int out_w, int out_h) {
  std::vector<int> xs(out_w);
  const double rx = static_cast<double>(in_w) / out_w;
  const double ry = static_cast<double>(in_h) / out_h;
  for (int x = 0; x < out_w; ++x)
    xs[x] = std::clamp(static_cast<int>(std::floor((x + 0.5) * rx)), 0, in_w - 1);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::clamp(static_cast<int>(std::floor((y + 0.5) * ry)), 0, in_h - 1);
    const double* row = src + static_cast<std::size_t>(sy) * in_w;
    double* out = dst + static_cast<std::size_t>(y) * out_w;
    for (int x = 0; x < out_w; ++x) out[x] = row[xs[x]];
  }
}

ImageGrid resize_image(const ImageGrid& img, int out_w, int out_h) {
  if (out_w == img.width && out_h == img.height) return img;
  ImageGrid out = make_image(out_w, out_h, img.channels);
  if (img.channels == 1) {
    bilinear_plane(img.data.data(), img.width, img.height, out.data.data(), out_w, out_h);
  } else {
    std::vector<double> plane_in(img.pixel_count());
    std::vector<double> plane_out(out.pixel_count());
    for (int c = 0; c < img.channels; ++c) {
      for (std::size_t i = 0; i < plane_in.size(); ++i) plane_in[i] = img.data[i * img.channels + c];
      bilinear_plane(plane_in.data(), img.width, img.height, plane_out.data(), out_w, out_h);
      for (std::size_t i = 0; i < plane_out.size(); ++i) out.data[i * img.channels + c] = plane_out[i];
    }
  }
  return out;
}

ImageGrid crop_rows(const ImageGrid& img, int y0, int y1) {
  ImageGrid out = make_image(img.width, y1 - y0, img.channels);
  const std::size_t row_len = static_cast<std::size_t>(img.width) * img.channels;
  std::copy(img.data.begin() + y0 * row_len, img.data.begin() + y1 * row_len, out.data.begin());
  return out;
}

void check_binary(const PixelMap& m) {
  if (m.kind != MapKind::Binary) throw ValidationError("locator must return a binary map");
}

}  // namespace

ImageGrid interpolate(const ImageGrid& img, double factor, std::size_t max_pixels) {
  if (!(factor > 0.0)) throw ValidationError("interpolation factor must be positive");
  img.validate();
  const int out_w = std::max<int>(1, static_cast<int>(std::llround(factor * img.width)));
  const int out_h = std::max<int>(1, static_cast<int>(std::llround(factor * img.height)));
  const std::size_t pixels = static_cast<std::size_t>(out_w) * out_h;
  if (pixels > max_pixels) {
    std::ostringstream msg;
    msg << "interpolated image " << out_w << "x" << out_h << " exceeds the pixel budget of "
        << max_pixels;
    throw BudgetError(msg.str());
  }
  return resize_image(img, out_w, out_h);
}

PixelMap resize_map(const PixelMap& map, int out_width, int out_height) {
  if (out_width == map.width && out_height == map.height) return map;
  PixelMap out = make_map(out_width, out_height, map.kind);
  if (map.kind == MapKind::Binary)
    nearest_plane(map.data.data(), map.width, map.height, out.data.data(), out_width, out_height);
  else
    bilinear_plane(map.data.data(), map.width, map.height, out.data.data(), out_width, out_height);
  return out;
}

PixelMap scope_predict(const Scene& scene, const ScopePlan& plan, const Locator& locator,
                       std::size_t max_pixels) {
  const int width = scene.image.width;
  const int height = scene.image.height;
  plan.validate(height);

  // One locator pass per distinct factor; bands then copy their own rows.
  std::map<double, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < plan.factors.size(); ++i) groups[plan.factors[i]].push_back(i);

  PixelMap out = make_map(width, height, MapKind::Binary);
  for (const auto& [factor, band_ids] : groups) {
    const ImageGrid zoomed = interpolate(scene.image, factor, max_pixels);
    PixelMap pred = locator.predict_binary(zoomed);
    check_binary(pred);
    const PixelMap back = resize_map(pred, width, height);
    for (std::size_t bi : band_ids) {
      const auto& band = plan.bands[bi];
      std::copy(back.data.begin() + static_cast<std::size_t>(band.v_lo) * width,
                back.data.begin() + static_cast<std::size_t>(band.v_hi) * width,
                out.data.begin() + static_cast<std::size_t>(band.v_lo) * width);
    }
  }
  return out;
}

PixelMap predict_patchwise(const Scene& scene, const ScopePlan& plan, const Locator& locator,
                           PatchMode mode, std::size_t max_pixels) {
  const int width = scene.image.width;
  const int height = scene.image.height;
  plan.validate(height);

  PixelMap out = make_map(width, height, MapKind::Binary);
  if (mode == PatchMode::Divide) {
    for (std::size_t i = 0; i < plan.bands.size(); ++i) {
      const auto& band = plan.bands[i];
      const ImageGrid crop = crop_rows(scene.image, band.v_lo, band.v_hi);
      const ImageGrid zoomed = interpolate(crop, plan.factors[i], max_pixels);
      PixelMap pred = locator.predict_binary(zoomed);
      check_binary(pred);
      const PixelMap back = resize_map(pred, width, band.v_hi - band.v_lo);
      std::copy(back.data.begin(), back.data.end(),
                out.data.begin() + static_cast<std::size_t>(band.v_lo) * width);
    }
    return out;
  }

  // PatchMode::Whole: splice the zoomed bands into one zero-padded canvas,
  // predict once, then un-splice.
  std::vector<ImageGrid> zoomed;
  zoomed.reserve(plan.bands.size());
  int canvas_w = 1, canvas_h = 0;
  for (std::size_t i = 0; i < plan.bands.size(); ++i) {
    const auto& band = plan.bands[i];
    zoomed.push_back(interpolate(crop_rows(scene.image, band.v_lo, band.v_hi), plan.factors[i],
                                 max_pixels));
    canvas_w = std::max(canvas_w, zoomed.back().width);
    canvas_h += zoomed.back().height;
  }
  if (static_cast<std::size_t>(canvas_w) * canvas_h > max_pixels)
    throw BudgetError("spliced canvas exceeds the pixel budget");
  ImageGrid canvas = make_image(canvas_w, canvas_h, scene.image.channels);
  std::vector<int> offsets(plan.bands.size());
  int offset = 0;
  for (std::size_t i = 0; i < zoomed.size(); ++i) {
    offsets[i] = offset;
    const ImageGrid& z = zoomed[i];
    for (int y = 0; y < z.height; ++y) {
      const std::size_t src = static_cast<std::size_t>(y) * z.width * z.channels;
      const std::size_t dst =
          (static_cast<std::size_t>(offset + y) * canvas_w) * canvas.channels;
      std::copy(z.data.begin() + src, z.data.begin() + src + static_cast<std::size_t>(z.width) * z.channels,
                canvas.data.begin() + dst);
    }
    offset += z.height;
  }
  PixelMap pred = locator.predict_binary(canvas);
  check_binary(pred);
  for (std::size_t i = 0; i < plan.bands.size(); ++i) {
    const auto& band = plan.bands[i];
    const ImageGrid& z = zoomed[i];
    PixelMap sub = make_map(z.width, z.height, MapKind::Binary);
    for (int y = 0; y < z.height; ++y)
      for (int x = 0; x < z.width; ++x) sub.at(y, x) = pred.at(offsets[i] + y, x);
    const PixelMap back = resize_map(sub, width, band.v_hi - band.v_lo);
    std::copy(back.data.begin(), back.data.end(),
              out.data.begin() + static_cast<std::size_t>(band.v_lo) * width);
  }
  return out;
}

std::string scope_plan_to_json(const ScopePlan& plan) {
  nlohmann::ordered_json j;
  j["optimal_scale"] = plan.optimal_scale;
  j["bands"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < plan.bands.size(); ++i) {
    nlohmann::ordered_json jb;
    jb["v_lo"] = plan.bands[i].v_lo;
    jb["v_hi"] = plan.bands[i].v_hi;
    jb["mean_scale"] = plan.bands[i].mean_scale;
    jb["factor"] = plan.factors[i];
    j["bands"].push_back(jb);
  }
  return j.dump(2) + "\n";
}

ScopePlan scope_plan_from_json(const std::string& text) {
  ScopePlan plan;
  try {
    const auto j = nlohmann::json::parse(text);
    plan.optimal_scale = j.at("optimal_scale").get<double>();
    int component = 0;
    for (const auto& jb : j.at("bands")) {
      SubDistributionBand band;
      band.component_index = component++;
      band.v_lo = jb.at("v_lo").get<int>();
      band.v_hi = jb.at("v_hi").get<int>();
      band.mean_scale = jb.at("mean_scale").get<double>();
      plan.bands.push_back(band);
      plan.factors.push_back(jb.at("factor").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scope plan JSON: ") + e.what(), 0);
  }
  return plan;
}

}  // namespace gms
