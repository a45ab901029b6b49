#include "gms/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace gms::kernels::scalar {

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

void scale_shift(const double* x, double c, double a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - c) * a;
}

void binarize_ge(const double* f, const double* t, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = f[i] >= t[i] ? 1.0 : 0.0;
}

void sq_l1_accum(const double* f, const double* b, const double* ref,
                 std::size_t n, double* sq, double* l1) {
  double s = 0.0, a = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = f[i] - ref[i];
    s += d * d;
    a += std::fabs(b[i] - ref[i]);
  }
  *sq += s;
  *l1 += a;
}

void box_mean(const double* ii, int width, int height, int r, double* out) {
  const int stride = width + 1;
  for (int y = 0; y < height; ++y) {
    const int y1 = std::max(0, y - r);
    const int y2 = std::min(height - 1, y + r) + 1;
    const double* top = ii + static_cast<std::size_t>(y1) * stride;
    const double* bot = ii + static_cast<std::size_t>(y2) * stride;
    double* row = out + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      const int x1 = std::max(0, x - r);
      const int x2 = std::min(width - 1, x + r) + 1;
      const double area = static_cast<double>((y2 - y1) * (x2 - x1));
      row[x] = (((bot[x2] - bot[x1]) - top[x2]) + top[x1]) / area;
    }
  }
}

void bilinear_row(const double* r0, const double* r1, double wy,
                  const int32_t* x0, const int32_t* x1, const double* fx,
                  double* out, int n_out) {
  const double wy0 = 1.0 - wy;
  for (int j = 0; j < n_out; ++j) {
    const double gx = fx[j];
    const double gx0 = 1.0 - gx;
    const double h0 = r0[x0[j]] * gx0 + r0[x1[j]] * gx;
    const double h1 = r1[x0[j]] * gx0 + r1[x1[j]] * gx;
    out[j] = h0 * wy0 + h1 * wy;
  }
}

}  // namespace gms::kernels::scalar

namespace gms::kernels {

void build_integral(const double* img, int width, int height, double* ii) {
  const int stride = width + 1;
  for (int x = 0; x <= width; ++x) ii[x] = 0.0;
  for (int y = 0; y < height; ++y) {
    const double* src = img + static_cast<std::size_t>(y) * width;
    const double* prev = ii + static_cast<std::size_t>(y) * stride;
    double* cur = ii + static_cast<std::size_t>(y + 1) * stride;
    cur[0] = 0.0;
    double rowsum = 0.0;
    for (int x = 0; x < width; ++x) {
      rowsum += src[x];
      cur[x + 1] = prev[x + 1] + rowsum;
    }
  }
}

}  // namespace gms::kernels
