#include "gms/kernels.hpp"

#if defined(GMS_KERNELS_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace gms::kernels::avx2 {

namespace {

// Fixed-order horizontal reduction: ((l0+l1)+l2)+l3.
inline double hreduce(__m256d v) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, v);
  return ((lane[0] + lane[1]) + lane[2]) + lane[3];
}

}  // namespace

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hreduce(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  double s = hreduce(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void scale_shift(const double* x, double c, double a, double* y, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), vc), va));
  for (; i < n; ++i) y[i] = (x[i] - c) * a;
}

void binarize_ge(const double* f, const double* t, double* out, std::size_t n) {
  const __m256d ones = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(f + i), _mm256_loadu_pd(t + i), _CMP_GE_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, ones));
  }
  for (; i < n; ++i) out[i] = f[i] >= t[i] ? 1.0 : 0.0;
}

void sq_l1_accum(const double* f, const double* b, const double* ref,
                 std::size_t n, double* sq, double* l1) {
  const __m256d absmask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  __m256d accs = _mm256_setzero_pd();
  __m256d acca = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vr = _mm256_loadu_pd(ref + i);
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(f + i), vr);
    accs = _mm256_add_pd(accs, _mm256_mul_pd(d, d));
    const __m256d e = _mm256_sub_pd(_mm256_loadu_pd(b + i), vr);
    acca = _mm256_add_pd(acca, _mm256_and_pd(e, absmask));
  }
  double s = hreduce(accs);
  double a = hreduce(acca);
  for (; i < n; ++i) {
    const double d = f[i] - ref[i];
    s += d * d;
    a += std::fabs(b[i] - ref[i]);
  }
  *sq += s;
  *l1 += a;
}

void box_mean(const double* ii, int width, int height, int r, double* out) {
  const int stride = width + 1;
  // Columns [r, width-1-r] use the unclamped window; outside that the scalar
  // border expression runs (identical arithmetic, clamped area).
  const int xa = std::min(r, width);
  const int xb = std::max(xa, width - r);
  for (int y = 0; y < height; ++y) {
    const int y1 = std::max(0, y - r);
    const int y2 = std::min(height - 1, y + r) + 1;
    const double* top = ii + static_cast<std::size_t>(y1) * stride;
    const double* bot = ii + static_cast<std::size_t>(y2) * stride;
    double* row = out + static_cast<std::size_t>(y) * width;
    const int wh = y2 - y1;
    auto border = [&](int x) {
      const int x1 = std::max(0, x - r);
      const int x2 = std::min(width - 1, x + r) + 1;
      const double area = static_cast<double>(wh * (x2 - x1));
      row[x] = (((bot[x2] - bot[x1]) - top[x2]) + top[x1]) / area;
    };
    for (int x = 0; x < xa; ++x) border(x);
    const __m256d varea = _mm256_set1_pd(static_cast<double>(wh * (2 * r + 1)));
    int x = xa;
    for (; x + 4 <= xb; x += 4) {
      const int x1 = x - r;
      const int x2 = x + r + 1;
      const __m256d b2 = _mm256_loadu_pd(bot + x2);
      const __m256d b1 = _mm256_loadu_pd(bot + x1);
      const __m256d t2 = _mm256_loadu_pd(top + x2);
      const __m256d t1 = _mm256_loadu_pd(top + x1);
      const __m256d v = _mm256_add_pd(_mm256_sub_pd(_mm256_sub_pd(b2, b1), t2), t1);
      _mm256_storeu_pd(row + x, _mm256_div_pd(v, varea));
    }
    for (; x < xb; ++x) border(x);
    for (x = xb; x < width; ++x) border(x);
  }
}

void bilinear_row(const double* r0, const double* r1, double wy,
                  const int32_t* x0, const int32_t* x1, const double* fx,
                  double* out, int n_out) {
  const __m256d vwy = _mm256_set1_pd(wy);
  const __m256d vwy0 = _mm256_set1_pd(1.0 - wy);
  const __m256d ones = _mm256_set1_pd(1.0);
  int j = 0;
  for (; j + 4 <= n_out; j += 4) {
    const __m128i i0 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(x0 + j));
    const __m128i i1 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(x1 + j));
    const __m256d gx = _mm256_loadu_pd(fx + j);
    const __m256d gx0 = _mm256_sub_pd(ones, gx);
    const __m256d a00 = _mm256_i32gather_pd(r0, i0, 8);
    const __m256d a01 = _mm256_i32gather_pd(r0, i1, 8);
    const __m256d a10 = _mm256_i32gather_pd(r1, i0, 8);
    const __m256d a11 = _mm256_i32gather_pd(r1, i1, 8);
    const __m256d h0 = _mm256_add_pd(_mm256_mul_pd(a00, gx0), _mm256_mul_pd(a01, gx));
    const __m256d h1 = _mm256_add_pd(_mm256_mul_pd(a10, gx0), _mm256_mul_pd(a11, gx));
    _mm256_storeu_pd(out + j, _mm256_add_pd(_mm256_mul_pd(h0, vwy0), _mm256_mul_pd(h1, vwy)));
  }
  const double wy0 = 1.0 - wy;
  for (; j < n_out; ++j) {
    const double gx = fx[j];
    const double gx0 = 1.0 - gx;
    const double h0 = r0[x0[j]] * gx0 + r0[x1[j]] * gx;
    const double h1 = r1[x0[j]] * gx0 + r1[x1[j]] * gx;
    out[j] = h0 * wy0 + h1 * wy;
  }
}

}  // namespace gms::kernels::avx2

#endif  // GMS_KERNELS_HAVE_AVX2
