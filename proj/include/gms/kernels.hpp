#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

// Data-parallel inner loops used by the image pipeline. Every kernel exists
// as a scalar reference implementation and, on x86-64, an AVX2 variant. The
// active variant is picked once at runtime (cpuid + GMS_KERNELS env var);
// element-wise kernels are bit-identical across variants, reductions agree
// to a small relative tolerance (lane-blocked accumulation order differs).

namespace gms::kernels {

enum class Backend { Scalar, Avx2 };

bool avx2_supported();
Backend active_backend();
const char* backend_name(Backend b);

// Force a specific backend (tests); throws std::runtime_error if unavailable.
void force_backend(Backend b);
// Return to automatic selection (cpuid + GMS_KERNELS env var).
void reset_backend();

// ---- dispatched entry points -------------------------------------------

// Sum of x[0..n).
double sum(const double* x, std::size_t n);

// Inner product of x and y.
double dot(const double* x, const double* y, std::size_t n);

// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);

// y[i] = (x[i] - c) * a   (standardization pass)
void scale_shift(const double* x, double c, double a, double* y, std::size_t n);

// out[i] = f[i] >= t[i] ? 1.0 : 0.0
void binarize_ge(const double* f, const double* t, double* out, std::size_t n);

// sq += sum (f[i]-ref[i])^2 ; l1 += sum |b[i]-ref[i]|   (fused loss pass)
void sq_l1_accum(const double* f, const double* b, const double* ref,
                 std::size_t n, double* sq, double* l1);

// Box mean of radius r over an H x W image given its summed-area table.
// ii has (H+1) rows and (W+1) cols, ii[y+1][x+1] = sum of img[0..y][0..x].
// Windows clamp at the borders; the divisor is the clamped window area.
void box_mean(const double* ii, int width, int height, int r, double* out);

// One output row of a bilinear resample. r0/r1 are the two source rows,
// wy the vertical weight, x0/x1 the clamped column pair and fx the
// horizontal weight per output column.
void bilinear_row(const double* r0, const double* r1, double wy,
                  const int32_t* x0, const int32_t* x1, const double* fx,
                  double* out, int n_out);

// ---- per-variant symbols (exposed for equivalence tests) ----------------

namespace scalar {
double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale_shift(const double* x, double c, double a, double* y, std::size_t n);
void binarize_ge(const double* f, const double* t, double* out, std::size_t n);
void sq_l1_accum(const double* f, const double* b, const double* ref,
                 std::size_t n, double* sq, double* l1);
void box_mean(const double* ii, int width, int height, int r, double* out);
void bilinear_row(const double* r0, const double* r1, double wy,
                  const int32_t* x0, const int32_t* x1, const double* fx,
                  double* out, int n_out);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define GMS_KERNELS_HAVE_AVX2 1
namespace avx2 {
double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale_shift(const double* x, double c, double a, double* y, std::size_t n);
void binarize_ge(const double* f, const double* t, double* out, std::size_t n);
void sq_l1_accum(const double* f, const double* b, const double* ref,
                 std::size_t n, double* sq, double* l1);
void box_mean(const double* ii, int width, int height, int r, double* out);
void bilinear_row(const double* r0, const double* r1, double wy,
                  const int32_t* x0, const int32_t* x1, const double* fx,
                  double* out, int n_out);
}  // namespace avx2
#endif

// Summed-area table shared by all variants. ii must hold (h+1)*(w+1) values.
void build_integral(const double* img, int width, int height, double* ii);

}  // namespace gms::kernels
