#include "gms/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace gms::kernels {

namespace {

struct Table {
  Backend backend;
  double (*sum)(const double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale_shift)(const double*, double, double, double*, std::size_t);
  void (*binarize_ge)(const double*, const double*, double*, std::size_t);
  void (*sq_l1_accum)(const double*, const double*, const double*, std::size_t, double*, double*);
  void (*box_mean)(const double*, int, int, int, double*);
  void (*bilinear_row)(const double*, const double*, double, const int32_t*, const int32_t*,
                       const double*, double*, int);
};

constexpr Table kScalarTable = {
    Backend::Scalar,    scalar::sum,         scalar::dot,      scalar::axpy,
    scalar::scale_shift, scalar::binarize_ge, scalar::sq_l1_accum,
    scalar::box_mean,   scalar::bilinear_row,
};

#if defined(GMS_KERNELS_HAVE_AVX2)
constexpr Table kAvx2Table = {
    Backend::Avx2,     avx2::sum,         avx2::dot,      avx2::axpy,
    avx2::scale_shift, avx2::binarize_ge, avx2::sq_l1_accum,
    avx2::box_mean,    avx2::bilinear_row,
};
#endif

const Table* resolve_auto() {
  if (const char* env = std::getenv("GMS_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return &kScalarTable;
#if defined(GMS_KERNELS_HAVE_AVX2)
    if (v == "avx2") {
      if (!avx2_supported()) throw std::runtime_error("GMS_KERNELS=avx2 but CPU lacks AVX2");
      return &kAvx2Table;
    }
#endif
    if (v != "auto" && !v.empty())
      throw std::runtime_error("unknown GMS_KERNELS value: " + v);
  }
#if defined(GMS_KERNELS_HAVE_AVX2)
  if (avx2_supported()) return &kAvx2Table;
#endif
  return &kScalarTable;
}

std::atomic<const Table*> g_table{nullptr};

const Table& table() {
  const Table* t = g_table.load(std::memory_order_acquire);
  if (!t) {
    t = resolve_auto();
    g_table.store(t, std::memory_order_release);
  }
  return *t;
}

}  // namespace

bool avx2_supported() {
#if defined(GMS_KERNELS_HAVE_AVX2)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Backend active_backend() { return table().backend; }

const char* backend_name(Backend b) {
  return b == Backend::Avx2 ? "avx2" : "scalar";
}

void force_backend(Backend b) {
  if (b == Backend::Scalar) {
    g_table.store(&kScalarTable, std::memory_order_release);
    return;
  }
#if defined(GMS_KERNELS_HAVE_AVX2)
  if (avx2_supported()) {
    g_table.store(&kAvx2Table, std::memory_order_release);
    return;
  }
#endif
  throw std::runtime_error("requested kernel backend not available on this CPU");
}

void reset_backend() { g_table.store(nullptr, std::memory_order_release); }

double sum(const double* x, std::size_t n) { return table().sum(x, n); }
double dot(const double* x, const double* y, std::size_t n) { return table().dot(x, y, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { table().axpy(a, x, y, n); }
void scale_shift(const double* x, double c, double a, double* y, std::size_t n) {
  table().scale_shift(x, c, a, y, n);
}
void binarize_ge(const double* f, const double* t, double* out, std::size_t n) {
  table().binarize_ge(f, t, out, n);
}
void sq_l1_accum(const double* f, const double* b, const double* ref, std::size_t n,
                 double* sq, double* l1) {
  table().sq_l1_accum(f, b, ref, n, sq, l1);
}
void box_mean(const double* ii, int width, int height, int r, double* out) {
  table().box_mean(ii, width, height, r, out);
}
void bilinear_row(const double* r0, const double* r1, double wy, const int32_t* x0,
                  const int32_t* x1, const double* fx, double* out, int n_out) {
  table().bilinear_row(r0, r1, wy, x0, x1, fx, out, n_out);
}

}  // namespace gms::kernels
