#ifdef AFREE_HAVE_AVX2

#include <immintrin.h>

#include <cmath>

#include "afree/kernels.hpp"

// 4-wide AVX2 variants of the grid kernels. Cells are independent, so each
// kernel walks the planar arrays in blocks of 4 with a scalar tail.

namespace afree::kern {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_hadd_pd(lo, lo));
}

template <class Fn>
double scalar_tail(const double* const* w, int fiber, std::size_t begin, std::size_t end,
                   const double* z, double* const* grads, Fn&& fn) {
  double acc = 0.0;
  for (std::size_t i = begin; i < end; ++i) acc += fn(i, w, fiber, z, grads);
  return acc;
}

double dw(const double* const* w, int fiber, std::size_t n, const double* z,
          double* const* grads) {
  std::size_t nb = n / 4 * 4;
  __m256d acc = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d four = _mm256_set1_pd(4.0);
  alignas(32) double qbuf[8][4];
  for (std::size_t i = 0; i < nb; i += 4) {
    __m256d s = _mm256_setzero_pd();
    for (int c = 0; c < fiber; ++c) {
      __m256d q = _mm256_add_pd(_mm256_set1_pd(z[c]), _mm256_loadu_pd(w[c] + i));
      _mm256_store_pd(qbuf[c], q);
      s = _mm256_fmadd_pd(q, q, s);
    }
    __m256d sm1 = _mm256_sub_pd(s, one);
    acc = _mm256_fmadd_pd(sm1, sm1, acc);
    if (grads) {
      __m256d coef = _mm256_mul_pd(four, sm1);
      for (int c = 0; c < fiber; ++c)
        _mm256_storeu_pd(grads[c] + i, _mm256_mul_pd(coef, _mm256_load_pd(qbuf[c])));
    }
  }
  double tail = scalar_tail(w, fiber, nb, n, z, grads,
                            [](std::size_t i, const double* const* w, int fiber,
                               const double* z, double* const* grads) {
                              double s = 0.0, q[8];
                              for (int c = 0; c < fiber; ++c) {
                                q[c] = z[c] + w[c][i];
                                s += q[c] * q[c];
                              }
                              s -= 1.0;
                              if (grads)
                                for (int c = 0; c < fiber; ++c) grads[c][i] = 4.0 * s * q[c];
                              return s * s;
                            });
  return hsum(acc) + tail;
}

double snorm(const double* const* w, int fiber, std::size_t n, const double* z, double eps2,
             double* const* grads) {
  std::size_t nb = n / 4 * 4;
  __m256d acc = _mm256_setzero_pd();
  const __m256d e2 = _mm256_set1_pd(eps2);
  alignas(32) double qbuf[8][4];
  for (std::size_t i = 0; i < nb; i += 4) {
    __m256d s = e2;
    for (int c = 0; c < fiber; ++c) {
      __m256d q = _mm256_add_pd(_mm256_set1_pd(z[c]), _mm256_loadu_pd(w[c] + i));
      _mm256_store_pd(qbuf[c], q);
      s = _mm256_fmadd_pd(q, q, s);
    }
    __m256d t = _mm256_sqrt_pd(s);
    acc = _mm256_add_pd(acc, t);
    if (grads) {
      __m256d coef = _mm256_div_pd(_mm256_set1_pd(1.0), t);
      for (int c = 0; c < fiber; ++c)
        _mm256_storeu_pd(grads[c] + i, _mm256_mul_pd(coef, _mm256_load_pd(qbuf[c])));
    }
  }
  double tail = 0.0;
  for (std::size_t i = nb; i < n; ++i) {
    double s = eps2, q[8];
    for (int c = 0; c < fiber; ++c) {
      q[c] = z[c] + w[c][i];
      s += q[c] * q[c];
    }
    double t = std::sqrt(s);
    tail += t;
    if (grads)
      for (int c = 0; c < fiber; ++c) grads[c][i] = q[c] / t;
  }
  return hsum(acc) + tail;
}

double area(const double* const* w, int fiber, std::size_t n, const double* z,
            double* const* grads) {
  return snorm(w, fiber, n, z, 1.0, grads);
}

double quad(const double* const* w, int fiber, std::size_t n, const double* z,
            double* const* grads) {
  std::size_t nb = n / 4 * 4;
  __m256d acc = _mm256_setzero_pd();
  const __m256d two = _mm256_set1_pd(2.0);
  for (std::size_t i = 0; i < nb; i += 4) {
    __m256d s = _mm256_setzero_pd();
    for (int c = 0; c < fiber; ++c) {
      __m256d q = _mm256_add_pd(_mm256_set1_pd(z[c]), _mm256_loadu_pd(w[c] + i));
      s = _mm256_fmadd_pd(q, q, s);
      if (grads) _mm256_storeu_pd(grads[c] + i, _mm256_mul_pd(two, q));
    }
    acc = _mm256_add_pd(acc, s);
  }
  double tail = 0.0;
  for (std::size_t i = nb; i < n; ++i) {
    for (int c = 0; c < fiber; ++c) {
      double q = z[c] + w[c][i];
      tail += q * q;
      if (grads) grads[c][i] = 2.0 * q;
    }
  }
  return hsum(acc) + tail;
}

double tp_dist(const double* const* w, int fiber, std::size_t n, const double* z,
               const double* a1, const double* a2, double eps2, double* const* grads) {
  std::size_t nb = n / 4 * 4;
  __m256d acc = _mm256_setzero_pd();
  const __m256d e2 = _mm256_set1_pd(eps2);
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d one = _mm256_set1_pd(1.0);
  alignas(32) double qbuf[8][4];
  for (std::size_t i = 0; i < nb; i += 4) {
    __m256d s1 = e2, s2 = e2;
    for (int c = 0; c < fiber; ++c) {
      __m256d q = _mm256_add_pd(_mm256_set1_pd(z[c]), _mm256_loadu_pd(w[c] + i));
      _mm256_store_pd(qbuf[c], q);
      __m256d u1 = _mm256_sub_pd(q, _mm256_set1_pd(a1[c]));
      __m256d u2 = _mm256_sub_pd(q, _mm256_set1_pd(a2[c]));
      s1 = _mm256_fmadd_pd(u1, u1, s1);
      s2 = _mm256_fmadd_pd(u2, u2, s2);
    }
    __m256d d1 = _mm256_sqrt_pd(s1);
    __m256d d2 = _mm256_sqrt_pd(s2);
    __m256d diff = _mm256_sub_pd(d1, d2);
    __m256d r = _mm256_sqrt_pd(_mm256_fmadd_pd(diff, diff, e2));
    acc = _mm256_add_pd(acc,
                        _mm256_mul_pd(half, _mm256_sub_pd(_mm256_add_pd(d1, d2), r)));
    if (grads) {
      __m256d ratio = _mm256_div_pd(diff, r);
      __m256d dm1 = _mm256_mul_pd(half, _mm256_sub_pd(one, ratio));
      __m256d dm2 = _mm256_mul_pd(half, _mm256_add_pd(one, ratio));
      __m256d c1 = _mm256_div_pd(dm1, d1);
      __m256d c2 = _mm256_div_pd(dm2, d2);
      for (int c = 0; c < fiber; ++c) {
        __m256d q = _mm256_load_pd(qbuf[c]);
        __m256d g1 = _mm256_mul_pd(c1, _mm256_sub_pd(q, _mm256_set1_pd(a1[c])));
        __m256d g2 = _mm256_mul_pd(c2, _mm256_sub_pd(q, _mm256_set1_pd(a2[c])));
        _mm256_storeu_pd(grads[c] + i, _mm256_add_pd(g1, g2));
      }
    }
  }
  // tail via the reference path
  double tail = 0.0;
  for (std::size_t i = nb; i < n; ++i) {
    double q[8], s1 = eps2, s2 = eps2;
    for (int c = 0; c < fiber; ++c) {
      q[c] = z[c] + w[c][i];
      double u1 = q[c] - a1[c], u2 = q[c] - a2[c];
      s1 += u1 * u1;
      s2 += u2 * u2;
    }
    double d1 = std::sqrt(s1), d2 = std::sqrt(s2);
    double r = std::sqrt((d1 - d2) * (d1 - d2) + eps2);
    tail += 0.5 * (d1 + d2 - r);
    if (grads) {
      double dm1 = 0.5 * (1.0 - (d1 - d2) / r);
      double dm2 = 0.5 * (1.0 + (d1 - d2) / r);
      for (int c = 0; c < fiber; ++c)
        grads[c][i] = dm1 * (q[c] - a1[c]) / d1 + dm2 * (q[c] - a2[c]) / d2;
    }
  }
  return hsum(acc) + tail;
}

double wsumsq(const double* wgt, const double* re, const double* im, std::size_t n) {
  std::size_t nb = n / 4 * 4;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < nb; i += 4) {
    __m256d r = _mm256_loadu_pd(re + i);
    __m256d m = _mm256_loadu_pd(im + i);
    __m256d s = _mm256_fmadd_pd(m, m, _mm256_mul_pd(r, r));
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(wgt + i), s, acc);
  }
  double tail = 0.0;
  for (std::size_t i = nb; i < n; ++i) tail += wgt[i] * (re[i] * re[i] + im[i] * im[i]);
  return hsum(acc) + tail;
}

} // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{dw, snorm, area, quad, tp_dist, wsumsq};
  return t;
}

} // namespace afree::kern

#endif // AFREE_HAVE_AVX2
