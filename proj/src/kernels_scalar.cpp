#include <cmath>

#include "afree/kernels.hpp"

namespace afree::kern {
namespace {

inline double sumsq_at(const double* const* w, int fiber, std::size_t i, const double* z,
                       double* q) {
  double s = 0.0;
  for (int c = 0; c < fiber; ++c) {
    double v = z[c] + w[c][i];
    q[c] = v;
    s += v * v;
  }
  return s;
}

double dw(const double* const* w, int fiber, std::size_t n, const double* z,
          double* const* grads) {
  double acc = 0.0;
  double q[8];
  for (std::size_t i = 0; i < n; ++i) {
    double s = sumsq_at(w, fiber, i, z, q) - 1.0;
    acc += s * s;
    if (grads) {
      double coef = 4.0 * s;
      for (int c = 0; c < fiber; ++c) grads[c][i] = coef * q[c];
    }
  }
  return acc;
}

double snorm(const double* const* w, int fiber, std::size_t n, const double* z, double eps2,
             double* const* grads) {
  double acc = 0.0;
  double q[8];
  for (std::size_t i = 0; i < n; ++i) {
    double t = std::sqrt(sumsq_at(w, fiber, i, z, q) + eps2);
    acc += t;
    if (grads) {
      double coef = 1.0 / t;
      for (int c = 0; c < fiber; ++c) grads[c][i] = coef * q[c];
    }
  }
  return acc;
}

double area(const double* const* w, int fiber, std::size_t n, const double* z,
            double* const* grads) {
  double acc = 0.0;
  double q[8];
  for (std::size_t i = 0; i < n; ++i) {
    double t = std::sqrt(1.0 + sumsq_at(w, fiber, i, z, q));
    acc += t;
    if (grads) {
      double coef = 1.0 / t;
      for (int c = 0; c < fiber; ++c) grads[c][i] = coef * q[c];
    }
  }
  return acc;
}

double quad(const double* const* w, int fiber, std::size_t n, const double* z,
            double* const* grads) {
  double acc = 0.0;
  double q[8];
  for (std::size_t i = 0; i < n; ++i) {
    acc += sumsq_at(w, fiber, i, z, q);
    if (grads)
      for (int c = 0; c < fiber; ++c) grads[c][i] = 2.0 * q[c];
  }
  return acc;
}

// smooth min of the two smoothed point distances:
//   m(d1,d2) = (d1 + d2 - sqrt((d1-d2)^2 + eps2)) / 2
double tp_dist(const double* const* w, int fiber, std::size_t n, const double* z,
               const double* a1, const double* a2, double eps2, double* const* grads) {
  double acc = 0.0;
  double q[8];
  for (std::size_t i = 0; i < n; ++i) {
    double s1 = eps2, s2 = eps2;
    for (int c = 0; c < fiber; ++c) {
      double v = z[c] + w[c][i];
      q[c] = v;
      double u1 = v - a1[c], u2 = v - a2[c];
      s1 += u1 * u1;
      s2 += u2 * u2;
    }
    double d1 = std::sqrt(s1), d2 = std::sqrt(s2);
    double r = std::sqrt((d1 - d2) * (d1 - d2) + eps2);
    acc += 0.5 * (d1 + d2 - r);
    if (grads) {
      double dm1 = 0.5 * (1.0 - (d1 - d2) / r);
      double dm2 = 0.5 * (1.0 + (d1 - d2) / r);
      for (int c = 0; c < fiber; ++c)
        grads[c][i] = dm1 * (q[c] - a1[c]) / d1 + dm2 * (q[c] - a2[c]) / d2;
    }
  }
  return acc;
}

double wsumsq(const double* wgt, const double* re, const double* im, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += wgt[i] * (re[i] * re[i] + im[i] * im[i]);
  return acc;
}

} // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{dw, snorm, area, quad, tp_dist, wsumsq};
  return t;
}

} // namespace afree::kern
