#ifndef AFREE_KERNELS_HPP
#define AFREE_KERNELS_HPP

#include <cstddef>
#include <string>

namespace afree::kern {

// Grid reduction kernels for the integrand arithmetic that dominates the
// cell-problem and pairing inner loops. Fields are planar: w[c] points to a
// contiguous array of n values of component c; the evaluation point is
// q_i = z + w_i. When grads != nullptr, d f / d w_c[i] is written to
// grads[c][i]. Every kernel returns sum_i f(q_i).
//
// Scalar versions are the reference semantics; the AVX2 variants are
// equivalence-tested against them and selected at runtime.
struct KernelTable {
  double (*double_well)(const double* const* w, int fiber, std::size_t n, const double* z,
                        double* const* grads);
  double (*smooth_norm)(const double* const* w, int fiber, std::size_t n, const double* z,
                        double eps2, double* const* grads);
  double (*area)(const double* const* w, int fiber, std::size_t n, const double* z,
                 double* const* grads);
  double (*quadratic)(const double* const* w, int fiber, std::size_t n, const double* z,
                      double* const* grads);
  double (*two_point_dist)(const double* const* w, int fiber, std::size_t n, const double* z,
                           const double* a1, const double* a2, double eps2,
                           double* const* grads);
  // sum_i wgt_i * (re_i^2 + im_i^2), the Bessel-weighted Plancherel reduction
  double (*weighted_sumsq)(const double* wgt, const double* re, const double* im,
                           std::size_t n);
};

enum class Isa { scalar, avx2 };

const KernelTable& scalar_table();
#ifdef AFREE_HAVE_AVX2
const KernelTable& avx2_table();
#endif

bool avx2_supported();      // compile-time AND cpu support
Isa active_isa();
void force_isa(Isa isa);    // testing hook; throws if unsupported
std::string isa_name(Isa isa);

const KernelTable& active();

} // namespace afree::kern

#endif
