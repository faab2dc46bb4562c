#ifndef AFREE_SPECTRAL_HPP
#define AFREE_SPECTRAL_HPP

#include <span>

#include "afree/linear_operator.hpp"
#include "afree/torus_field.hpp"

namespace afree {

/// A u on the torus: per frequency, u_hat(xi) -> (2 pi i)^k sum A_alpha xi^alpha u_hat(xi).
/// Odd-order operators zero every Nyquist bin to preserve real-valuedness.
TorusField apply_operator(const LinearOperator& op, const TorusField& u);

struct RepresentativeResult {
  TorusField field;     // T[u], mean-zero, with A(T[u]) = A u frequency-wise
  double formula_gap;   // max per-bin gap between the projector and
                        // pseudoinverse evaluations of T
};

/// The representative T[u] = F^{-1}(pi~ u_hat) = F^{-1}(A(.)^dagger F(A u)).
/// Requires a constant-rank operator (audited, cached); both formulas are
/// computed and must agree to 1e-10.
RepresentativeResult a_representative_detailed(const LinearOperator& op, const TorusField& u);
TorusField a_representative(const LinearOperator& op, const TorusField& u);

/// z = u - mean(u) - T[u]; A z = 0 and u reconstructs exactly.
TorusField afree_part(const LinearOperator& op, const TorusField& u);

struct PotentialResult {
  TorusField potential;          // mean-zero minimal-norm u with B u = z
  double max_range_residual;     // max per-frequency distance of z_hat to im B(xi),
                                 // relative to the largest coefficient of z
};

/// Solve B u = z per frequency via the Moore-Penrose inverse of the symbol.
/// Throws if the range residual exceeds range_tol.
PotentialResult potential_solve(const LinearOperator& op_b, const TorusField& z,
                                double range_tol = 1e-8);

struct SobolevNormSpec {
  double s = 0.0;  // Bessel weight (1+|xi|^2)^{s/2}
};

/// Plancherel norm (sum (1+|xi|^2)^s |u_hat|^2)^{1/2}; s=0 is the quadratic mean.
double sobolev_norm(const TorusField& u, SobolevNormSpec spec);
double sobolev_norm(const Spectrum& s, SobolevNormSpec spec);

struct PoincareReport {
  double max_ratio = 0.0;
  double mean_ratio = 0.0;
  int used = 0;
  int skipped = 0;
};

/// Empirical multiplier constant: ratios |T[u]|_{s=0} / |A u|_{s=-k} over a batch.
PoincareReport poincare_check(const LinearOperator& op, std::span<const TorusField> batch);

} // namespace afree

#endif
