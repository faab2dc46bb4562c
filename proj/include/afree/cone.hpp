#ifndef AFREE_CONE_HPP
#define AFREE_CONE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "afree/linear_operator.hpp"

namespace afree {

// Relative SVD threshold used for all rank decisions in the toolkit.
inline constexpr double kRankTol = 1e-10;

/// Count of singular values above tol * sigma_max; 0 for the zero matrix.
int numerical_rank(const Eigen::MatrixXd& m, double tol = kRankTol);
int numerical_rank(const Eigen::MatrixXcd& m, double tol = kRankTol);

/// Orthonormal basis of the null space (columns); empty when full rank.
Eigen::MatrixXd null_space_basis(const Eigen::MatrixXd& m, double tol = kRankTol);
/// Orthonormal basis of the column space.
Eigen::MatrixXd range_basis(const Eigen::MatrixXd& m, double tol = kRankTol);

/// Deterministic quasi-uniform unit directions: generalized spiral points
/// plus all +-axis and +-diagonal directions (the axes are where the gallery
/// operators degenerate).
std::vector<Eigen::VectorXd> sphere_samples(int dim, int n);

/// Sampled certificate of the constant rank property. Not a proof: it
/// reports the behaviour of the symbol on the sample set only.
struct ConeReport {
  std::vector<Eigen::VectorXd> samples;
  std::vector<int> ranks;
  int rank_min = 0;
  int rank_max = 0;
  bool constant_rank = false;
  int r = 0;  // common rank when constant
  std::vector<Eigen::MatrixXd> kernel_bases;  // per sample
  Eigen::MatrixXd span_basis;                 // orthonormal basis of W_A = span(Lambda_A)
  int span_dim() const { return static_cast<int>(span_basis.cols()); }
};

ConeReport constant_rank_audit(const LinearOperator& op, int n_samples = 256,
                               double tol = kRankTol);

/// Shared audit cache (ops are immutable; keyed by identity).
const ConeReport& cached_audit(const LinearOperator& op);

struct MembershipResult {
  bool member = false;
  double value = 0.0;           // best |A(xi) w| / |w| over the sphere (full symbol scale)
  Eigen::VectorXd witness;      // minimizing unit xi (present even on "false")
};

/// Wave cone test: min over unit xi of |A(xi) w| / |w| below tol. Grid
/// seeding plus multi-start projected gradient descent on the sphere.
MembershipResult wave_cone_membership(const LinearOperator& op, const Eigen::VectorXd& w,
                                      double tol = 1e-6, std::uint64_t seed = 20240601,
                                      int restarts = 32);

/// Image cone test: distance from w to im B(xi), minimized over the sphere.
MembershipResult image_cone_membership(const LinearOperator& op_b, const Eigen::VectorXd& w,
                                       double tol = 1e-6, std::uint64_t seed = 20240601,
                                       int restarts = 32);

struct ExactnessReport {
  bool pass = false;
  bool dims_match = false;
  double max_gap = 0.0;         // max principal-angle gap sin(theta_max)
  Eigen::VectorXd worst_xi;
  int n_samples = 0;
  double tol = 0.0;
};

/// Checks im B(xi) = ker A(xi) over sampled unit frequencies.
ExactnessReport exactness_check(const LinearOperator& op_a, const LinearOperator& op_b,
                                int n_samples = 256, double tol = 1e-10);

} // namespace afree

#endif
