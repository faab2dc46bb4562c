#ifndef AFREE_ENVELOPE_HPP
#define AFREE_ENVELOPE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "afree/integrand.hpp"
#include "afree/linear_operator.hpp"
#include "afree/torus_field.hpp"

namespace afree {

/// Grid quadrature of f(z + w) (the trapezoid rule coincides with the mean
/// on a uniform periodic grid).
double cell_energy(const Integrand& f, const Eigen::VectorXd& z, const TorusField& w);

/// The cell problem in reduced Fourier coordinates: per frequency
/// 0 < |xi|_inf <= K (half lattice), coefficients confined to an orthonormal
/// basis of ker A(xi), with Hermitian symmetry built in. Coordinates are the
/// real/imaginary parts, so fields are mean-zero and A-free by construction.
class CellProblem {
public:
  CellProblem(const LinearOperator& op, IntegrandPtr f, Eigen::VectorXd z, int grid_n,
              int cutoff);

  int coords() const { return n_coords_; }
  int cutoff() const { return cutoff_; }
  int grid_n() const { return grid_n_; }

  TorusField field(const Eigen::VectorXd& x) const;
  double energy(const Eigen::VectorXd& x) const;
  double energy_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;

  /// Map coordinates from a coarser cell problem (same op/f/z/grid) into this
  /// one (frequency-wise identity), used for warm starts across cutoffs.
  Eigen::VectorXd embed_from(const CellProblem& coarse, const Eigen::VectorXd& x) const;

private:
  struct Mode {
    std::array<int, 3> xi;
    std::size_t bin;      // r2c bin of the stored representative
    bool conjugated;      // representative is -xi in r2c storage
    std::size_t mirror_bin;  // stored conjugate partner on self-conjugate
    bool has_mirror;         // planes (last-axis frequency 0)
    Eigen::MatrixXd basis;  // fiber x m, orthonormal basis of ker A(xi)
    int offset;           // first coordinate index (2*m reals: Re then Im)
  };
  LinearOperator op_;
  IntegrandPtr f_;
  Eigen::VectorXd z_;
  int grid_n_, cutoff_, n_coords_;
  std::vector<Mode> modes_;
};

struct EnvelopeConfig {
  std::vector<int> k_schedule = {4, 8};  // processed in increasing order, warm-started
  int grid_n = 32;
  int restarts = 8;
  int max_iters = 500;
  double restart_amplitude = 0.5;
  std::vector<double> smoothing_schedule = {1e-1, 1e-2, 1e-3};  // nonsmooth f only
  std::uint64_t seed = 0x5eed;
  double grad_tol = 1e-10;
};

struct EnvelopeResult {
  Eigen::VectorXd z;
  double value = 0.0;            // upper bound on Q_A f(z) in the truncated class
  double zero_field_energy = 0.0;  // f(z) + smoothing correction
  TorusField field;              // best test field found
  int truncation = 0;            // final K
  int restarts_used = 0;
  bool diverged = false;
  double afree_residual = 0.0;   // |A w|_{s=-k} / max(|w|_{s=0}, 1e-30)
  std::vector<double> k_values;        // optimum per cutoff in the schedule
  std::vector<double> smoothing_values;  // per smoothing stage (nonsmooth f)
  std::vector<double> history;   // objective trace of the winning run
};

/// Upper bound on the A-quasiconvex envelope Q_A f(z) over the truncated
/// Fourier test class; exact equality is never claimed.
EnvelopeResult quasiconvex_envelope(const LinearOperator& op, IntegrandPtr f,
                                    const Eigen::VectorXd& z, const EnvelopeConfig& config = {});

struct ConvexityReport {
  int checked = 0;
  int violations = 0;
  double worst = 0.0;  // largest positive violation of midpoint convexity
  Eigen::VectorXd worst_z, worst_dir;
  double worst_t = 0.0;
};

/// Midpoint convexity of h along segments with wave-cone directions
/// (kernel vectors harvested from the audit).
ConvexityReport lambda_convexity_check(const LinearOperator& op,
                                       const std::function<double(const Eigen::VectorXd&)>& h,
                                       int n_lines, double tol, std::uint64_t seed = 11);
ConvexityReport lambda_convexity_check(const LinearOperator& op, const Integrand& h,
                                       int n_lines, double tol, std::uint64_t seed = 11);

struct CoercivityReport {
  bool holds = false;
  double lhs = 0.0;       // |z + w|_{L1}
  double bound = 0.0;     // (C/eps)(1 + |z| + delta)
  double c_used = 0.0;
  double c_required = 0.0;  // eps * lhs / (1 + |z| + delta)
};

/// L1 coercivity monitor for near-optimal cell fields of f + eps|.|.
CoercivityReport coercivity_bound_check(const LinearOperator& op, const Integrand& f,
                                        double eps, const Eigen::VectorXd& z,
                                        const TorusField& w, double delta,
                                        double growth_c = -1.0);

} // namespace afree

#endif
