#ifndef AFREE_INTEGRAND_HPP
#define AFREE_INTEGRAND_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace afree {

class Integrand;
using IntegrandPtr = std::shared_ptr<const Integrand>;

/// Integrand f : W -> R. Implementations provide analytic strong recessions
/// where they exist; superlinear kinds (quadratic, double well) report
/// linear_growth() == false and an infinite upper recession.
class Integrand {
public:
  virtual ~Integrand() = default;

  virtual double value(const Eigen::VectorXd& z) const = 0;
  virtual bool differentiable() const { return true; }
  virtual void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const;

  // strong recession f^inf (positively 1-homogeneous) when it exists
  virtual bool has_strong_recession() const { return false; }
  virtual double recession(const Eigen::VectorXd& z) const;

  // analytic upper recession f^# when available (may be +inf); returns false
  // if only the numeric estimator applies
  virtual bool upper_recession_analytic(const Eigen::VectorXd& z, double& out) const;

  virtual bool linear_growth() const { return true; }
  virtual double growth_constant() const = 0;  // M with |f| <= M(1+|z|) when linear growth
  virtual std::optional<double> lipschitz_constant() const { return std::nullopt; }

  // smooth surrogate for first-order optimization; identity for smooth kinds
  virtual IntegrandPtr smoothed(double eps) const;

  virtual std::string describe() const = 0;

  /// sum_i f(z + w_i) over planar component arrays, optionally writing
  /// df/dw_c[i]; the bundled kinds dispatch to the SIMD kernels.
  virtual double grid_sum(const double* const* comps, int fiber, std::size_t n,
                          const double* z, double* const* grads) const;
};

// bundled integrand kinds
IntegrandPtr make_constant(double c, int dim = 0);
IntegrandPtr make_norm();                         // |z| (nonsmooth at 0)
IntegrandPtr make_smooth_norm(double eps);        // sqrt(|z|^2 + eps^2)
IntegrandPtr make_area();                         // sqrt(1 + |z|^2)
IntegrandPtr make_quadratic();                    // |z|^2 (superlinear)
IntegrandPtr make_radial_double_well();           // (|z|^2 - 1)^2 (superlinear)
IntegrandPtr make_distance(std::vector<Eigen::VectorXd> points);  // dist(z, {A_i})
IntegrandPtr make_smooth_distance(std::vector<Eigen::VectorXd> points, double eps);
IntegrandPtr make_shifted_norm(Eigen::VectorXd a);  // |z - a| (convex)
IntegrandPtr make_scaled(double a, IntegrandPtr f);
IntegrandPtr make_sum(IntegrandPtr f, IntegrandPtr g);

/// f~(z) = f(P z), P the orthogonal projector onto span(basis columns).
IntegrandPtr tilde_transform(IntegrandPtr f, const Eigen::MatrixXd& span_basis);

/// DSL: sum of scaled primaries, e.g.
///   "radial_double_well()", "norm() + 0.5*area()",
///   "distance(points=[[1,0],[-1,0]]) + 0.0"
IntegrandPtr parse_integrand(std::string_view text);

/// (Sf)(zhat) = (1-|zhat|) f(zhat/(1-|zhat|)) on the open unit ball; the
/// boundary values are the strong recession (throws without one).
double s_transform(const Integrand& f, const Eigen::VectorXd& zhat, double boundary_tol = 1e-12);
/// Inverse transform (Tg)(z) = (1+|z|) g(z/(1+|z|)) for g on the closed ball.
double t_transform(const std::function<double(const Eigen::VectorXd&)>& g,
                   const Eigen::VectorXd& z);

struct RecessionEstimate {
  double value = 0.0;
  bool analytic = false;  // false: numeric upper estimate
};

/// Upper recession f^#(z): analytic when the kind provides it, otherwise the
/// max of f(t z')/t over t in {2^4..2^12} and 64 perturbations z' in
/// shrinking balls around z (an upper ESTIMATE: the limsup cannot be
/// exhausted numerically).
RecessionEstimate upper_recession(const Integrand& f, const Eigen::VectorXd& z,
                                  std::uint64_t seed = 97);

} // namespace afree

#endif
