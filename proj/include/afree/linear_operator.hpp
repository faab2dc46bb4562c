#ifndef AFREE_LINEAR_OPERATOR_HPP
#define AFREE_LINEAR_OPERATOR_HPP

#include <Eigen/Dense>
#include <complex>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "afree/multi_index.hpp"

namespace afree {

struct OperatorTerm {
  MultiIndex alpha;
  Eigen::MatrixXd matrix;  // fiber_out x fiber_in
};

/// Homogeneous constant-coefficient operator sum_{|alpha|=k} A_alpha d^alpha
/// from W (fiber_in) to X (fiber_out). Immutable; cheap to copy.
class LinearOperator {
public:
  LinearOperator(int dimension, int order, int fiber_in, int fiber_out,
                 std::vector<OperatorTerm> terms, std::string name);

  int dimension() const { return impl_->d; }
  int order() const { return impl_->k; }
  int fiber_in() const { return impl_->dim_w; }
  int fiber_out() const { return impl_->dim_x; }
  const std::vector<OperatorTerm>& terms() const { return impl_->terms; }
  const std::string& name() const { return impl_->name; }

  // Principal symbol without the (2 pi i)^k factor: sum A_alpha xi^alpha.
  // Real-valued; shares rank and kernel with the full symbol.
  void reduced_symbol(const Eigen::VectorXd& xi, Eigen::MatrixXd& out) const;
  Eigen::MatrixXd reduced_symbol(const Eigen::VectorXd& xi) const;

  // Full principal symbol (2 pi i)^k sum A_alpha xi^alpha.
  Eigen::MatrixXcd symbol(const Eigen::VectorXd& xi) const;
  std::complex<double> symbol_scale() const;  // (2 pi i)^k
  double symbol_scale_abs() const;            // (2 pi)^k

  // Jacobian of xi -> reduced_symbol(xi) * w, shape fiber_out x d.
  Eigen::MatrixXd symbol_jacobian(const Eigen::VectorXd& xi, const Eigen::VectorXd& w) const;

  // True if every frequency with a Nyquist component must be zeroed in
  // spectral application to keep fields real-valued (odd order).
  bool needs_nyquist_mask() const { return impl_->k % 2 != 0; }

  bool operator==(const LinearOperator& o) const { return impl_ == o.impl_; }

private:
  struct Impl {
    int d, k, dim_w, dim_x;
    std::vector<OperatorTerm> terms;
    std::string name;
  };
  std::shared_ptr<const Impl> impl_;
};

/// Symbol evaluated at a frequency, with a lazily computed SVD shared by
/// rank/kernel queries at the same point.
class SymbolMatrix {
public:
  SymbolMatrix(Eigen::VectorXd xi, Eigen::MatrixXcd value, int order);

  const Eigen::VectorXd& xi() const { return xi_; }
  const Eigen::MatrixXcd& value() const { return value_; }
  int order() const { return order_; }

  const Eigen::JacobiSVD<Eigen::MatrixXcd>& svd() const;
  int rank(double tol) const;

private:
  Eigen::VectorXd xi_;
  Eigen::MatrixXcd value_;
  int order_;
  mutable std::unique_ptr<Eigen::JacobiSVD<Eigen::MatrixXcd>> svd_;
};

SymbolMatrix symbol_at(const LinearOperator& op, const Eigen::VectorXd& xi);

/// Structured key/value operator definition file (see README for grammar).
LinearOperator parse_operator_text(std::string_view text, const std::string& origin);
LinearOperator parse_operator_file(const std::string& path);
std::string format_operator(const LinearOperator& op);

/// Built-in operator gallery: gradient, k-gradient, symmetric gradient,
/// deviatoric, Laplacian, divergence, 2d curl, rotated gradient, current
/// boundaries for d <= 3, plus the non-constant-rank diagonal example.
const LinearOperator& gallery(std::string_view name);
std::vector<std::string> gallery_names();

} // namespace afree

#endif
