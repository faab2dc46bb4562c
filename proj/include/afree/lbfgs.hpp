#ifndef AFREE_LBFGS_HPP
#define AFREE_LBFGS_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace afree {

struct LbfgsOptions {
  int max_iters = 500;
  int memory = 8;
  double grad_tol = 1e-10;   // stop when |g| <= grad_tol * max(1,|x|)
  double f_tol = 1e-14;      // relative objective decrease
  int max_line_search = 40;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iters = 0;
  bool converged = false;
  bool line_search_failed = false;
  std::vector<double> trace;  // objective after each iteration
};

/// objective(x, g) -> f, writing the gradient into g.
using LbfgsObjective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Limited-memory BFGS (two-loop recursion) with Armijo backtracking.
/// Monotone in the objective by construction.
LbfgsResult lbfgs_minimize(const LbfgsObjective& objective, Eigen::VectorXd x0,
                           const LbfgsOptions& opt = {});

} // namespace afree

#endif
