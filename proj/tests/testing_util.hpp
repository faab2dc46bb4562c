#ifndef AFREE_TESTING_UTIL_HPP
#define AFREE_TESTING_UTIL_HPP

#include <vector>

#include "afree/linear_operator.hpp"
#include "afree/rng.hpp"
#include "afree/torus_field.hpp"

namespace afree::testing {

inline std::vector<LinearOperator> property_ops() {
  return {gallery("divergence_2d"),   gallery("divergence_3d"), gallery("laplacian_2d"),
          gallery("curl_2d"),         gallery("sym_gradient_2d"), gallery("hessian_2d"),
          gallery("saint_venant_2d"), gallery("deviatoric_2d"),   gallery("gradient_2d_m2"),
          gallery("cauchy_riemann_2d")};
}

inline std::vector<LinearOperator> constant_rank_ops() {
  auto ops = property_ops();
  return ops;  // mueller_diagonal_2d deliberately excluded
}

inline Eigen::VectorXd random_xi(Rng& rng, int d) { return rng.normal_vector(d, 2.0); }

// central finite differences of a scalar function of reduced coordinates
template <class Fn>
Eigen::VectorXd fd_gradient(Fn&& fn, const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    xp[i] += h;
    xm[i] -= h;
    g[i] = (fn(xp) - fn(xm)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

inline TorusField zero_mean(TorusField w) {
  Eigen::VectorXd m = w.mean();
  for (int c = 0; c < w.fiber(); ++c) {
    double* p = w.component(c);
    for (std::size_t i = 0; i < w.cells(); ++i) p[i] -= m[c];
  }
  return w;
}

} // namespace afree::testing

#endif
