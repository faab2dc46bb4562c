#include "afree/lbfgs.hpp"

#include <cmath>
#include <deque>

namespace afree {

LbfgsResult lbfgs_minimize(const LbfgsObjective& objective, Eigen::VectorXd x0,
                           const LbfgsOptions& opt) {
  LbfgsResult res;
  const int n = static_cast<int>(x0.size());
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd g(n), gnew(n);
  double f = objective(x, g);

  struct Pair {
    Eigen::VectorXd s, y;
    double rho;
  };
  std::deque<Pair> mem;

  Eigen::VectorXd d(n), xnew(n);
  for (int it = 0; it < opt.max_iters; ++it) {
    double gn = g.norm();
    if (gn <= opt.grad_tol * std::max(1.0, x.norm())) {
      res.converged = true;
      break;
    }
    // two-loop recursion
    d = -g;
    std::vector<double> alpha(mem.size());
    for (int i = static_cast<int>(mem.size()) - 1; i >= 0; --i) {
      alpha[i] = mem[i].rho * mem[i].s.dot(d);
      d -= alpha[i] * mem[i].y;
    }
    if (!mem.empty()) {
      const Pair& last = mem.back();
      double gamma = last.s.dot(last.y) / last.y.squaredNorm();
      d *= gamma;
    }
    for (std::size_t i = 0; i < mem.size(); ++i) {
      double beta = mem[i].rho * mem[i].y.dot(d);
      d += (alpha[i] - beta) * mem[i].s;
    }
    double dg = d.dot(g);
    if (dg >= 0.0) {  // safeguard: fall back to steepest descent
      d = -g;
      dg = -gn * gn;
    }

    double step = mem.empty() ? std::min(1.0, 1.0 / std::max(gn, 1e-12)) : 1.0;
    bool accepted = false;
    double fnew = f;
    for (int ls = 0; ls < opt.max_line_search; ++ls) {
      xnew = x + step * d;
      fnew = objective(xnew, gnew);
      if (fnew <= f + 1e-4 * step * dg) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.line_search_failed = true;
      break;
    }

    Pair p;
    p.s = xnew - x;
    p.y = gnew - g;
    double sy = p.s.dot(p.y);
    if (sy > 1e-14 * p.s.norm() * p.y.norm()) {
      p.rho = 1.0 / sy;
      mem.push_back(std::move(p));
      if (static_cast<int>(mem.size()) > opt.memory) mem.pop_front();
    }

    double decrease = f - fnew;
    x.swap(xnew);
    g.swap(gnew);
    f = fnew;
    res.trace.push_back(f);
    res.iters = it + 1;
    if (decrease >= 0.0 && decrease <= opt.f_tol * std::max(1.0, std::abs(f))) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.f = f;
  return res;
}

} // namespace afree
