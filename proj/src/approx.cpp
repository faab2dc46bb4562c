#include "afree/approx.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "afree/cone.hpp"
#include "afree/spectral.hpp"

namespace afree {

namespace {

double box_side(const BoxDomain& dom) {
  double L = dom.hi[0] - dom.lo[0];
  for (int j = 1; j < dom.dim(); ++j)
    if (std::abs((dom.hi[j] - dom.lo[j]) - L) > 1e-12 * L)
      throw std::invalid_argument("torus embedding needs a square box");
  for (int j = 0; j < dom.dim(); ++j)
    if (dom.cells_per_axis[j] != dom.cells_per_axis[0])
      throw std::invalid_argument("torus embedding needs an isotropic grid");
  return L;
}

double bump(double t2, int order) {
  if (t2 >= 1.0) return 0.0;
  double b = 1.0 - t2;
  double r = 1.0;
  for (int i = 0; i < order; ++i) r *= b;
  return r;
}

void check_margin(const DiscreteMeasure& mu, double eps) {
  const BoxDomain& dom = mu.domain();
  const double margin = 2.0 * eps;
  for (const auto& a : mu.atoms())
    if (!dom.strictly_inside(a.x, margin))
      throw std::invalid_argument("mollify: atom support too close to the box boundary "
                                  "(margin must be >= 2 eps)");
  for (std::size_t cell = 0; cell < dom.cell_count(); ++cell) {
    if (mu.density(cell).norm() == 0.0) continue;
    if (!dom.strictly_inside(dom.cell_center(cell), margin))
      throw std::invalid_argument("mollify: density support too close to the box boundary");
  }
}

} // namespace

TorusField mollify(const DiscreteMeasure& mu, const Mollifier& moll, int grid_n) {
  if (!(moll.epsilon > 0.0)) throw std::invalid_argument("mollify: eps must be positive");
  const BoxDomain& dom = mu.domain();
  const double L = box_side(dom);
  check_margin(mu, moll.epsilon);
  const int d = dom.dim();
  const int n = grid_n;
  const double h = L / n;
  const double hvol = std::pow(h, d);
  TorusField out(d, n, mu.fiber());

  // a.c. part: periodic convolution with the discretely normalized kernel
  bool have_density = false;
  for (double v : mu.density_raw())
    if (v != 0.0) {
      have_density = true;
      break;
    }
  if (have_density) {
    TorusField dens(d, n, mu.fiber());
    for (std::size_t cell = 0; cell < dens.cells(); ++cell) {
      Eigen::VectorXd y = dens.position(cell);
      Eigen::VectorXd x(d);
      for (int j = 0; j < d; ++j) x[j] = dom.lo[j] + y[j] * L;
      Eigen::VectorXd v = mu.density(dom.locate(x));
      for (int c = 0; c < mu.fiber(); ++c) dens.at(c, cell) = v[c];
    }
    TorusField ker(d, n, 1);
    std::array<int, 3> idx{};
    double ksum = 0.0;
    for (std::size_t cell = 0; cell < ker.cells(); ++cell) {
      ker.cell_coords(cell, idx);
      double r2 = 0.0;
      for (int j = 0; j < d; ++j) {
        int i = idx[j] <= n / 2 ? idx[j] : idx[j] - n;
        double z = i * h;
        r2 += z * z;
      }
      double v = bump(r2 / (moll.epsilon * moll.epsilon), moll.order);
      ker.at(0, cell) = v;
      ksum += v * hvol;
    }
    ker *= 1.0 / ksum;  // discrete unit mass
    Spectrum ks = fft_forward(ker);
    Spectrum ds = fft_forward(dens);
    const double factor = static_cast<double>(ker.cells()) * hvol;
    for (int c = 0; c < mu.fiber(); ++c)
      for (std::size_t b = 0; b < ks.bins(); ++b)
        ds.component(c)[b] *= ks.component(0)[b] * factor;
    out = fft_inverse(ds);
  }

  // atoms become bumps of exactly their mass
  const int rad = static_cast<int>(std::ceil(moll.epsilon / h)) + 1;
  for (const auto& a : mu.atoms()) {
    std::array<int, 3> base{};
    Eigen::VectorXd ya(d);
    for (int j = 0; j < d; ++j) {
      ya[j] = (a.x[j] - dom.lo[j]) / L;
      base[j] = static_cast<int>(std::floor(ya[j] * n));
    }
    std::vector<std::size_t> cells;
    std::vector<double> vals;
    double sum = 0.0;
    std::array<int, 3> off{};
    int o1 = d >= 2 ? rad : 0, o2 = d >= 3 ? rad : 0;
    for (off[0] = -rad; off[0] <= rad; ++off[0])
      for (off[1] = -o1; off[1] <= o1; ++off[1])
        for (off[2] = -o2; off[2] <= o2; ++off[2]) {
          std::array<int, 3> idx{};
          double r2 = 0.0;
          for (int j = 0; j < d; ++j) {
            idx[j] = base[j] + off[j];
            double z = idx[j] * h - (a.x[j] - dom.lo[j]);
            r2 += z * z;
          }
          double v = bump(r2 / (moll.epsilon * moll.epsilon), moll.order);
          if (v <= 0.0) continue;
          cells.push_back(out.cell_index(idx));
          vals.push_back(v);
          sum += v * hvol;
        }
    if (sum <= 0.0) throw std::runtime_error("mollify: atom kernel missed the grid");
    double amp = a.mass / sum;
    for (std::size_t q = 0; q < cells.size(); ++q)
      for (int c = 0; c < mu.fiber(); ++c)
        out.at(c, cells[q]) += amp * vals[q] * a.direction[c];
  }
  return out;
}

TorusField afree_correct(const LinearOperator& op, const TorusField& u,
                         const Eigen::VectorXd* reference_mean) {
  TorusField w = u;
  w -= a_representative(op, u);
  if (op.needs_nyquist_mask()) {
    // drop content outside the representable class so the field is A-free
    // under the same masking convention used by apply_operator
    Spectrum s = fft_forward(w);
    for (std::size_t b = 0; b < s.bins(); ++b)
      if (s.has_nyquist(b))
        for (int c = 0; c < s.fiber(); ++c) s.component(c)[b] = 0.0;
    w = fft_inverse(s);
  }
  if (reference_mean) {
    Eigen::VectorXd m = w.mean();
    for (int c = 0; c < w.fiber(); ++c) {
      double shift = (*reference_mean)[c] - m[c];
      double* p = w.component(c);
      for (std::size_t i = 0; i < w.cells(); ++i) p[i] += shift;
    }
  }
  return w;
}

namespace {

std::vector<std::function<double(const Eigen::VectorXd&)>> weak_star_tests(
    const BoxDomain& dom) {
  const double L = dom.hi[0] - dom.lo[0];
  const double two_pi = 2.0 * std::numbers::pi;
  auto x0 = dom.lo;
  std::vector<std::function<double(const Eigen::VectorXd&)>> tests;
  tests.push_back([=](const Eigen::VectorXd& x) {
    return std::sin(two_pi * (x[0] - x0[0]) / L + 0.3);
  });
  tests.push_back([=](const Eigen::VectorXd& x) {
    return std::cos(two_pi * (x[x.size() > 1 ? 1 : 0] - x0[x.size() > 1 ? 1 : 0]) / L + 0.7);
  });
  tests.push_back([=](const Eigen::VectorXd& x) {
    double s = 0.0;
    for (int j = 0; j < x.size(); ++j) s += x[j] - x0[j];
    return std::sin(two_pi * s / L + 0.1);
  });
  tests.push_back([=](const Eigen::VectorXd& x) {
    return std::cos(2.0 * two_pi * (x[0] - x0[0]) / L + 0.2);
  });
  tests.push_back([=](const Eigen::VectorXd& x) {
    double v = std::sin(two_pi * (x[0] - x0[0]) / L + 0.4);
    if (x.size() > 1) v *= std::cos(two_pi * (x[1] - x0[1]) / L - 0.5);
    return v;
  });
  return tests;
}

std::vector<Eigen::VectorXd> exact_pairings(
    const DiscreteMeasure& mu,
    const std::vector<std::function<double(const Eigen::VectorXd&)>>& tests) {
  std::vector<Eigen::VectorXd> out;
  const double vol = mu.domain().cell_volume();
  for (const auto& phi : tests) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(mu.fiber());
    for (std::size_t cell = 0; cell < mu.domain().cell_count(); ++cell) {
      double p = phi(mu.domain().cell_center(cell));
      acc += p * vol * mu.density(cell);
    }
    for (const auto& a : mu.atoms()) acc += a.mass * phi(a.x) * a.direction;
    out.push_back(std::move(acc));
  }
  return out;
}

StageDiagnostics stage_diagnostics(
    const LinearOperator& op, const DiscreteMeasure& mu, const TorusField& u,
    const TorusField& w, double eps,
    const std::vector<std::function<double(const Eigen::VectorXd&)>>& tests,
    const std::vector<Eigen::VectorXd>& exact) {
  const BoxDomain& dom = mu.domain();
  const double L = dom.hi[0] - dom.lo[0];
  const int d = dom.dim();
  const double hvol = std::pow(L / w.grid_n(), d);
  StageDiagnostics diag;
  diag.epsilon = eps;
  double area = 0.0, mass = 0.0;
  for (std::size_t cell = 0; cell < w.cells(); ++cell) {
    double s = 0.0;
    for (int c = 0; c < w.fiber(); ++c) {
      double v = w.at(c, cell);
      s += v * v;
    }
    area += std::sqrt(1.0 + s);
    mass += std::sqrt(s);
  }
  diag.area = area * hvol;
  diag.mass = mass * hvol;
  TorusField aw = apply_operator(op, w);
  diag.residual_rel = sobolev_norm(aw, {-static_cast<double>(op.order())}) /
                      std::max(sobolev_norm(w, {0.0}), 1e-30);
  TorusField tu = a_representative(op, u);
  diag.t_norm_ratio = sobolev_norm(tu, {0.0}) / std::max(sobolev_norm(u, {0.0}), 1e-30);
  for (std::size_t t = 0; t < tests.size(); ++t) {
    double worst = 0.0;
    for (int c = 0; c < w.fiber(); ++c) {
      double acc = 0.0;
      for (std::size_t cell = 0; cell < w.cells(); ++cell) {
        Eigen::VectorXd y = w.position(cell);
        Eigen::VectorXd x(d);
        for (int j = 0; j < d; ++j) x[j] = dom.lo[j] + y[j] * L;
        acc += tests[t](x) * w.at(c, cell);
      }
      acc *= hvol;
      worst = std::max(worst, std::abs(acc - exact[t][c]));
    }
    diag.weak_star_errors.push_back(worst);
  }
  return diag;
}

} // namespace

ApproximationRun area_strict_run(const LinearOperator& op, const DiscreteMeasure& mu,
                                 const std::vector<double>& eps_schedule, int grid_n) {
  if (mu.fiber() != op.fiber_in())
    throw std::invalid_argument("area_strict_run: measure fiber != operator fiber");
  ApproximationRun run;
  run.box_side = box_side(mu.domain());
  run.target_area = area_functional(mu);
  run.target_tv = mu.total_variation();
  auto tests = weak_star_tests(mu.domain());
  auto exact = exact_pairings(mu, tests);
  const double L = run.box_side;
  Eigen::VectorXd mean_target = mu.integral() / std::pow(L, mu.domain().dim());

  for (double eps : eps_schedule) {
    TorusField u = mollify(mu, {eps, 4}, grid_n);
    TorusField w = afree_correct(op, u, &mean_target);
    run.stages.push_back(stage_diagnostics(op, mu, u, w, eps, tests, exact));
    run.fields.push_back(std::move(w));
  }
  return run;
}

ApproximationRun bgradient_run(const LinearOperator& op_b, const LinearOperator& op_a,
                               const DiscreteMeasure& z_mu,
                               const std::vector<double>& eps_schedule, int grid_n,
                               const TorusField* u_target) {
  ExactnessReport ex = exactness_check(op_a, op_b, 128);
  if (!ex.pass)
    throw std::invalid_argument("bgradient_run: (annihilator, potential) pair failed the "
                                "exactness check");
  if (std::abs(box_side(z_mu.domain()) - 1.0) > 1e-12)
    throw std::invalid_argument("bgradient_run: potential lifting works on the unit box");
  ApproximationRun run = area_strict_run(op_a, z_mu, eps_schedule, grid_n);

  for (const TorusField& w : run.fields) {
    // remove the constant component; potentials only see the oscillatory part
    TorusField w0 = w;
    Eigen::VectorXd m = w0.mean();
    for (int c = 0; c < w0.fiber(); ++c) {
      double* p = w0.component(c);
      for (std::size_t i = 0; i < w0.cells(); ++i) p[i] -= m[c];
    }
    PotentialResult pr = potential_solve(op_b, w0, 1e-5);
    if (u_target) {
      TorusField gap = pr.potential;
      TorusField tgt = *u_target;
      Eigen::VectorXd tm = tgt.mean();
      for (int c = 0; c < tgt.fiber(); ++c) {
        double* p = tgt.component(c);
        for (std::size_t i = 0; i < tgt.cells(); ++i) p[i] -= tm[c];
      }
      gap -= tgt;
      run.potential_errors.push_back(sobolev_norm(gap, {0.0}));
    }
    run.potentials.push_back(std::move(pr.potential));
  }
  return run;
}

} // namespace afree
