#include "afree/cone.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "afree/rng.hpp"

namespace afree {

namespace {

Eigen::JacobiSVD<Eigen::MatrixXd> svd_of(const Eigen::MatrixXd& m, unsigned options) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m, options);
}

int rank_from_singulars(const Eigen::VectorXd& s, double tol) {
  if (s.size() == 0) return 0;
  double smax = s[0];
  if (!(smax > 0.0)) return 0;
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > tol * smax) ++r;
  return r;
}

// Largest-magnitude entry made positive, for reproducible bases.
void fix_column_signs(Eigen::MatrixXd& m) {
  for (int c = 0; c < m.cols(); ++c) {
    int imax = 0;
    m.col(c).cwiseAbs().maxCoeff(&imax);
    if (m(imax, c) < 0.0) m.col(c) = -m.col(c);
  }
}

} // namespace

int numerical_rank(const Eigen::MatrixXd& m, double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("numerical_rank: tol in (0,1)");
  auto svd = svd_of(m, 0);
  return rank_from_singulars(svd.singularValues(), tol);
}

int numerical_rank(const Eigen::MatrixXcd& m, double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("numerical_rank: tol in (0,1)");
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
  return rank_from_singulars(svd.singularValues(), tol);
}

Eigen::MatrixXd null_space_basis(const Eigen::MatrixXd& m, double tol) {
  auto svd = svd_of(m, Eigen::ComputeFullV);
  int r = rank_from_singulars(svd.singularValues(), tol);
  Eigen::MatrixXd basis = svd.matrixV().rightCols(m.cols() - r);
  fix_column_signs(basis);
  return basis;
}

Eigen::MatrixXd range_basis(const Eigen::MatrixXd& m, double tol) {
  auto svd = svd_of(m, Eigen::ComputeFullU);
  int r = rank_from_singulars(svd.singularValues(), tol);
  Eigen::MatrixXd basis = svd.matrixU().leftCols(r);
  fix_column_signs(basis);
  return basis;
}

// -------------------------------------------------------------------------
// Sphere sampling

std::vector<Eigen::VectorXd> sphere_samples(int dim, int n) {
  std::vector<Eigen::VectorXd> pts;
  if (dim == 1) {
    pts.push_back(Eigen::VectorXd::Constant(1, 1.0));
    pts.push_back(Eigen::VectorXd::Constant(1, -1.0));
    return pts;
  }
  if (dim == 2) {
    for (int i = 0; i < n; ++i) {
      double th = std::numbers::pi * (2.0 * i + 1.0) / n;  // avoids exact axes; added below
      Eigen::VectorXd v(2);
      v << std::cos(th), std::sin(th);
      pts.push_back(v);
    }
  } else if (dim == 3) {
    // generalized spiral (golden-angle lattice)
    const double ga = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
      double z = 1.0 - (2.0 * i + 1.0) / n;
      double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      double th = ga * i;
      Eigen::VectorXd v(3);
      v << rho * std::cos(th), rho * std::sin(th), z;
      pts.push_back(v);
    }
  } else {
    throw std::invalid_argument("sphere_samples: dim must be 1..3");
  }
  // axes and diagonals, both signs
  for (int j = 0; j < dim; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
    e[j] = 1.0;
    pts.push_back(e);
    pts.push_back(-e);
  }
  int corners = 1 << dim;
  for (int mask = 0; mask < corners; ++mask) {
    Eigen::VectorXd v(dim);
    for (int j = 0; j < dim; ++j) v[j] = (mask >> j) & 1 ? 1.0 : -1.0;
    pts.push_back(v / v.norm());
  }
  return pts;
}

// -------------------------------------------------------------------------
// Constant-rank audit

ConeReport constant_rank_audit(const LinearOperator& op, int n_samples, double tol) {
  if (n_samples < 64 && op.dimension() > 1)
    throw std::invalid_argument("constant_rank_audit: need n_samples >= 64");
  ConeReport rep;
  rep.samples = sphere_samples(op.dimension(), n_samples);
  rep.ranks.reserve(rep.samples.size());
  rep.kernel_bases.reserve(rep.samples.size());

  Eigen::MatrixXd sym;
  std::vector<Eigen::MatrixXd> kernels;
  int total_kernel_cols = 0;
  for (const auto& xi : rep.samples) {
    op.reduced_symbol(xi, sym);
    auto svd = svd_of(sym, Eigen::ComputeFullV);
    int r = rank_from_singulars(svd.singularValues(), tol);
    rep.ranks.push_back(r);
    Eigen::MatrixXd kb = svd.matrixV().rightCols(op.fiber_in() - r);
    fix_column_signs(kb);
    total_kernel_cols += static_cast<int>(kb.cols());
    rep.kernel_bases.push_back(std::move(kb));
  }
  rep.rank_min = *std::min_element(rep.ranks.begin(), rep.ranks.end());
  rep.rank_max = *std::max_element(rep.ranks.begin(), rep.ranks.end());
  rep.constant_rank = rep.rank_min == rep.rank_max;
  rep.r = rep.constant_rank ? rep.rank_min : -1;

  // span of all sampled kernels
  if (total_kernel_cols == 0) {
    rep.span_basis = Eigen::MatrixXd::Zero(op.fiber_in(), 0);
  } else {
    Eigen::MatrixXd stacked(op.fiber_in(), total_kernel_cols);
    int c = 0;
    for (const auto& kb : rep.kernel_bases) {
      stacked.middleCols(c, kb.cols()) = kb;
      c += static_cast<int>(kb.cols());
    }
    auto svd = svd_of(stacked, Eigen::ComputeFullU);
    int r = rank_from_singulars(svd.singularValues(), tol);
    rep.span_basis = svd.matrixU().leftCols(r);
    fix_column_signs(rep.span_basis);
  }
  return rep;
}

namespace {
std::mutex g_audit_mutex;
std::map<const void*, std::shared_ptr<const ConeReport>> g_audit_cache;
} // namespace

const ConeReport& cached_audit(const LinearOperator& op) {
  const void* key = &op.terms();
  std::lock_guard<std::mutex> lock(g_audit_mutex);
  auto it = g_audit_cache.find(key);
  if (it == g_audit_cache.end()) {
    auto rep = std::make_shared<ConeReport>(constant_rank_audit(op));
    it = g_audit_cache.emplace(key, std::move(rep)).first;
  }
  return *it->second;
}

// -------------------------------------------------------------------------
// Cone membership via multi-start descent on the sphere

namespace {

struct SphereObjective {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;  // ambient gradient
};

Eigen::VectorXd tangent_part(const Eigen::VectorXd& xi, const Eigen::VectorXd& g) {
  return g - xi.dot(g) * xi;
}

// Projected gradient descent with backtracking. Nonconvex; callers multi-start.
std::pair<double, Eigen::VectorXd> descend(const SphereObjective& obj, Eigen::VectorXd xi,
                                           int max_iters = 200) {
  double f = obj.value(xi);
  double step = 1.0;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd gt = tangent_part(xi, obj.gradient(xi));
    double gn = gt.norm();
    if (gn < 1e-14) break;
    bool moved = false;
    for (int bt = 0; bt < 40; ++bt) {
      Eigen::VectorXd cand = xi - step * gt;
      double cn = cand.norm();
      if (cn < 1e-12) { step *= 0.5; continue; }
      cand /= cn;
      double fc = obj.value(cand);
      if (fc < f - 1e-4 * step * gn * gn) {
        xi = cand;
        f = fc;
        moved = true;
        step = std::min(step * 2.0, 1e3);
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return {f, xi};
}

MembershipResult minimize_over_sphere(const SphereObjective& obj, int dim, double tol,
                                      std::uint64_t seed, int restarts) {
  auto seeds = sphere_samples(dim, 128);
  // keep the best few grid seeds
  std::vector<std::pair<double, Eigen::VectorXd>> ranked;
  ranked.reserve(seeds.size());
  for (auto& s : seeds) ranked.emplace_back(obj.value(s), s);
  std::sort(ranked.begin(), ranked.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Eigen::VectorXd> starts;
  for (int i = 0; i < std::min<int>(8, ranked.size()); ++i) starts.push_back(ranked[i].second);
  Rng rng(seed);
  for (int i = 0; i < restarts; ++i) starts.push_back(rng.unit_vector(dim));

  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_xi = ranked.empty() ? Eigen::VectorXd() : ranked[0].second;
  for (const auto& s : starts) {
    auto [f, xi] = descend(obj, s);
    if (f < best) {
      best = f;
      best_xi = xi;
    }
  }
  MembershipResult res;
  res.value = best;
  res.witness = best_xi;
  res.member = best < tol;
  return res;
}

} // namespace

MembershipResult wave_cone_membership(const LinearOperator& op, const Eigen::VectorXd& w,
                                      double tol, std::uint64_t seed, int restarts) {
  double wn = w.norm();
  if (!(wn > 0.0)) throw std::invalid_argument("wave_cone_membership: |w| must be positive");
  double scale = op.symbol_scale_abs();
  SphereObjective obj;
  obj.value = [&op, &w, wn, scale](const Eigen::VectorXd& xi) {
    return scale * (op.reduced_symbol(xi) * w).norm() / wn;
  };
  obj.gradient = [&op, &w, wn, scale](const Eigen::VectorXd& xi) {
    Eigen::VectorXd mw = op.reduced_symbol(xi) * w;
    double n = mw.norm();
    Eigen::MatrixXd jac = op.symbol_jacobian(xi, w);
    if (n < 1e-30) return Eigen::VectorXd(Eigen::VectorXd::Zero(xi.size()));
    return Eigen::VectorXd(scale * (jac.transpose() * mw) / (n * wn));
  };
  return minimize_over_sphere(obj, op.dimension(), tol, seed, restarts);
}

MembershipResult image_cone_membership(const LinearOperator& op_b, const Eigen::VectorXd& w,
                                       double tol, std::uint64_t seed, int restarts) {
  if (w.size() != op_b.fiber_out())
    throw std::invalid_argument("image_cone_membership: w must live in the target fiber");
  double wn = w.norm();
  if (!(wn > 0.0)) {
    // zero is in every linear image
    MembershipResult res;
    res.member = true;
    res.value = 0.0;
    res.witness = Eigen::VectorXd::Unit(op_b.dimension(), 0);
    return res;
  }
  auto dist = [&op_b, &w, wn](const Eigen::VectorXd& xi) {
    Eigen::MatrixXd q = range_basis(op_b.reduced_symbol(xi));
    Eigen::VectorXd res = w - q * (q.transpose() * w);
    return res.norm() / wn;
  };
  SphereObjective obj;
  obj.value = dist;
  obj.gradient = [dist](const Eigen::VectorXd& xi) {
    // central differences; the projector is analytic on the sphere for
    // constant rank symbols
    const double h = 1e-6;
    Eigen::VectorXd g(xi.size());
    for (int j = 0; j < xi.size(); ++j) {
      Eigen::VectorXd xp = xi, xm = xi;
      xp[j] += h;
      xm[j] -= h;
      g[j] = (dist(xp / xp.norm()) - dist(xm / xm.norm())) / (2 * h);
    }
    return g;
  };
  return minimize_over_sphere(obj, op_b.dimension(), tol, seed, restarts);
}

// -------------------------------------------------------------------------
// Exactness of an annihilator/potential pair

ExactnessReport exactness_check(const LinearOperator& op_a, const LinearOperator& op_b,
                                int n_samples, double tol) {
  if (op_b.fiber_out() != op_a.fiber_in())
    throw std::invalid_argument("exactness_check: target fiber of B must match source fiber of A");
  if (op_b.dimension() != op_a.dimension())
    throw std::invalid_argument("exactness_check: spatial dimensions differ");
  ExactnessReport rep;
  rep.n_samples = n_samples;
  rep.tol = tol;
  rep.dims_match = true;
  rep.max_gap = 0.0;
  Eigen::MatrixXd sa, sb;
  for (const auto& xi : sphere_samples(op_a.dimension(), n_samples)) {
    op_a.reduced_symbol(xi, sa);
    op_b.reduced_symbol(xi, sb);
    Eigen::MatrixXd qk = null_space_basis(sa);
    Eigen::MatrixXd qb = range_basis(sb);
    if (qk.cols() != qb.cols()) {
      rep.dims_match = false;
      rep.worst_xi = xi;
      break;
    }
    // gap = spectral norm of the projector difference = sin(theta_max)
    Eigen::MatrixXd diff = qk * qk.transpose() - qb * qb.transpose();
    double gap = diff.jacobiSvd().singularValues()(0);
    if (gap > rep.max_gap) {
      rep.max_gap = gap;
      rep.worst_xi = xi;
    }
  }
  rep.pass = rep.dims_match && rep.max_gap < tol;
  return rep;
}

} // namespace afree
