#include "afree/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "afree/cone.hpp"
#include "afree/lbfgs.hpp"
#include "afree/parallel.hpp"
#include "afree/rng.hpp"
#include "afree/spectral.hpp"

namespace afree {

double cell_energy(const Integrand& f, const Eigen::VectorXd& z, const TorusField& w) {
  if (z.size() != w.fiber()) throw std::invalid_argument("cell_energy: fiber mismatch");
  std::vector<const double*> comps(w.fiber());
  for (int c = 0; c < w.fiber(); ++c) comps[c] = w.component(c);
  return f.grid_sum(comps.data(), w.fiber(), w.cells(), z.data(), nullptr) /
         static_cast<double>(w.cells());
}

// -------------------------------------------------------------------------
// CellProblem

CellProblem::CellProblem(const LinearOperator& op, IntegrandPtr f, Eigen::VectorXd z,
                         int grid_n, int cutoff)
    : op_(op), f_(std::move(f)), z_(std::move(z)), grid_n_(grid_n), cutoff_(cutoff) {
  if (!f_->differentiable())
    throw std::invalid_argument("CellProblem: integrand is not differentiable; smooth it first");
  if (z_.size() != op_.fiber_in())
    throw std::invalid_argument("CellProblem: base point dimension != operator fiber");
  if (cutoff_ < 1 || cutoff_ >= grid_n_ / 2)
    throw std::invalid_argument("CellProblem: cutoff must satisfy 1 <= K < N/2");
  const ConeReport& audit = cached_audit(op_);
  if (!audit.constant_rank)
    throw std::invalid_argument("CellProblem: operator failed the constant rank audit");

  const int d = op_.dimension();
  const int n = grid_n_;
  std::array<int, 3> lo{}, hi{};
  for (int j = 0; j < d; ++j) {
    lo[j] = -cutoff_;
    hi[j] = cutoff_;
  }
  int offset = 0;
  std::array<int, 3> xi{};
  for (xi[0] = lo[0]; xi[0] <= hi[0]; ++xi[0])
    for (xi[1] = lo[1]; xi[1] <= hi[1]; ++xi[1])
      for (xi[2] = lo[2]; xi[2] <= hi[2]; ++xi[2]) {
        bool zero = true, canonical = false;
        for (int j = 0; j < d; ++j) {
          if (xi[j] != 0) {
            zero = false;
            canonical = xi[j] > 0;  // first nonzero coordinate positive
            break;
          }
        }
        if (zero || !canonical) continue;
        Eigen::VectorXd xiv(d);
        for (int j = 0; j < d; ++j) xiv[j] = xi[j];
        Eigen::MatrixXd basis = null_space_basis(op_.reduced_symbol(xiv));
        if (basis.cols() == 0) continue;  // elliptic direction: no A-free modes
        Mode m;
        m.xi = xi;
        // r2c stores the half-lattice with last-axis frequency >= 0
        std::array<int, 3> rep = xi;
        m.conjugated = rep[d - 1] < 0;
        if (m.conjugated)
          for (int j = 0; j < d; ++j) rep[j] = -rep[j];
        auto bin_of = [n, d](const std::array<int, 3>& fr) {
          std::size_t bin = 0;
          for (int j = 0; j < d - 1; ++j) {
            int idx = fr[j] >= 0 ? fr[j] : fr[j] + n;
            bin = bin * n + static_cast<std::size_t>(idx);
          }
          return bin * (n / 2 + 1) + static_cast<std::size_t>(fr[d - 1]);
        };
        m.bin = bin_of(rep);
        // the last=0 plane stores the conjugate partner explicitly; it must
        // be written too or the inverse transform halves the mode
        m.has_mirror = d >= 2 && rep[d - 1] == 0;
        if (m.has_mirror) {
          std::array<int, 3> mirror = rep;
          for (int j = 0; j < d - 1; ++j) mirror[j] = -mirror[j];
          m.mirror_bin = bin_of(mirror);
        } else {
          m.mirror_bin = m.bin;
        }
        m.basis = std::move(basis);
        m.offset = offset;
        offset += 2 * static_cast<int>(m.basis.cols());
        modes_.push_back(std::move(m));
      }
  n_coords_ = offset;
}

TorusField CellProblem::field(const Eigen::VectorXd& x) const {
  if (x.size() != n_coords_) throw std::invalid_argument("CellProblem: coordinate size");
  Spectrum s(op_.dimension(), grid_n_, op_.fiber_in());
  for (const Mode& m : modes_) {
    const int mm = static_cast<int>(m.basis.cols());
    Eigen::VectorXd p = x.segment(m.offset, mm);
    Eigen::VectorXd q = x.segment(m.offset + mm, mm);
    // w contribution: B p cos(2 pi xi.y) + B q sin(2 pi xi.y),
    // i.e. w_hat(xi) = B (p - i q)/2
    Eigen::VectorXd re = 0.5 * (m.basis * p);
    Eigen::VectorXd im = -0.5 * (m.basis * q);
    if (m.conjugated) im = -im;  // stored bin holds w_hat(-xi) = conj
    for (int c = 0; c < s.fiber(); ++c) {
      s.component(c)[m.bin] = std::complex<double>(re[c], im[c]);
      if (m.has_mirror) s.component(c)[m.mirror_bin] = std::complex<double>(re[c], -im[c]);
    }
  }
  return fft_inverse(s);
}

double CellProblem::energy(const Eigen::VectorXd& x) const {
  TorusField w = field(x);
  std::vector<const double*> comps(w.fiber());
  for (int c = 0; c < w.fiber(); ++c) comps[c] = w.component(c);
  return f_->grid_sum(comps.data(), w.fiber(), w.cells(), z_.data(), nullptr) /
         static_cast<double>(w.cells());
}

double CellProblem::energy_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  TorusField w = field(x);
  TorusField gfield(w.dim(), w.grid_n(), w.fiber());
  std::vector<const double*> comps(w.fiber());
  std::vector<double*> gcomps(w.fiber());
  for (int c = 0; c < w.fiber(); ++c) {
    comps[c] = w.component(c);
    gcomps[c] = gfield.component(c);
  }
  const double nc = static_cast<double>(w.cells());
  double e = f_->grid_sum(comps.data(), w.fiber(), w.cells(), z_.data(), gcomps.data()) / nc;

  Spectrum gs = fft_forward(gfield);  // trig coefficients of grad f(z+w)
  grad.setZero(n_coords_);
  for (const Mode& m : modes_) {
    const int mm = static_cast<int>(m.basis.cols());
    Eigen::VectorXd re(gs.fiber()), im(gs.fiber());
    for (int c = 0; c < gs.fiber(); ++c) {
      std::complex<double> v = gs.component(c)[m.bin];
      re[c] = v.real();
      im[c] = m.conjugated ? -v.imag() : v.imag();
    }
    grad.segment(m.offset, mm) = m.basis.transpose() * re;
    grad.segment(m.offset + mm, mm) = -(m.basis.transpose() * im);
  }
  return e;
}

Eigen::VectorXd CellProblem::embed_from(const CellProblem& coarse,
                                        const Eigen::VectorXd& x) const {
  std::map<std::array<int, 3>, const Mode*> mine;
  for (const Mode& m : modes_) mine[m.xi] = &m;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_coords_);
  for (const Mode& cm : coarse.modes_) {
    auto it = mine.find(cm.xi);
    if (it == mine.end()) continue;
    const int mm = static_cast<int>(cm.basis.cols());
    out.segment(it->second->offset, 2 * mm) = x.segment(cm.offset, 2 * mm);
  }
  return out;
}

// -------------------------------------------------------------------------
// Envelope

namespace {

struct StageBest {
  double value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x;
  std::vector<double> trace;
  bool line_search_failed = false;
  int iters = 0;
};

StageBest optimize_stage(const CellProblem& prob, const std::vector<Eigen::VectorXd>& starts,
                         const EnvelopeConfig& cfg) {
  StageBest best;
  std::vector<LbfgsResult> results(starts.size());
  LbfgsOptions opt;
  opt.max_iters = cfg.max_iters;
  opt.grad_tol = cfg.grad_tol;
  parallel_for(starts.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      results[i] = lbfgs_minimize(
          [&prob](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
            return prob.energy_grad(x, g);
          },
          starts[i], opt);
    }
  });
  for (auto& r : results) {
    if (r.f < best.value) {
      best.value = r.f;
      best.x = std::move(r.x);
      best.trace = std::move(r.trace);
      best.line_search_failed = r.line_search_failed;
      best.iters = r.iters;
    }
  }
  return best;
}

} // namespace

EnvelopeResult quasiconvex_envelope(const LinearOperator& op, IntegrandPtr f,
                                    const Eigen::VectorXd& z, const EnvelopeConfig& config) {
  if (config.k_schedule.empty())
    throw std::invalid_argument("quasiconvex_envelope: empty cutoff schedule");
  std::vector<int> ks = config.k_schedule;
  std::sort(ks.begin(), ks.end());

  const bool needs_smoothing = !f->differentiable();
  std::vector<double> smoothing = needs_smoothing ? config.smoothing_schedule
                                                  : std::vector<double>{0.0};
  if (needs_smoothing && smoothing.empty())
    throw std::invalid_argument("quasiconvex_envelope: nonsmooth integrand with empty "
                                "smoothing schedule");

  EnvelopeResult res;
  res.z = z;
  res.truncation = ks.back();

  Rng rng(config.seed);
  Eigen::VectorXd warm_prev_smoothing;  // best coords at final K of previous stage
  StageBest final_best;
  IntegrandPtr f_final;

  for (std::size_t si = 0; si < smoothing.size(); ++si) {
    IntegrandPtr fs = needs_smoothing ? f->smoothed(smoothing[si]) : f;
    Eigen::VectorXd warm_k;  // carried across cutoffs
    bool have_warm_k = false;
    CellProblem prev_prob(op, fs, z, config.grid_n, ks.front());
    std::vector<double> k_values;
    StageBest stage_best;

    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      CellProblem prob(op, fs, z, config.grid_n, ks[ki]);
      std::vector<Eigen::VectorXd> starts;
      if (have_warm_k) starts.push_back(prob.embed_from(prev_prob, warm_k));
      if (si > 0 && ki + 1 == ks.size() &&
          warm_prev_smoothing.size() == static_cast<Eigen::Index>(prob.coords()))
        starts.push_back(warm_prev_smoothing);
      starts.push_back(Eigen::VectorXd::Zero(prob.coords()));
      while (static_cast<int>(starts.size()) < std::max(1, config.restarts))
        starts.push_back(config.restart_amplitude *
                         rng.normal_vector(prob.coords()));
      res.restarts_used += static_cast<int>(starts.size());

      StageBest best = optimize_stage(prob, starts, config);
      k_values.push_back(best.value);
      warm_k = best.x;
      have_warm_k = true;
      prev_prob = std::move(prob);
      stage_best = std::move(best);
    }

    res.smoothing_values.push_back(stage_best.value);
    warm_prev_smoothing = stage_best.x;
    if (si + 1 == smoothing.size()) {
      res.k_values = k_values;
      final_best = std::move(stage_best);
      f_final = fs;
    }
  }

  // value: extrapolate the smoothing schedule (decade steps) when smoothing
  // was applied, clamped by the last computed stage
  double value = res.smoothing_values.back();
  if (needs_smoothing && res.smoothing_values.size() >= 2) {
    double v1 = res.smoothing_values[res.smoothing_values.size() - 2];
    double v2 = res.smoothing_values.back();
    double e1 = smoothing[res.smoothing_values.size() - 2];
    double e2 = smoothing.back();
    double extrap = v2 + (v2 - v1) * e2 / (e1 - e2);
    value = std::min(v2, extrap);
  }
  res.value = value;

  CellProblem final_prob(op, f_final, z, config.grid_n, ks.back());
  res.field = final_prob.field(final_best.x);
  res.history = std::move(final_best.trace);
  res.zero_field_energy = f_final->value(z);
  res.diverged = final_best.line_search_failed && final_best.iters == 0 &&
                 res.value > res.zero_field_energy + 1e-12;

  TorusField aw = apply_operator(op, res.field);
  double wn = sobolev_norm(res.field, {0.0});
  res.afree_residual =
      sobolev_norm(aw, {-static_cast<double>(op.order())}) / std::max(wn, 1e-30);
  return res;
}

// -------------------------------------------------------------------------
// Wave-cone convexity and coercivity monitors

ConvexityReport lambda_convexity_check(const LinearOperator& op,
                                       const std::function<double(const Eigen::VectorXd&)>& h,
                                       int n_lines, double tol, std::uint64_t seed) {
  const ConeReport& audit = cached_audit(op);
  std::vector<Eigen::VectorXd> pool;
  for (const auto& kb : audit.kernel_bases)
    for (int c = 0; c < kb.cols(); ++c) pool.push_back(kb.col(c));
  ConvexityReport rep;
  if (pool.empty()) return rep;  // Lambda_A = {0}: nothing to check
  Rng rng(seed);
  for (int i = 0; i < n_lines; ++i) {
    const Eigen::VectorXd& dir = pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
    Eigen::VectorXd z = rng.normal_vector(op.fiber_in(), 1.5);
    double t = rng.uniform(0.5, 3.0);
    double lhs = h(z + 0.5 * t * dir);
    double rhs = 0.5 * (h(z) + h(z + t * dir));
    double viol = lhs - rhs;
    ++rep.checked;
    if (viol > tol) {
      ++rep.violations;
      if (viol > rep.worst) {
        rep.worst = viol;
        rep.worst_z = z;
        rep.worst_dir = dir;
        rep.worst_t = t;
      }
    }
  }
  return rep;
}

ConvexityReport lambda_convexity_check(const LinearOperator& op, const Integrand& h,
                                       int n_lines, double tol, std::uint64_t seed) {
  return lambda_convexity_check(
      op, [&h](const Eigen::VectorXd& z) { return h.value(z); }, n_lines, tol, seed);
}

CoercivityReport coercivity_bound_check(const LinearOperator& op, const Integrand& f,
                                        double eps, const Eigen::VectorXd& z,
                                        const TorusField& w, double delta, double growth_c) {
  if (!(eps > 0.0)) throw std::invalid_argument("coercivity_bound_check: eps > 0 required");
  CoercivityReport rep;
  double c = growth_c;
  if (c <= 0.0) {
    c = f.linear_growth() ? std::max(1.0, f.growth_constant()) : 1.0;
    if (!f.linear_growth()) {
      // sampled growth estimate on a ball; superlinear kinds get a finite
      // surrogate for monitoring purposes only
      Rng rng(3);
      for (int i = 0; i < 128; ++i) {
        Eigen::VectorXd s = rng.normal_vector(op.fiber_in(), 3.0);
        c = std::max(c, std::abs(f.value(s)) / (1.0 + s.norm()));
      }
    }
    c = 2.0 * c + 1.0;
  }
  // |z + w|_{L1(Q)} by grid quadrature
  double l1 = 0.0;
  for (std::size_t cell = 0; cell < w.cells(); ++cell) {
    double s = 0.0;
    for (int comp = 0; comp < w.fiber(); ++comp) {
      double v = z[comp] + w.at(comp, cell);
      s += v * v;
    }
    l1 += std::sqrt(s);
  }
  l1 /= static_cast<double>(w.cells());
  rep.lhs = l1;
  rep.c_used = c;
  rep.bound = c / eps * (1.0 + z.norm() + delta);
  rep.c_required = eps * l1 / (1.0 + z.norm() + delta);
  rep.holds = rep.lhs <= rep.bound;
  return rep;
}

} // namespace afree
