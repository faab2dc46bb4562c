#include "afree/spectral.hpp"

#include <cmath>
#include <stdexcept>

#include "afree/cone.hpp"
#include "afree/kernels.hpp"

namespace afree {

namespace {

Eigen::VectorXd frequency_vector(const Spectrum& s, std::size_t bin) {
  std::array<int, 3> xi{};
  s.frequency(bin, xi);
  Eigen::VectorXd v(s.dim());
  for (int j = 0; j < s.dim(); ++j) v[j] = static_cast<double>(xi[j]);
  return v;
}

bool is_zero_frequency(const Eigen::VectorXd& xi) {
  for (int j = 0; j < xi.size(); ++j)
    if (xi[j] != 0.0) return false;
  return true;
}

Eigen::VectorXcd gather_bin(const Spectrum& s, std::size_t bin) {
  Eigen::VectorXcd v(s.fiber());
  for (int c = 0; c < s.fiber(); ++c) v[c] = s.component(c)[bin];
  return v;
}

void scatter_bin(Spectrum& s, std::size_t bin, const Eigen::VectorXcd& v) {
  for (int c = 0; c < s.fiber(); ++c) s.component(c)[bin] = v[c];
}

// Moore-Penrose inverse with the toolkit's relative rank threshold.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  double smax = sv.size() ? sv[0] : 0.0;
  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(m.cols(), m.rows());
  if (!(smax > 0.0)) return inv;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv[i] > kRankTol * smax)
      inv.noalias() += (1.0 / sv[i]) * svd.matrixV().col(i) * svd.matrixU().col(i).transpose();
  }
  return inv;
}

void require_constant_rank(const LinearOperator& op, const char* who) {
  const ConeReport& audit = cached_audit(op);
  if (!audit.constant_rank)
    throw std::invalid_argument(std::string(who) +
                                ": operator '" + op.name() + "' failed the constant rank audit");
}

} // namespace

TorusField apply_operator(const LinearOperator& op, const TorusField& u) {
  if (u.fiber() != op.fiber_in())
    throw std::invalid_argument("apply_operator: field fiber != operator source fiber");
  if (u.dim() != op.dimension())
    throw std::invalid_argument("apply_operator: field dimension != operator dimension");
  Spectrum s = fft_forward(u);
  Spectrum out(u.dim(), u.grid_n(), op.fiber_out());
  const std::complex<double> scale = op.symbol_scale();
  const bool mask = op.needs_nyquist_mask();
  Eigen::MatrixXd sym;
  for (std::size_t b = 0; b < s.bins(); ++b) {
    Eigen::VectorXd xi = frequency_vector(s, b);
    if (is_zero_frequency(xi) || (mask && s.has_nyquist(b))) continue;  // stays zero
    op.reduced_symbol(xi, sym);
    Eigen::VectorXcd v = scale * (sym * gather_bin(s, b));
    scatter_bin(out, b, v);
  }
  return fft_inverse(out);
}

RepresentativeResult a_representative_detailed(const LinearOperator& op, const TorusField& u) {
  if (u.fiber() != op.fiber_in())
    throw std::invalid_argument("a_representative: field fiber != operator source fiber");
  require_constant_rank(op, "a_representative");

  Spectrum s = fft_forward(u);
  Spectrum proj(u.dim(), u.grid_n(), u.fiber());
  const bool mask = op.needs_nyquist_mask();
  Eigen::MatrixXd sym;
  double gap = 0.0;
  for (std::size_t b = 0; b < s.bins(); ++b) {
    Eigen::VectorXd xi = frequency_vector(s, b);
    if (is_zero_frequency(xi) || (mask && s.has_nyquist(b))) continue;
    op.reduced_symbol(xi, sym);
    Eigen::MatrixXd pinv = pseudo_inverse(sym);
    Eigen::VectorXcd uhat = gather_bin(s, b);
    // projector route: pi(xi) = M^dagger M projects onto (ker M)^perp
    Eigen::MatrixXd pi = pinv * sym;
    Eigen::VectorXcd via_proj = pi * uhat;
    // pseudoinverse route through the applied operator: A^dagger (A u)^
    Eigen::VectorXcd applied = op.symbol_scale() * (sym * uhat);
    Eigen::VectorXcd via_pinv = (1.0 / op.symbol_scale()) * (pinv * applied);
    gap = std::max(gap, (via_proj - via_pinv).cwiseAbs().maxCoeff());
    scatter_bin(proj, b, via_proj);
  }
  if (gap > 1e-10)
    throw std::runtime_error("a_representative: projector and pseudoinverse formulas disagree");
  RepresentativeResult res;
  res.field = fft_inverse(proj);
  res.formula_gap = gap;
  return res;
}

TorusField a_representative(const LinearOperator& op, const TorusField& u) {
  return a_representative_detailed(op, u).field;
}

TorusField afree_part(const LinearOperator& op, const TorusField& u) {
  RepresentativeResult rep = a_representative_detailed(op, u);
  TorusField z = u;
  z -= rep.field;
  Eigen::VectorXd m = u.mean();
  for (int c = 0; c < z.fiber(); ++c) {
    double* p = z.component(c);
    for (std::size_t i = 0; i < z.cells(); ++i) p[i] -= m[c];
  }
  return z;
}

PotentialResult potential_solve(const LinearOperator& op_b, const TorusField& z,
                                double range_tol) {
  if (z.fiber() != op_b.fiber_out())
    throw std::invalid_argument("potential_solve: field fiber != operator target fiber");
  require_constant_rank(op_b, "potential_solve");

  Spectrum s = fft_forward(z);
  Spectrum pot(z.dim(), z.grid_n(), op_b.fiber_in());
  const bool mask = op_b.needs_nyquist_mask();
  const std::complex<double> inv_scale = 1.0 / op_b.symbol_scale();

  double cmax = 0.0;
  for (int c = 0; c < z.fiber(); ++c)
    for (std::size_t b = 0; b < s.bins(); ++b)
      cmax = std::max(cmax, std::abs(s.component(c)[b]));
  const double denom = std::max(cmax, 1e-300);

  Eigen::MatrixXd sym;
  double max_resid = 0.0;
  for (std::size_t b = 0; b < s.bins(); ++b) {
    Eigen::VectorXd xi = frequency_vector(s, b);
    Eigen::VectorXcd zhat = gather_bin(s, b);
    if (is_zero_frequency(xi) || (mask && s.has_nyquist(b))) {
      // unrepresentable content counts as range residual (mean must vanish)
      max_resid = std::max(max_resid, zhat.norm() / denom);
      continue;
    }
    op_b.reduced_symbol(xi, sym);
    Eigen::MatrixXd pinv = pseudo_inverse(sym);
    Eigen::VectorXcd uhat = inv_scale * (pinv * zhat);
    // range residual: distance of z_hat to im B(xi)
    Eigen::VectorXcd recon = sym * (pinv * zhat);
    max_resid = std::max(max_resid, (zhat - recon).norm() / denom);
    scatter_bin(pot, b, uhat);
  }
  if (max_resid > range_tol)
    throw std::runtime_error("potential_solve: field is not in the range of the operator "
                             "(max per-frequency residual " + std::to_string(max_resid) + ")");
  PotentialResult res;
  res.potential = fft_inverse(pot);
  res.max_range_residual = max_resid;
  return res;
}

double sobolev_norm(const Spectrum& s, SobolevNormSpec spec) {
  const std::size_t nb = s.bins();
  std::vector<double> wgt(nb), re(nb), im(nb);
  std::array<int, 3> xi{};
  for (std::size_t b = 0; b < nb; ++b) {
    s.frequency(b, xi);
    double norm2 = 0.0;
    for (int j = 0; j < s.dim(); ++j) norm2 += static_cast<double>(xi[j]) * xi[j];
    wgt[b] = s.multiplicity(b) * std::pow(1.0 + norm2, spec.s);
  }
  const auto& kt = kern::active();
  double acc = 0.0;
  for (int c = 0; c < s.fiber(); ++c) {
    const std::complex<double>* p = s.component(c);
    for (std::size_t b = 0; b < nb; ++b) {
      re[b] = p[b].real();
      im[b] = p[b].imag();
    }
    acc += kt.weighted_sumsq(wgt.data(), re.data(), im.data(), nb);
  }
  return std::sqrt(acc);
}

double sobolev_norm(const TorusField& u, SobolevNormSpec spec) {
  return sobolev_norm(fft_forward(u), spec);
}

PoincareReport poincare_check(const LinearOperator& op, std::span<const TorusField> batch) {
  require_constant_rank(op, "poincare_check");
  PoincareReport rep;
  double sum = 0.0;
  for (const TorusField& u : batch) {
    TorusField au = apply_operator(op, u);
    double denom = sobolev_norm(au, {-static_cast<double>(op.order())});
    if (denom < 1e-13) {
      ++rep.skipped;  // A-free input: 0/0 ratio carries no information
      continue;
    }
    TorusField tu = a_representative(op, u);
    double ratio = sobolev_norm(tu, {0.0}) / denom;
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    sum += ratio;
    ++rep.used;
  }
  rep.mean_ratio = rep.used ? sum / rep.used : 0.0;
  return rep;
}

} // namespace afree
