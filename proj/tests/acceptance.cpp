// Acceptance suite: runs every contract criterion at its stated tolerance and
// prints one pass/fail line per criterion. Exit code = number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "afree/approx.hpp"
#include "afree/kernels.hpp"
#include "afree/cone.hpp"
#include "afree/envelope.hpp"
#include "afree/integrand.hpp"
#include "afree/measure.hpp"
#include "afree/rng.hpp"
#include "afree/spectral.hpp"
#include "afree/young.hpp"

using namespace afree;

namespace {

int g_failures = 0;

class Criterion {
public:
  Criterion(int id, std::string label, double budget_seconds)
      : id_(id), label_(std::move(label)), budget_(budget_seconds),
        start_(std::chrono::steady_clock::now()) {}

  void expect(bool ok, const std::string& detail) {
    if (!ok) {
      ok_ = false;
      if (!first_fail_.empty()) first_fail_ += "; ";
      first_fail_ += detail;
    }
  }

  ~Criterion() {
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
                      .count();
    if (budget_ > 0.0 && secs > budget_) {
      ok_ = false;
      first_fail_ += (first_fail_.empty() ? "" : "; ") + std::string("over runtime budget ") +
                     std::to_string(budget_) + "s";
    }
    std::printf("[%s] criterion %2d: %s (%.2fs)%s%s\n", ok_ ? "PASS" : "FAIL", id_,
                label_.c_str(), secs, first_fail_.empty() ? "" : " -- ",
                first_fail_.c_str());
    std::fflush(stdout);
    if (!ok_) ++g_failures;
  }

private:
  int id_;
  std::string label_;
  double budget_;
  std::chrono::steady_clock::time_point start_;
  bool ok_ = true;
  std::string first_fail_;
};

constexpr double kTwoPi = 2.0 * std::numbers::pi;

LinearOperator random_operator(Rng& rng) {
  int d = rng.uniform_int(1, 3);
  int k = rng.uniform_int(1, 3);
  int win = rng.uniform_int(1, 3);
  int wout = rng.uniform_int(1, 3);
  // all multi-indices of modulus k in d variables
  std::vector<MultiIndex> alphas;
  std::array<int, 3> a{};
  for (a[0] = 0; a[0] <= k; ++a[0])
    for (a[1] = 0; a[1] <= (d >= 2 ? k : 0); ++a[1])
      for (a[2] = 0; a[2] <= (d >= 3 ? k : 0); ++a[2]) {
        if (a[0] + a[1] + a[2] != k) continue;
        std::vector<int> e(a.begin(), a.begin() + d);
        alphas.emplace_back(e);
      }
  std::vector<OperatorTerm> terms;
  for (const auto& alpha : alphas) {
    Eigen::MatrixXd m(wout, win);
    for (int i = 0; i < wout; ++i)
      for (int j = 0; j < win; ++j) m(i, j) = rng.normal();
    terms.push_back({alpha, m});
  }
  return LinearOperator(d, k, win, wout, std::move(terms), "random");
}

void criterion_1_symbol_homogeneity() {
  Criterion c(1, "symbol homogeneity over 1000 random (op, xi, t) triples", 5.0);
  std::vector<LinearOperator> ops = {
      gallery("divergence_2d"), gallery("divergence_3d"), gallery("laplacian_2d"),
      gallery("curl_2d"),       gallery("sym_gradient_2d"), gallery("hessian_2d"),
      gallery("saint_venant_2d"), gallery("deviatoric_2d"), gallery("gradient_2d_m2"),
      gallery("cauchy_riemann_2d")};
  Rng rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    LinearOperator op = trial % 2 ? random_operator(rng) : ops[(trial / 2) % ops.size()];
    Eigen::VectorXd xi = rng.normal_vector(op.dimension(), 2.0);
    double t = rng.uniform(1e-2, 10.0);
    Eigen::MatrixXcd lhs = op.symbol(t * xi);
    Eigen::MatrixXcd rhs = std::pow(t, op.order()) * op.symbol(xi);
    double denom = rhs.norm();
    if (denom == 0.0) continue;
    worst = std::max(worst, (lhs - rhs).norm() / denom);
  }
  c.expect(worst < 1e-12, "worst relative error " + std::to_string(worst));
}

void criterion_2_constant_rank_audit() {
  Criterion c(2, "constant-rank audit matches theory on the gallery", 10.0);
  auto check_cr = [&c](const char* name, int r) {
    auto rep = constant_rank_audit(gallery(name));
    c.expect(rep.constant_rank, std::string(name) + " not constant rank");
    c.expect(rep.r == r, std::string(name) + " rank " + std::to_string(rep.r));
  };
  check_cr("divergence_2d", 1);
  check_cr("divergence_3d", 1);
  check_cr("laplacian_2d", 1);
  check_cr("curl_2d", 1);
  auto sv = constant_rank_audit(gallery("saint_venant_2d"));
  c.expect(sv.constant_rank, "symmetric-gradient annihilator not constant rank");
  auto mueller = constant_rank_audit(gallery("mueller_diagonal_2d"));
  c.expect(!mueller.constant_rank, "diagonal example not flagged");
  c.expect(mueller.rank_min == 1 && mueller.rank_max == 2,
           "diagonal example ranks {" + std::to_string(mueller.rank_min) + "," +
               std::to_string(mueller.rank_max) + "}");
}

void criterion_3_wave_cone_span() {
  Criterion c(3, "wave-cone spans: divergence = R^d, Laplacian = {0}, gradient image all",
              30.0);
  c.expect(constant_rank_audit(gallery("divergence_2d")).span_dim() == 2, "div 2d span");
  c.expect(constant_rank_audit(gallery("divergence_3d")).span_dim() == 3, "div 3d span");
  c.expect(constant_rank_audit(gallery("laplacian_2d")).span_dim() == 0, "laplacian span");
  // image cone of the gradient: ranges a (x) xi over sampled frequencies
  const auto& grad = gallery("gradient_2d_m2");
  Eigen::MatrixXd stacked(grad.fiber_out(), 0);
  for (const auto& xi : sphere_samples(2, 64)) {
    Eigen::MatrixXd range = range_basis(grad.reduced_symbol(xi));
    Eigen::MatrixXd widened(grad.fiber_out(), stacked.cols() + range.cols());
    widened << stacked, range;
    stacked = std::move(widened);
  }
  c.expect(numerical_rank(stacked, kRankTol) == 4, "gradient image cone span");
}

void criterion_4_exactness() {
  Criterion c(4, "exactness over 1000 samples: verified pairs pass, mismatched pair fails",
              30.0);
  auto a = exactness_check(gallery("curl_2d"), gallery("gradient_scalar_2d"), 1000, 1e-10);
  c.expect(a.pass, "(curl, D): max gap " + std::to_string(a.max_gap));
  auto b = exactness_check(gallery("divergence_2d"), gallery("rot_gradient_2d"), 1000, 1e-10);
  c.expect(b.pass, "(div, rot D): max gap " + std::to_string(b.max_gap));
  auto bad = exactness_check(gallery("divergence_2d"), gallery("gradient_scalar_2d"), 1000,
                             1e-10);
  c.expect(!bad.pass, "(div, D) unexpectedly passed");
}

void criterion_5_projection_contract() {
  Criterion c(5, "projection contract on 100 random fields (N=32, d=2)", 30.0);
  const auto& op = gallery("divergence_2d");
  Rng rng(1005);
  double worst_ann = 0.0, worst_mean = 0.0, worst_idem = 0.0, worst_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    TorusField u = random_band_limited_field(2, 32, 2, rng);
    RepresentativeResult rep = a_representative_detailed(op, u);
    worst_gap = std::max(worst_gap, rep.formula_gap);
    worst_mean = std::max(worst_mean, rep.field.mean().norm());
    TorusField t2 = a_representative(op, rep.field);
    t2 -= rep.field;
    worst_idem = std::max(worst_idem, sobolev_norm(t2, {0.0}));
    TorusField z = afree_part(op, u);
    TorusField az = apply_operator(op, z);
    TorusField au = apply_operator(op, u);
    double denom = std::max(sobolev_norm(au, {0.0}), 1e-12);
    worst_ann = std::max(worst_ann, sobolev_norm(az, {0.0}) / denom);
  }
  c.expect(worst_ann < 1e-9, "annihilation residual " + std::to_string(worst_ann));
  c.expect(worst_mean < 1e-12, "mean of T[u] " + std::to_string(worst_mean));
  c.expect(worst_idem < 1e-10, "idempotence " + std::to_string(worst_idem));
  c.expect(worst_gap < 1e-10, "formula gap " + std::to_string(worst_gap));
}

void criterion_6_potential_round_trip() {
  Criterion c(6, "potential round trip < 1e-9 on 100 A-free fields, both pairs", 60.0);
  struct Pair {
    const char* a;
    const char* b;
  };
  Rng rng(1006);
  for (auto [an, bn] : {Pair{"divergence_2d", "rot_gradient_2d"},
                        Pair{"curl_2d", "gradient_scalar_2d"}}) {
    const auto& opa = gallery(an);
    const auto& opb = gallery(bn);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      TorusField u = random_band_limited_field(2, 32, opa.fiber_in(), rng);
      TorusField z = afree_part(opa, u);
      PotentialResult pr = potential_solve(opb, z);
      TorusField bz = apply_operator(opb, pr.potential);
      bz -= z;
      double denom = std::max(sobolev_norm(z, {0.0}), 1e-12);
      worst = std::max(worst, sobolev_norm(bz, {0.0}) / denom);
    }
    c.expect(worst < 1e-9,
             std::string("pair (") + an + ", " + bn + "): " + std::to_string(worst));
  }
}

void criterion_7_envelope_divergence_double_well() {
  Criterion c(7, "Q_div[(|w|^2-1)^2](0) <= 5e-2 at K=8, N=32, 8 restarts; monotone K=4->8",
              60.0);
  EnvelopeConfig cfg;
  cfg.k_schedule = {4, 8};
  cfg.grid_n = 32;
  cfg.restarts = 8;
  cfg.max_iters = 500;
  cfg.seed = 1007;
  EnvelopeResult res = quasiconvex_envelope(gallery("divergence_2d"),
                                            make_radial_double_well(),
                                            Eigen::Vector2d(0, 0), cfg);
  // independent oracle: radial convexification of the double well at 0 is 0
  // (1-d lower convex hull over a radial grid)
  {
    std::vector<double> rs, vs;
    for (double r = -3.0; r <= 3.0; r += 0.01) {
      rs.push_back(r);
      double s = r * r - 1.0;
      vs.push_back(s * s);
    }
    double hull_at_zero = 1e300;
    for (std::size_t i = 0; i < rs.size(); ++i)
      for (std::size_t j = i + 1; j < rs.size(); ++j) {
        if (rs[i] > 0.0 || rs[j] < 0.0) continue;  // chords straddling r = 0
        double t = (0.0 - rs[i]) / (rs[j] - rs[i]);
        hull_at_zero = std::min(hull_at_zero, (1 - t) * vs[i] + t * vs[j]);
      }
    c.expect(std::abs(hull_at_zero) < 1e-9,
             "convexification oracle " + std::to_string(hull_at_zero));
  }
  c.expect(res.value <= 5e-2, "envelope value " + std::to_string(res.value));
  c.expect(res.k_values.size() == 2 && res.k_values[1] <= res.k_values[0] + 1e-9,
           "K=4 -> K=8 not monotone");
  c.expect(res.value <= res.zero_field_energy + 1e-12, "upper bound violated");
  c.expect(res.afree_residual < 1e-8, "test field not A-free");
}

void criterion_8_envelope_elliptic() {
  Criterion c(8, "elliptic envelope identity |Q_A f - f| < 1e-6 at 10 random points", 60.0);
  const auto& lap = gallery("laplacian_2d");
  IntegrandPtr dw = make_radial_double_well();
  EnvelopeConfig cfg;
  cfg.k_schedule = {4, 8};
  cfg.grid_n = 32;
  cfg.restarts = 4;
  cfg.seed = 1008;
  Rng rng(1008);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd z = rng.normal_vector(1, 1.5);
    EnvelopeResult res = quasiconvex_envelope(lap, dw, z, cfg);
    worst = std::max(worst, std::abs(res.value - dw->value(z)));
  }
  c.expect(worst < 1e-6, "worst |Q f - f| = " + std::to_string(worst));
}

void criterion_9_homogenization() {
  Criterion c(9, "homogenization: final pairing error < 1% and decreasing from j=4", 60.0);
  const int n = 256;
  TorusField profile(2, n, 2);
  for (std::size_t cell = 0; cell < profile.cells(); ++cell) {
    Eigen::VectorXd y = profile.position(cell);
    profile.at(0, cell) = std::sin(kTwoPi * y[0]) + 0.4 * std::sin(2 * kTwoPi * y[0]);
    profile.at(1, cell) = 0.3 * std::cos(kTwoPi * y[0]);
  }
  std::vector<TorusField> fields;
  for (int j : {1, 2, 4, 8, 16}) {
    TorusField w(2, n, 2);
    std::array<int, 3> idx{};
    for (std::size_t cell = 0; cell < w.cells(); ++cell) {
      w.cell_coords(cell, idx);
      std::array<int, 3> src{(idx[0] * j) % n, (idx[1] * j) % n, 0};
      for (int comp = 0; comp < 2; ++comp)
        w.at(comp, cell) = profile.at(comp, w.cell_index(src));
    }
    fields.push_back(std::move(w));
  }
  SpatialWeight phi = [](const Eigen::VectorXd& x) {
    return 1.0 / (1.25 - std::cos(kTwoPi * x[0]));
  };
  std::vector<GenerationTest> tests;
  tests.push_back({make_norm(), phi, "norm"});
  tests.push_back({make_area(), phi, "area"});
  tests.push_back({make_smooth_norm(0.3), phi, "smooth_norm"});
  auto series = generation_estimate(fields, tests);
  for (const auto& s : series) {
    IntegrandPtr f = s.name == "norm" ? make_norm()
                     : s.name == "area" ? make_area()
                                        : make_smooth_norm(0.3);
    double phint = 0.0, fint = 0.0;
    Eigen::VectorXd z(2);
    for (std::size_t cell = 0; cell < profile.cells(); ++cell) {
      phint += phi(profile.position(cell));
      for (int comp = 0; comp < 2; ++comp) z[comp] = profile.at(comp, cell);
      fint += f->value(z);
    }
    phint /= static_cast<double>(profile.cells());
    fint /= static_cast<double>(profile.cells());
    double exact = phint * fint;
    double e4 = std::abs(s.values[2] - exact);
    double e8 = std::abs(s.values[3] - exact);
    double e16 = std::abs(s.values[4] - exact);
    c.expect(e16 < 0.01 * std::abs(exact), s.name + ": final error " + std::to_string(e16));
    c.expect(e8 < e4 && e16 < e8, s.name + ": not strictly decreasing from j=4");
  }
}

void criterion_10_concentration() {
  Criterion c(10, "concentration triple: generation -> 1 within 2%, certificate verdicts",
              120.0);
  const auto& div = gallery("divergence_2d");
  const auto& lap = gallery("laplacian_2d");
  ConcentrationSpec spec;
  spec.base = Eigen::Vector2d(0, 0);
  spec.lambda_density = [](const Eigen::VectorXd&) { return 1.0; };
  Eigen::Vector2d e(1, 0);
  spec.p = {{0.5, e}, {0.5, -e}};
  spec.n_stages = 3;
  spec.grid_n = 256;
  spec.seed = 1010;
  auto stages = concentration_builder(div, spec);
  std::vector<TorusField> fields;
  for (auto& st : stages) fields.push_back(std::move(st.field));
  GenerationTest t{make_norm(), nullptr, "norm"};
  auto series = generation_estimate(fields, std::span<const GenerationTest>(&t, 1));
  double final_value = series[0].values.back();
  c.expect(std::abs(final_value - 1.0) < 0.02,
           "|.| estimate " + std::to_string(final_value));

  BoxDomain dom;
  dom.lo = Eigen::Vector2d(0, 0);
  dom.hi = Eigen::Vector2d(1, 1);
  dom.cells_per_axis = {8, 8};
  DiscreteYoungMeasure triple(dom, 2);
  triple.set_lambda_density_everywhere(1.0);
  triple.set_nu_inf_everywhere({{0.5, e}, {0.5, -e}});
  auto family = default_qc_family(div);
  CertificateReport pass = jensen_certificate(triple, div, family);
  c.expect(pass.pass_barycenter && pass.pass_jensen && pass.pass_support,
           "divergence certificate rejected the triple");

  BoxDomain dom1;
  dom1.lo = Eigen::VectorXd::Zero(1);
  dom1.hi = Eigen::VectorXd::Ones(1);
  dom1.cells_per_axis = {8};
  // scalar fiber triple under the elliptic operator
  BoxDomain dom2 = dom;
  DiscreteYoungMeasure scalar_triple(dom2, 1);
  Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  scalar_triple.set_lambda_density_everywhere(1.0);
  scalar_triple.set_nu_inf_everywhere({{0.5, one}, {0.5, -one}});
  CertificateReport fail = jensen_certificate(scalar_triple, lap, default_qc_family(lap));
  c.expect(!fail.pass_support, "Laplacian certificate did not fail condition (iii)");
  c.expect(fail.pass_jensen, "Laplacian certificate failed the wrong condition");
}

void criterion_11_area_strict() {
  Criterion c(11, "area-strict circle run: final errors < 1%, stage residuals < 1e-9", 120.0);
  const auto& div = gallery("divergence_2d");
  const int n = 256;
  const double box = 28.0;
  BoxDomain dom;
  dom.lo = Eigen::Vector2d(0, 0);
  dom.hi = Eigen::Vector2d(box, box);
  dom.cells_per_axis = {n, n};
  DiscreteMeasure mu =
      make_circle_measure(dom, Eigen::Vector2d(box / 2, box / 2), 1.0, 256);
  const double h = box / n;
  auto run = area_strict_run(div, mu, {16 * h, 8 * h, 4 * h}, n);
  double area_err =
      std::abs(run.stages.back().area - run.target_area) / run.target_area;
  c.expect(area_err < 0.01, "final area error " + std::to_string(area_err));
  for (const auto& st : run.stages)
    c.expect(st.residual_rel < 1e-9, "stage residual " + std::to_string(st.residual_rel));
  for (double werr : run.stages.back().weak_star_errors)
    c.expect(werr < 0.01 * run.target_tv, "weak-* error " + std::to_string(werr));
  for (std::size_t t = 0; t < run.stages.front().weak_star_errors.size(); ++t)
    for (std::size_t j = 1; j < run.stages.size(); ++j)
      c.expect(run.stages[j].weak_star_errors[t] <=
                   run.stages[j - 1].weak_star_errors[t] + 1e-12,
               "weak-* errors not decreasing");
  for (const auto& st : run.stages) {
    c.expect(st.mass <= run.target_tv * 1.02, "mass control violated");
    c.expect(st.area >= run.target_area * 0.99, "area lower semicontinuity violated");
  }
}

void criterion_12_gradient_checks() {
  Criterion c(12, "cell-energy gradients vs central differences at 100 random points", 120.0);
  const auto& div = gallery("divergence_2d");
  Rng rng(1012);
  std::vector<IntegrandPtr> fs = {make_radial_double_well(), make_smooth_norm(1e-1),
                                  make_smooth_distance(
                                      {Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0)}, 1e-1)};
  double worst = 0.0;
  int done = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto& f = fs[trial % fs.size()];
    Eigen::Vector2d z(rng.normal(), rng.normal());
    CellProblem prob(div, f, z, 16, 4);
    Eigen::VectorXd x = rng.normal_vector(prob.coords(), 0.6);
    Eigen::VectorXd g;
    prob.energy_grad(x, g);
    Eigen::VectorXd fd(prob.coords());
    const double step = 1e-6;
    Eigen::VectorXd xp = x, xm = x;
    for (int i = 0; i < prob.coords(); ++i) {
      xp[i] += step;
      xm[i] -= step;
      fd[i] = (prob.energy(xp) - prob.energy(xm)) / (2 * step);
      xp[i] = x[i];
      xm[i] = x[i];
    }
    worst = std::max(worst, (g - fd).norm() / std::max(1e-8, g.norm()));
    ++done;
  }
  c.expect(done == 100, "incomplete");
  c.expect(worst < 1e-5, "worst relative gradient error " + std::to_string(worst));
}

} // namespace

int main() {
  std::printf("acceptance suite (kernels: %s)\n",
              kern::isa_name(kern::active_isa()).c_str());
  criterion_1_symbol_homogeneity();
  criterion_2_constant_rank_audit();
  criterion_3_wave_cone_span();
  criterion_4_exactness();
  criterion_5_projection_contract();
  criterion_6_potential_round_trip();
  criterion_7_envelope_divergence_double_well();
  criterion_8_envelope_elliptic();
  criterion_9_homogenization();
  criterion_10_concentration();
  criterion_11_area_strict();
  criterion_12_gradient_checks();
  std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures;
}
