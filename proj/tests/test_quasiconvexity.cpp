#include <doctest.h>

#include <cmath>
#include <numbers>

#include "afree/cone.hpp"
#include "afree/envelope.hpp"
#include "afree/integrand.hpp"
#include "afree/spectral.hpp"
#include "testing_util.hpp"

using namespace afree;

TEST_CASE("s-transform: worked examples") {
  Eigen::Vector2d zhat(0.3, -0.4);  // |zhat| = 0.5
  CHECK(s_transform(*make_norm(), zhat) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s_transform(*make_constant(1.0), zhat) == doctest::Approx(0.5).epsilon(1e-14));
  // area integrand: Sf(zhat) = sqrt((1-s)^2 + s^2)
  double s = 0.5;
  CHECK(s_transform(*make_area(), zhat) ==
        doctest::Approx(std::sqrt((1 - s) * (1 - s) + s * s)).epsilon(1e-14));
  // boundary values are the strong recession
  Eigen::Vector2d boundary(0.6, 0.8);
  CHECK(s_transform(*make_norm(), boundary) == doctest::Approx(1.0));
  CHECK(s_transform(*make_area(), boundary) == doctest::Approx(1.0));
  CHECK_THROWS(s_transform(*make_quadratic(), boundary));  // no strong recession
}

TEST_CASE("t-transform inverts the s-transform") {
  Rng rng(3);
  IntegrandPtr f = make_area();
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd z = rng.normal_vector(2, 2.0);
    auto sf = [&f](const Eigen::VectorXd& zh) { return s_transform(*f, zh); };
    CHECK(t_transform(sf, z) == doctest::Approx(f->value(z)).epsilon(1e-12));
  }
}

TEST_CASE("recession functions") {
  Rng rng(4);
  // strong recessions are positively 1-homogeneous to machine precision
  for (IntegrandPtr f : {make_norm(), make_area(), make_smooth_norm(0.1),
                         make_distance({Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0)})}) {
    for (int i = 0; i < 30; ++i) {
      Eigen::VectorXd z = rng.normal_vector(2);
      double t = rng.uniform(0.1, 20.0);
      CHECK(f->recession(t * z) == doctest::Approx(t * f->recession(z)).epsilon(1e-12));
    }
  }
  // upper recessions
  Eigen::Vector2d e(1, 0);
  CHECK(upper_recession(*make_norm(), e).analytic);
  CHECK(upper_recession(*make_norm(), e).value == doctest::Approx(1.0));
  CHECK(upper_recession(*make_area(), e).value == doctest::Approx(1.0));
  auto quad = upper_recession(*make_quadratic(), e);
  CHECK(quad.analytic);
  CHECK(std::isinf(quad.value));
  // distance to a two-point set: h^#(e) = |e| = 1, via the analytic rule
  IntegrandPtr dist = make_distance({Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0)});
  CHECK(upper_recession(*dist, e).value == doctest::Approx(1.0));
  // numeric estimator on an integrand without a declared recession: a plain
  // clipped linear functional, limsup f(tz)/t = |z_0|
  struct Clipped final : Integrand {
    double value(const Eigen::VectorXd& z) const override {
      return std::abs(z[0]) <= 1.0 ? 0.0 : std::abs(z[0]) - 1.0;
    }
    bool differentiable() const override { return false; }
    double growth_constant() const override { return 1.0; }
    std::string describe() const override { return "clipped"; }
  } clipped;
  auto est = upper_recession(clipped, e);
  CHECK(!est.analytic);
  CHECK(est.value == doctest::Approx(1.0).epsilon(2e-2));
}

TEST_CASE("tilde transform") {
  IntegrandPtr f = make_norm();
  Rng rng(5);
  // full span: identity
  Eigen::MatrixXd full = Eigen::MatrixXd::Identity(2, 2);
  IntegrandPtr t_full = tilde_transform(f, full);
  // zero span: constant f(0)
  Eigen::MatrixXd none(2, 0);
  IntegrandPtr t_none = tilde_transform(f, none);
  // span{e1}: |z| -> |z1|
  Eigen::MatrixXd e1 = Eigen::MatrixXd::Zero(2, 1);
  e1(0, 0) = 1.0;
  IntegrandPtr t_e1 = tilde_transform(f, e1);
  for (int i = 0; i < 30; ++i) {
    Eigen::VectorXd z = rng.normal_vector(2, 2.0);
    CHECK(t_full->value(z) == doctest::Approx(f->value(z)).epsilon(1e-13));
    CHECK(t_none->value(z) == doctest::Approx(0.0));
    CHECK(t_e1->value(z) == doctest::Approx(std::abs(z[0])).epsilon(1e-13));
    CHECK(t_e1->recession(z) == doctest::Approx(std::abs(z[0])).epsilon(1e-13));
  }
  // non-orthonormal basis rejected
  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(2, 1);
  CHECK_THROWS(tilde_transform(f, bad));
}

TEST_CASE("cell energy: worked examples") {
  Eigen::Vector2d z(0.4, -0.7);
  TorusField zero(2, 16, 2);
  for (IntegrandPtr f : {make_radial_double_well(), make_area(), make_quadratic()})
    CHECK(cell_energy(*f, z, zero) == doctest::Approx(f->value(z)).epsilon(1e-14));

  // quadratic: cross term integrates to zero for mean-zero fields
  Rng rng(6);
  TorusField w = testing::zero_mean(random_band_limited_field(2, 32, 2, rng));
  double mean_sq = 0.0;
  for (std::size_t i = 0; i < w.cells(); ++i)
    mean_sq += w.at(0, i) * w.at(0, i) + w.at(1, i) * w.at(1, i);
  mean_sq /= static_cast<double>(w.cells());
  CHECK(cell_energy(*make_quadratic(), z, w) ==
        doctest::Approx(z.squaredNorm() + mean_sq).epsilon(1e-12));
}

TEST_CASE("cell problem: analytic gradient matches finite differences") {
  const auto& div = gallery("divergence_2d");
  Rng rng(7);
  std::vector<IntegrandPtr> fs = {make_radial_double_well(), make_smooth_norm(1e-1),
                                  make_smooth_distance(
                                      {Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0)}, 1e-1)};
  for (const auto& f : fs) {
    CellProblem prob(div, f, Eigen::Vector2d(0.2, 0.1), 16, 3);
    REQUIRE(prob.coords() > 0);
    for (int trial = 0; trial < 12; ++trial) {
      Eigen::VectorXd x = rng.normal_vector(prob.coords(), 0.6);
      Eigen::VectorXd g;
      prob.energy_grad(x, g);
      Eigen::VectorXd fd = testing::fd_gradient(
          [&prob](const Eigen::VectorXd& y) { return prob.energy(y); }, x);
      CHECK((g - fd).norm() <= 1e-5 * std::max(1e-8, g.norm()));
    }
  }
}

TEST_CASE("cell problem parameterization is mean-zero and A-free") {
  const auto& op = gallery("saint_venant_2d");
  CellProblem prob(op, make_quadratic(), Eigen::Vector3d(0, 0, 0), 16, 4);
  Rng rng(8);
  Eigen::VectorXd x = rng.normal_vector(prob.coords());
  TorusField w = prob.field(x);
  CHECK(w.mean().norm() < 1e-13);
  TorusField aw = apply_operator(op, w);
  CHECK(sobolev_norm(aw, {-2.0}) <= 1e-8 * sobolev_norm(w, {0.0}));
  // nonsmooth integrand is rejected without smoothing
  CHECK_THROWS(CellProblem(op, make_norm(), Eigen::Vector3d(0, 0, 0), 16, 4));
}

TEST_CASE("envelope of an elliptic operator is the integrand itself") {
  const auto& lap = gallery("laplacian_2d");
  Rng rng(9);
  EnvelopeConfig cfg;
  cfg.k_schedule = {4};
  cfg.grid_n = 16;
  cfg.restarts = 2;
  IntegrandPtr dw = make_radial_double_well();
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd z = rng.normal_vector(1, 1.5);
    EnvelopeResult res = quasiconvex_envelope(lap, dw, z, cfg);
    CHECK(std::abs(res.value - dw->value(z)) < 1e-6);  // only the zero test field exists
  }
}

TEST_CASE("envelope of a convex integrand is the integrand (Jensen)") {
  const auto& div = gallery("divergence_2d");
  EnvelopeConfig cfg;
  cfg.k_schedule = {3};
  cfg.grid_n = 16;
  cfg.restarts = 3;
  cfg.max_iters = 150;
  Eigen::Vector2d z(0.5, -0.2);
  EnvelopeResult res = quasiconvex_envelope(div, make_area(), z, cfg);
  CHECK(res.value == doctest::Approx(make_area()->value(z)).epsilon(1e-7));
  CHECK(res.value <= res.zero_field_energy + 1e-12);
}

TEST_CASE("envelope of the divergence double well drops toward the convexification") {
  const auto& div = gallery("divergence_2d");
  EnvelopeConfig cfg;
  cfg.k_schedule = {2, 4};
  cfg.grid_n = 16;
  cfg.restarts = 4;
  cfg.max_iters = 300;
  cfg.seed = 99;
  EnvelopeResult res =
      quasiconvex_envelope(div, make_radial_double_well(), Eigen::Vector2d(0, 0), cfg);
  // K=4 laminate profiles reach ~0.086 (div-quasiconvex = convex, true value 0)
  CHECK(res.value < 0.15);
  CHECK(res.k_values.size() == 2);
  CHECK(res.k_values[1] <= res.k_values[0] + 1e-9);  // warm-started continuation
  CHECK(res.value <= res.zero_field_energy + 1e-12);
  CHECK(res.afree_residual < 1e-8);
  CHECK(!res.diverged);
}

TEST_CASE("envelope with smoothing schedule handles nonsmooth integrands") {
  const auto& div = gallery("divergence_2d");
  EnvelopeConfig cfg;
  cfg.k_schedule = {2};
  cfg.grid_n = 16;
  cfg.restarts = 2;
  cfg.max_iters = 120;
  Eigen::Vector2d z(0.8, 0.0);
  EnvelopeResult res = quasiconvex_envelope(div, make_norm(), z, cfg);
  CHECK(res.smoothing_values.size() == 3);
  // norm is convex: the envelope is the norm itself, up to the smoothing bias
  CHECK(res.value >= z.norm() - 2e-2);
  CHECK(res.value <= res.zero_field_energy + 1e-12);
}

TEST_CASE("wave-cone midpoint convexity check") {
  const auto& div = gallery("divergence_2d");
  // convex integrands never violate
  auto ok = lambda_convexity_check(div, *make_area(), 300, 1e-9);
  CHECK(ok.violations == 0);
  CHECK(ok.checked == 300);
  // the raw double well violates along wave lines through the wells
  auto bad = lambda_convexity_check(div, *make_radial_double_well(), 400, 5e-2);
  CHECK(bad.violations > 0);
  CHECK(bad.worst > 0.1);
  // elliptic operators have no wave directions to test
  auto none = lambda_convexity_check(gallery("laplacian_2d"), *make_quadratic(), 50, 1e-9);
  CHECK(none.checked == 0);
}

TEST_CASE("envelope values are wave-cone convex at tolerance") {
  const auto& div = gallery("divergence_2d");
  EnvelopeConfig cfg;
  cfg.k_schedule = {3};
  cfg.grid_n = 16;
  cfg.restarts = 2;
  cfg.max_iters = 120;
  IntegrandPtr dw = make_radial_double_well();
  auto envelope_fn = [&](const Eigen::VectorXd& z) {
    return quasiconvex_envelope(div, dw, z, cfg).value;
  };
  auto rep = lambda_convexity_check(div, envelope_fn, 12, 5e-2, 13);
  CHECK(rep.checked == 12);
  CHECK(rep.violations == 0);
}

TEST_CASE("coercivity bound monitor") {
  const auto& div = gallery("divergence_2d");
  Eigen::Vector2d z(0.3, 0.0);
  TorusField zero(2, 16, 2);
  // w = 0, delta = 0: |z| <= (C/eps)(1+|z|) holds for C >= eps
  auto ok = coercivity_bound_check(div, *make_norm(), 0.5, z, zero, 0.0);
  CHECK(ok.holds);
  // hand-crafted huge field violates the bound
  TorusField huge(2, 16, 2);
  for (std::size_t i = 0; i < huge.cells(); ++i) huge.at(0, i) = 1e9;
  auto bad = coercivity_bound_check(div, *make_norm(), 0.5, z, huge, 0.0, 1.0);
  CHECK(!bad.holds);
  // optimizer output on the double well: bound holds with stable constant
  EnvelopeConfig cfg;
  cfg.k_schedule = {3};
  cfg.grid_n = 16;
  cfg.restarts = 3;
  cfg.max_iters = 200;
  double c_prev = -1.0;
  for (double eps : {0.1, 0.01}) {
    IntegrandPtr feps = make_sum(make_radial_double_well(),
                                 make_scaled(eps, make_smooth_norm(1e-3)));
    EnvelopeResult res = quasiconvex_envelope(div, feps, Eigen::Vector2d(0, 0), cfg);
    auto rep =
        coercivity_bound_check(div, *make_radial_double_well(), eps, Eigen::Vector2d(0, 0),
                               res.field, 0.05);
    CHECK(rep.holds);
    if (c_prev > 0.0) CHECK(rep.c_required <= 10.0 * std::max(c_prev, 0.1));
    c_prev = rep.c_required;
  }
}

namespace {

// d=2 operator on R^3 fibers: divergence on the first two components plus an
// elliptic constraint on the third; constant rank 2 with W_A = R^2 x {0}
LinearOperator partial_span_op() {
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(3, 3);
  m1(0, 0) = 1.0;
  m1(1, 2) = 1.0;
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(3, 3);
  m2(0, 1) = 1.0;
  m2(2, 2) = 1.0;
  std::vector<OperatorTerm> terms;
  terms.push_back({MultiIndex({1, 0}), m1});
  terms.push_back({MultiIndex({0, 1}), m2});
  return LinearOperator(2, 1, 3, 3, std::move(terms), "div_plus_elliptic");
}

} // namespace

TEST_CASE("translation structure: Q_A of the tilde equals the tilde of Q_A") {
  LinearOperator op = partial_span_op();
  auto audit = constant_rank_audit(op);
  REQUIRE(audit.constant_rank);
  REQUIRE(audit.span_dim() == 2);

  IntegrandPtr f = make_radial_double_well();
  IntegrandPtr f_tilde = tilde_transform(f, audit.span_basis);
  Eigen::MatrixXd proj = audit.span_basis * audit.span_basis.transpose();

  EnvelopeConfig cfg;
  cfg.k_schedule = {3};
  cfg.grid_n = 16;
  cfg.restarts = 4;
  cfg.max_iters = 250;
  Rng rng(77);
  for (int trial = 0; trial < 4; ++trial) {
    Eigen::VectorXd z = rng.normal_vector(3, 0.8);
    double q_tilde = quasiconvex_envelope(op, f_tilde, z, cfg).value;
    double tilde_q = quasiconvex_envelope(op, f, proj * z, cfg).value;
    CHECK(std::abs(q_tilde - tilde_q) < 5e-2);
  }
}

TEST_CASE("envelope is Lipschitz in the base point at optimizer tolerance") {
  const auto& div = gallery("divergence_2d");
  EnvelopeConfig cfg;
  cfg.k_schedule = {3};
  cfg.grid_n = 16;
  cfg.restarts = 3;
  cfg.max_iters = 200;
  IntegrandPtr dw = make_radial_double_well();
  Rng rng(78);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd z1 = rng.normal_vector(2, 0.8);
    Eigen::VectorXd z2 = z1 + rng.unit_vector(2) * 0.15;
    double v1 = quasiconvex_envelope(div, dw, z1, cfg).value;
    double v2 = quasiconvex_envelope(div, dw, z2, cfg).value;
    // growth-based slope bound on the sampled ball plus optimizer slack
    double slope = 14.0;  // max |grad dw| for |z| <= 2.2
    CHECK(std::abs(v1 - v2) <= slope * (z2 - z1).norm() + 5e-2);
  }
}

TEST_CASE("growth and lipschitz contracts hold on random samples") {
  Rng rng(79);
  std::vector<IntegrandPtr> fs = {make_norm(), make_smooth_norm(0.2), make_area(),
                                  make_shifted_norm(Eigen::Vector2d(0.7, 0)),
                                  make_distance({Eigen::Vector2d(1, 0),
                                                 Eigen::Vector2d(-1, 0)})};
  for (const auto& f : fs) {
    REQUIRE(f->linear_growth());
    double m = f->growth_constant();
    auto lip = f->lipschitz_constant();
    REQUIRE(lip.has_value());
    for (int i = 0; i < 60; ++i) {
      Eigen::VectorXd z1 = rng.normal_vector(2, 4.0);
      Eigen::VectorXd z2 = rng.normal_vector(2, 4.0);
      CHECK(std::abs(f->value(z1)) <= m * (1.0 + z1.norm()) + 1e-12);
      CHECK(std::abs(f->value(z1) - f->value(z2)) <= *lip * (z1 - z2).norm() + 1e-12);
    }
  }
  CHECK(!make_quadratic()->linear_growth());
  CHECK(!make_radial_double_well()->lipschitz_constant().has_value());
}

TEST_CASE("scaled integrands: recession algebra and negative-scale fallback") {
  IntegrandPtr f = make_scaled(2.5, make_norm());
  Eigen::Vector2d z(0.6, -0.8);
  CHECK(f->recession(z) == doctest::Approx(2.5));
  double out = 0.0;
  CHECK(f->upper_recession_analytic(z, out));
  CHECK(out == doctest::Approx(2.5));
  // negative scales cannot reuse the limsup shortcut; the numeric path runs
  IntegrandPtr g = make_scaled(-1.0, make_norm());
  auto est = upper_recession(*g, z);
  CHECK(est.value == doctest::Approx(-1.0).epsilon(5e-3));
}
