#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <sstream>

#include "afree/approx.hpp"
#include "afree/cone.hpp"
#include "afree/envelope.hpp"
#include "afree/integrand.hpp"
#include "afree/kernels.hpp"
#include "afree/linear_operator.hpp"
#include "afree/measure.hpp"
#include "afree/parallel.hpp"
#include "afree/report.hpp"
#include "afree/rng.hpp"
#include "afree/spectral.hpp"
#include "afree/young.hpp"

namespace {

using namespace afree;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;     // crashes, malformed inputs
constexpr int kExitRejected = 2;  // audit / certificate / exactness failures

struct GlobalOpts {
  int grid = 32;
  double tol = 1e-6;
  std::uint64_t seed = 1234;
  std::string out;
  std::string format = "structured-text";
  int threads = 0;
};

LinearOperator resolve_operator(const std::string& spec) {
  if (spec.rfind("gallery/", 0) == 0) return gallery(spec.substr(8));
  if (std::filesystem::exists(spec)) return parse_operator_file(spec);
  try {
    return gallery(spec);
  } catch (const std::exception&) {
    throw std::runtime_error("operator '" + spec +
                             "' is neither a file nor a gallery name (try one of: " +
                             [] {
                               std::string s;
                               for (const auto& n : gallery_names()) s += n + " ";
                               return s;
                             }());
  }
}

Eigen::VectorXd parse_vector(const std::string& s) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
  Eigen::VectorXd v(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
  return v;
}

void emit(const Report& rep, const GlobalOpts& g) {
  if (!g.out.empty()) {
    rep.write(g.out, g.format);
  } else {
    std::cout << (g.format == "csv" ? rep.csv() : rep.structured_text());
  }
}

void check(bool cond, const char* what) {
  if (!cond) throw std::runtime_error(std::string("selftest failed: ") + what);
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// --------------------------------------------------------------------------
// selftests: the basic worked examples of each subcommand's module

void selftest_audit() {
  check(numerical_rank(Eigen::MatrixXd(Eigen::MatrixXd::Identity(3, 3)), 1e-10) == 3,
        "rank(I3) = 3");
  check(numerical_rank(Eigen::MatrixXd(Eigen::MatrixXd::Zero(2, 2)), 1e-10) == 0,
        "rank(0) = 0");
  Eigen::MatrixXd d = Eigen::Vector2d(1.0, 1e-14).asDiagonal();
  check(numerical_rank(d, 1e-10) == 1, "rank(diag(1,1e-14)) = 1");
  const auto& div = gallery("divergence_2d");
  Eigen::MatrixXcd s = div.symbol(Eigen::Vector2d(1, 0));
  check(near(s(0, 0).imag(), 2 * std::numbers::pi, 1e-12) && near(std::abs(s(0, 1)), 0, 1e-15),
        "divergence symbol at (1,0)");
  check(div.symbol(Eigen::Vector2d(0, 0)).norm() == 0.0, "symbol at 0 vanishes");
  Eigen::MatrixXcd lap = gallery("laplacian_2d").symbol(Eigen::Vector2d(1, 1));
  check(near(lap(0, 0).real(), -8 * std::numbers::pi * std::numbers::pi, 1e-9),
        "laplacian symbol at (1,1)");
}

void selftest_cone() {
  const auto& div = gallery("divergence_2d");
  check(wave_cone_membership(div, Eigen::Vector2d(1, 0)).member, "div wave cone");
  check(!wave_cone_membership(gallery("laplacian_2d"), Eigen::VectorXd::Ones(1)).member,
        "laplacian wave cone trivial");
  const auto& grad = gallery("gradient_2d_m2");
  Eigen::VectorXd rank1 = Eigen::VectorXd::Zero(4);
  rank1[0] = 1.0;  // e1 (x) e1
  check(image_cone_membership(grad, rank1).member, "gradient image cone rank-1");
  Eigen::VectorXd id2(4);
  id2 << 1, 0, 0, 1;
  check(!image_cone_membership(grad, id2).member, "identity not in gradient cone");
  check(image_cone_membership(grad, Eigen::VectorXd::Zero(4)).member, "zero in image cone");
}

void selftest_exactness() {
  check(exactness_check(gallery("curl_2d"), gallery("gradient_scalar_2d"), 128).pass,
        "(curl, D) exact");
  check(exactness_check(gallery("divergence_2d"), gallery("rot_gradient_2d"), 128).pass,
        "(div, rot D) exact");
  check(!exactness_check(gallery("divergence_2d"), gallery("gradient_scalar_2d"), 128).pass,
        "(div, D) not exact");
}

void selftest_project() {
  const auto& div = gallery("divergence_2d");
  TorusField constant(2, 16, 2);
  for (std::size_t i = 0; i < constant.cells(); ++i) constant.at(0, i) = 0.7;
  check(apply_operator(div, constant).rms() < 1e-13, "A(constant) = 0");
  check(a_representative(div, constant).rms() < 1e-13, "T[constant] = 0");
  TorusField z = afree_part(div, constant);
  check(z.rms() < 1e-13, "constant splits into its mean");
}

void selftest_envelope() {
  const auto& div = gallery("divergence_2d");
  TorusField zero(2, 8, 2);
  Eigen::Vector2d z(0.3, -0.2);
  IntegrandPtr dw = make_radial_double_well();
  check(near(cell_energy(*dw, z, zero), dw->value(z), 1e-14), "cell energy of zero field");
  // quadratic: cross term integrates to zero
  Rng rng(5);
  TorusField w = random_band_limited_field(2, 16, 2, rng);
  Eigen::VectorXd m = w.mean();
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < w.cells(); ++i) w.at(c, i) -= m[c];
  IntegrandPtr quad = make_quadratic();
  double mean_w2 = 0.0;
  for (std::size_t i = 0; i < w.cells(); ++i) {
    double a = w.at(0, i), b = w.at(1, i);
    mean_w2 += a * a + b * b;
  }
  mean_w2 /= static_cast<double>(w.cells());
  check(near(cell_energy(*quad, z, w), z.squaredNorm() + mean_w2, 1e-10),
        "quadratic cell energy identity");
  // convex integrand: envelope equals the integrand (Jensen)
  EnvelopeConfig cfg;
  cfg.k_schedule = {2};
  cfg.grid_n = 8;
  cfg.restarts = 2;
  cfg.max_iters = 60;
  EnvelopeResult res = quasiconvex_envelope(div, make_area(), Eigen::Vector2d(0.4, 0.1), cfg);
  check(res.value >= make_area()->value(Eigen::Vector2d(0.4, 0.1)) - 1e-6 &&
            res.value <= res.zero_field_energy + 1e-12,
        "convex envelope identity");
}

void selftest_certify() {
  // elementary measure of an A-free field passes
  const auto& div = gallery("divergence_2d");
  BoxDomain dom;
  dom.lo = Eigen::Vector2d(0, 0);
  dom.hi = Eigen::Vector2d(1, 1);
  dom.cells_per_axis = {8, 8};
  DiscreteMeasure mu(dom, 2);
  for (std::size_t cell = 0; cell < dom.cell_count(); ++cell) {
    Eigen::VectorXd x = dom.cell_center(cell);
    // w = rotated gradient of sin(2 pi x1): divergence-free
    Eigen::Vector2d w(0.0, -2 * std::numbers::pi * std::cos(2 * std::numbers::pi * x[0]));
    mu.set_density(cell, w);
  }
  auto family = default_qc_family(div, false);
  CertificateReport rep = jensen_certificate(elementary(mu), div, family);
  check(rep.pass(), "elementary certificate passes");
}

void selftest_generate() {
  // constant sequence: pairing is exact at every stage
  TorusField w(2, 16, 2);
  for (std::size_t i = 0; i < w.cells(); ++i) w.at(0, i) = 0.6;
  std::vector<TorusField> seq(4, w);
  GenerationTest t{make_norm(), nullptr, "norm"};
  auto series = generation_estimate(seq, std::span<const GenerationTest>(&t, 1));
  for (double v : series[0].values) check(near(v, 0.6, 1e-13), "constant sequence pairing");
}

void selftest_approx() {
  const auto& div = gallery("divergence_2d");
  BoxDomain dom;
  dom.lo = Eigen::Vector2d(0, 0);
  dom.hi = Eigen::Vector2d(1, 1);
  dom.cells_per_axis = {16, 16};
  DiscreteMeasure zero(dom, 2);
  auto run = area_strict_run(div, zero, {0.1, 0.05}, 32);
  for (const auto& st : run.stages)
    check(near(st.area, 1.0, 1e-12) && st.mass < 1e-12, "zero measure run");
  // constant density reproduces itself interiorly -- use a bump-free check via
  // the atom mass integral instead (margin rules exclude full-box support)
  DiscreteMeasure atom(dom, 2);
  MeasureAtom a;
  a.x = Eigen::Vector2d(0.5, 0.5);
  a.mass = 1.0;
  a.direction = Eigen::Vector2d(1, 0);
  atom.add_atom(a);
  TorusField u = mollify(atom, {0.1, 4}, 64);
  double integral = 0.0;
  for (std::size_t i = 0; i < u.cells(); ++i) integral += u.at(0, i);
  integral /= static_cast<double>(u.cells());
  check(near(integral, 1.0, 1e-10), "mollified atom keeps unit mass");
}

void selftest_pair() {
  BoxDomain dom;
  dom.lo = Eigen::Vector2d(0, 0);
  dom.hi = Eigen::Vector2d(1, 1);
  dom.cells_per_axis = {4, 4};
  DiscreteYoungMeasure ym(dom, 2);
  Eigen::Vector2d a(0.3, 0.4);
  ym.set_nu_everywhere({{1.0, a}});
  ym.set_lambda_density_everywhere(1.0);
  Eigen::Vector2d e(1, 0);
  ym.set_nu_inf_everywhere({{0.5, e}, {0.5, -e}});
  PairingReport rep = pairing(*make_norm(), ym);
  check(near(rep.value, a.norm() + 1.0, 1e-12), "pairing of (delta_a, L^d, (e,-e)/2)");
  check(near(rep.oscillation_part, a.norm(), 1e-12), "oscillation part");
  // barycenter of zero-mean directions keeps only the density
  DiscreteMeasure bary = barycenter(ym);
  for (std::size_t cell = 0; cell < bary.domain().cell_count(); ++cell)
    check((bary.density(cell) - a).norm() < 1e-13, "barycenter density");
}

// --------------------------------------------------------------------------

int cmd_audit(const GlobalOpts& g, const std::string& op_spec, int samples) {
  LinearOperator op = resolve_operator(op_spec);
  ConeReport rep = constant_rank_audit(op, samples);
  Report out;
  out.add("operator", op.name());
  out.add("samples", static_cast<long long>(rep.samples.size()));
  out.add("constant_rank", rep.constant_rank);
  out.add("rank_min", static_cast<long long>(rep.rank_min));
  out.add("rank_max", static_cast<long long>(rep.rank_max));
  if (rep.constant_rank) out.add("r", static_cast<long long>(rep.r));
  out.add("span_dim", static_cast<long long>(rep.span_dim()));
  out.add("kernels_isa", kern::isa_name(kern::active_isa()));
  emit(out, g);
  return rep.constant_rank ? kExitOk : kExitRejected;
}

int cmd_cone(const GlobalOpts& g, const std::string& op_spec, const std::string& vec,
             bool image) {
  LinearOperator op = resolve_operator(op_spec);
  Eigen::VectorXd w = parse_vector(vec);
  MembershipResult res = image ? image_cone_membership(op, w, g.tol, g.seed)
                               : wave_cone_membership(op, w, g.tol, g.seed);
  Report out;
  out.add("operator", op.name());
  out.add("cone", image ? "image" : "wave");
  out.add("member", res.member);
  out.add("min_value", res.value);
  for (int j = 0; j < res.witness.size(); ++j)
    out.add("witness_" + std::to_string(j), res.witness[j]);
  emit(out, g);
  return kExitOk;
}

int cmd_exactness(const GlobalOpts& g, const std::string& a_spec, const std::string& b_spec,
                  int samples, double tol) {
  LinearOperator a = resolve_operator(a_spec);
  LinearOperator b = resolve_operator(b_spec);
  ExactnessReport rep = exactness_check(a, b, samples, tol);
  Report out;
  out.add("annihilator", a.name());
  out.add("potential", b.name());
  out.add("pass", rep.pass);
  out.add("dims_match", rep.dims_match);
  out.add("max_gap", rep.max_gap);
  emit(out, g);
  return rep.pass ? kExitOk : kExitRejected;
}

int cmd_project(const GlobalOpts& g, const std::string& op_spec, const std::string& field_path,
                const std::string& out_prefix) {
  LinearOperator op = resolve_operator(op_spec);
  TorusField u = read_field(field_path);
  RepresentativeResult rep = a_representative_detailed(op, u);
  TorusField z = afree_part(op, u);
  Report out;
  out.add("operator", op.name());
  out.add("formula_gap", rep.formula_gap);
  Eigen::VectorXd m = u.mean();
  for (int c = 0; c < m.size(); ++c) out.add("mean_" + std::to_string(c), m[c]);
  out.add("representative_norm", sobolev_norm(rep.field, {0.0}));
  out.add("afree_part_norm", sobolev_norm(z, {0.0}));
  TorusField az = apply_operator(op, z);
  out.add("afree_residual",
          sobolev_norm(az, {-static_cast<double>(op.order())}) /
              std::max(sobolev_norm(z, {0.0}), 1e-30));
  if (!out_prefix.empty()) {
    write_field(rep.field, out_prefix + ".representative.afb");
    write_field(z, out_prefix + ".afree.afb");
  }
  emit(out, g);
  return kExitOk;
}

int cmd_envelope(const GlobalOpts& g, const std::string& op_spec, const std::string& expr,
                 const std::string& point, int cutoff, int restarts, int iters) {
  LinearOperator op = resolve_operator(op_spec);
  IntegrandPtr f = parse_integrand(expr);
  Eigen::VectorXd z = parse_vector(point);
  EnvelopeConfig cfg;
  cfg.grid_n = g.grid;
  cfg.seed = g.seed;
  cfg.restarts = restarts;
  cfg.max_iters = iters;
  cfg.k_schedule = cutoff > 4 ? std::vector<int>{4, cutoff} : std::vector<int>{cutoff};
  EnvelopeResult res = quasiconvex_envelope(op, f, z, cfg);
  Report out;
  out.add("operator", op.name());
  out.add("integrand", f->describe());
  out.add("value", res.value);
  out.add("zero_field_energy", res.zero_field_energy);
  out.add("truncation", static_cast<long long>(res.truncation));
  out.add("restarts_used", static_cast<long long>(res.restarts_used));
  out.add("afree_residual", res.afree_residual);
  out.add("diverged", res.diverged);
  for (std::size_t i = 0; i < res.k_values.size(); ++i)
    out.add("value_K" + std::to_string(cfg.k_schedule[i]), res.k_values[i]);
  for (std::size_t i = 0; i < res.smoothing_values.size(); ++i)
    out.add("value_smooth_stage" + std::to_string(i), res.smoothing_values[i]);
  emit(out, g);
  return kExitOk;
}

int cmd_certify(const GlobalOpts& g, const std::string& op_spec, const std::string& ym_path,
                bool no_numeric) {
  LinearOperator op = resolve_operator(op_spec);
  DiscreteYoungMeasure ym = read_young_measure(ym_path);
  auto family = default_qc_family(op, !no_numeric);
  CertificateReport rep = jensen_certificate(ym, op, family);
  Report out;
  out.add("operator", op.name());
  out.add("pass", rep.pass());
  out.add("pass_barycenter", rep.pass_barycenter);
  out.add("pass_jensen", rep.pass_jensen);
  out.add("pass_support", rep.pass_support);
  out.add("barycenter_residual", rep.barycenter_residual);
  out.add("worst_jensen_slack", rep.worst_jensen_slack);
  out.add("worst_jensen_member", rep.worst_jensen_member);
  out.add("worst_support_distance", rep.worst_support_distance);
  emit(out, g);
  return rep.pass() ? kExitOk : kExitRejected;
}

int cmd_generate(const GlobalOpts& g, const std::string& op_spec, const std::string& mode,
                 const std::string& expr, const std::string& direction, int stages) {
  LinearOperator op = resolve_operator(op_spec);
  Report out;
  out.add("operator", op.name());
  out.add("mode", mode);
  if (mode == "concentration") {
    ConcentrationSpec spec;
    spec.base = Eigen::VectorXd::Zero(op.fiber_in());
    spec.lambda_density = [](const Eigen::VectorXd&) { return 1.0; };
    Eigen::VectorXd e = parse_vector(direction);
    e /= e.norm();
    spec.p = {{0.5, e}, {0.5, -e}};
    spec.n_stages = stages;
    spec.grid_n = g.grid;
    spec.seed = g.seed;
    auto built = concentration_builder(op, spec);
    std::vector<TorusField> fields;
    for (auto& st : built) fields.push_back(std::move(st.field));
    GenerationTest test{parse_integrand(expr), nullptr, "test"};
    auto series = generation_estimate(fields, std::span<const GenerationTest>(&test, 1));
    for (std::size_t j = 0; j < series[0].values.size(); ++j) {
      out.add("value_stage" + std::to_string(j), series[0].values[j]);
      out.add("support_fraction_stage" + std::to_string(j), built[j].support_fraction);
      out.add("commutator_residual_stage" + std::to_string(j), built[j].commutator_residual);
    }
    out.add("limit", series[0].limit);
    out.add("error_bar", series[0].error_bar);
    out.add("converged", series[0].converged);
  } else if (mode == "homogenize") {
    // w_j(x) = W(j x) for the bundled mean-zero profile, j in {1,2,4,8,16}
    const int n = g.grid;
    TorusField profile(op.dimension(), n, op.fiber_in());
    for (std::size_t cell = 0; cell < profile.cells(); ++cell) {
      Eigen::VectorXd y = profile.position(cell);
      profile.at(0, cell) = std::sin(2 * std::numbers::pi * y[0]) +
                            0.4 * std::sin(4 * std::numbers::pi * y[0]);
    }
    std::vector<TorusField> fields;
    for (int j : {1, 2, 4, 8, 16}) {
      TorusField w(op.dimension(), n, op.fiber_in());
      std::array<int, 3> idx{};
      for (std::size_t cell = 0; cell < w.cells(); ++cell) {
        w.cell_coords(cell, idx);
        std::array<int, 3> src{};
        for (int k = 0; k < op.dimension(); ++k) src[k] = (idx[k] * j) % n;
        for (int c = 0; c < w.fiber(); ++c) w.at(c, cell) = profile.at(c, w.cell_index(src));
      }
      fields.push_back(std::move(w));
    }
    const double L = 1.0;
    GenerationTest test{parse_integrand(expr),
                        [L](const Eigen::VectorXd& x) {
                          return 1.0 / (1.25 - std::cos(2 * std::numbers::pi * x[0] / L));
                        },
                        "weighted"};
    auto series = generation_estimate(fields, std::span<const GenerationTest>(&test, 1));
    for (std::size_t j = 0; j < series[0].values.size(); ++j)
      out.add("value_j" + std::to_string(j), series[0].values[j]);
    out.add("limit", series[0].limit);
    out.add("error_bar", series[0].error_bar);
    out.add("converged", series[0].converged);
  } else {
    throw std::runtime_error("generate: mode must be 'concentration' or 'homogenize'");
  }
  emit(out, g);
  return kExitOk;
}

int cmd_approx(const GlobalOpts& g, const std::string& op_spec, const std::string& target,
               const std::string& schedule, double box, const std::string& field_out) {
  LinearOperator op = resolve_operator(op_spec);
  DiscreteMeasure mu;
  if (target == "circle") {
    BoxDomain dom;
    dom.lo = Eigen::Vector2d(0, 0);
    dom.hi = Eigen::Vector2d(box, box);
    dom.cells_per_axis = {g.grid, g.grid};
    mu = make_circle_measure(dom, Eigen::Vector2d(box / 2, box / 2), 1.0, 256);
  } else {
    mu = read_discrete_measure(target);
  }
  const double h = (mu.domain().hi[0] - mu.domain().lo[0]) / g.grid;
  std::vector<double> eps;
  {
    std::stringstream ss(schedule);
    std::string tok;
    while (std::getline(ss, tok, ',')) eps.push_back(std::stod(tok) * h);
  }
  ApproximationRun run = area_strict_run(op, mu, eps, g.grid);
  // CSV of (eps, area, weak-* errors, residuals); one row per stage
  std::ostringstream csv;
  csv << "eps,area,target_area,mass,residual_rel";
  for (std::size_t t = 0; t < run.stages.front().weak_star_errors.size(); ++t)
    csv << ",weak_err" << t;
  csv << "\n";
  for (const auto& st : run.stages) {
    csv << format_sig(st.epsilon) << "," << format_sig(st.area) << ","
        << format_sig(run.target_area) << "," << format_sig(st.mass) << ","
        << format_sig(st.residual_rel);
    for (double e : st.weak_star_errors) csv << "," << format_sig(e);
    csv << "\n";
  }
  if (!g.out.empty()) {
    std::ofstream f(g.out);
    f << csv.str();
  } else {
    std::cout << csv.str();
  }
  if (!field_out.empty()) write_field(run.fields.back(), field_out);
  return kExitOk;
}

int cmd_pair(const GlobalOpts& g, const std::string& ym_path, const std::string& expr) {
  DiscreteYoungMeasure ym = read_young_measure(ym_path);
  IntegrandPtr f = parse_integrand(expr);
  PairingReport rep = pairing(*f, ym);
  Report out;
  out.add("integrand", rep.integrand);
  out.add("value", rep.value);
  out.add("oscillation_part", rep.oscillation_part);
  out.add("concentration_part", rep.concentration_part);
  emit(out, g);
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"afree: constant-rank operator toolkit (wave cones, spectral projections, "
               "quasiconvex envelopes, Young-measure calculus)"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOpts g;
  app.add_option("--grid", g.grid, "grid points per axis (power of two)");
  app.add_option("--tol", g.tol, "membership tolerance");
  app.add_option("--seed", g.seed, "random seed (fixed seed => stable report)");
  app.add_option("--out", g.out, "report output path (default stdout)");
  app.add_option("--format", g.format, "report format: structured-text | csv");
  app.add_option("--threads", g.threads, "worker thread budget (0 = all cores)");

  std::string op_spec, opb_spec, vec, field_path, out_prefix, ym_path, expr, point,
      mode = "concentration", direction = "1,0", target = "circle", schedule = "16,8,4",
      field_out;
  int samples = 256, cutoff = 8, restarts = 8, iters = 500, stages = 3;
  double pair_tol = 1e-10, box = 24.0;
  bool image = false, selftest = false, no_numeric = false;

  auto* audit = app.add_subcommand("audit", "constant-rank audit of an operator");
  audit->add_option("--op", op_spec, "operator file or gallery name");
  audit->add_option("--samples", samples, "sphere sample count");
  audit->add_flag("--selftest", selftest, "run the built-in examples and exit");

  auto* cone = app.add_subcommand("cone", "wave/image cone membership");
  cone->add_option("--op", op_spec, "operator file or gallery name");
  cone->add_option("--vector", vec, "amplitude, comma separated");
  cone->add_flag("--image", image, "test the image cone of a potential");
  cone->add_flag("--selftest", selftest);

  auto* exact = app.add_subcommand("exactness", "im B(xi) = ker A(xi) check");
  exact->add_option("--opA", op_spec, "annihilator");
  exact->add_option("--opB", opb_spec, "potential");
  exact->add_option("--samples", samples);
  exact->add_option("--pair-tol", pair_tol, "principal angle tolerance");
  exact->add_flag("--selftest", selftest);

  auto* project = app.add_subcommand("project", "A-representative and A-free part of a field");
  project->add_option("--op", op_spec);
  project->add_option("--field", field_path, "input field (.afb)");
  project->add_option("--out-prefix", out_prefix, "write component fields");
  project->add_flag("--selftest", selftest);

  auto* envelope = app.add_subcommand("envelope", "A-quasiconvex envelope upper bound");
  envelope->add_option("--op", op_spec);
  envelope->add_option("--integrand", expr, "integrand DSL expression");
  envelope->add_option("--point", point, "base point, comma separated");
  envelope->add_option("--K", cutoff, "frequency cutoff");
  envelope->add_option("--restarts", restarts);
  envelope->add_option("--iters", iters);
  envelope->add_flag("--selftest", selftest);

  auto* certify = app.add_subcommand("certify", "characterization certificate for a Young measure");
  certify->add_option("--op", op_spec);
  certify->add_option("--ym", ym_path, "young measure file");
  certify->add_flag("--no-numeric-envelope", no_numeric,
                    "family without the numeric double-well envelope");
  certify->add_flag("--selftest", selftest);

  auto* generate = app.add_subcommand("generate", "generation estimates along built sequences");
  generate->add_option("--op", op_spec);
  generate->add_option("--mode", mode, "concentration | homogenize");
  generate->add_option("--integrand", expr);
  generate->add_option("--direction", direction, "concentration direction");
  generate->add_option("--stages", stages);
  generate->add_flag("--selftest", selftest);

  auto* approx = app.add_subcommand("approx", "area-strict approximation run");
  approx->add_option("--op", op_spec);
  approx->add_option("--target", target, "'circle' or a measure file");
  approx->add_option("--schedule", schedule, "epsilon schedule in grid units, e.g. 16,8,4");
  approx->add_option("--box", box, "torus box side for the bundled circle target");
  approx->add_option("--field-out", field_out, "write the final stage field (.afb)");
  approx->add_flag("--selftest", selftest);

  auto* pair = app.add_subcommand("pair", "duality pairing <<f, nu>>");
  pair->add_option("--ym", ym_path, "young measure file");
  pair->add_option("--integrand", expr);
  pair->add_flag("--selftest", selftest);

  CLI11_PARSE(app, argc, argv);
  set_thread_budget(g.threads);

  try {
    if (audit->parsed()) {
      if (selftest) {
        selftest_audit();
        return kExitOk;
      }
      return cmd_audit(g, op_spec, samples);
    }
    if (cone->parsed()) {
      if (selftest) {
        selftest_cone();
        return kExitOk;
      }
      return cmd_cone(g, op_spec, vec, image);
    }
    if (exact->parsed()) {
      if (selftest) {
        selftest_exactness();
        return kExitOk;
      }
      return cmd_exactness(g, op_spec, opb_spec, samples, pair_tol);
    }
    if (project->parsed()) {
      if (selftest) {
        selftest_project();
        return kExitOk;
      }
      return cmd_project(g, op_spec, field_path, out_prefix);
    }
    if (envelope->parsed()) {
      if (selftest) {
        selftest_envelope();
        return kExitOk;
      }
      return cmd_envelope(g, op_spec, expr, point, cutoff, restarts, iters);
    }
    if (certify->parsed()) {
      if (selftest) {
        selftest_certify();
        return kExitOk;
      }
      return cmd_certify(g, op_spec, ym_path, no_numeric);
    }
    if (generate->parsed()) {
      if (selftest) {
        selftest_generate();
        return kExitOk;
      }
      return cmd_generate(g, op_spec, mode, expr, direction, stages);
    }
    if (approx->parsed()) {
      if (selftest) {
        selftest_approx();
        return kExitOk;
      }
      return cmd_approx(g, op_spec, target, schedule, box, field_out);
    }
    if (pair->parsed()) {
      if (selftest) {
        selftest_pair();
        return kExitOk;
      }
      return cmd_pair(g, ym_path, expr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
