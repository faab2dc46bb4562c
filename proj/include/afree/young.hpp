#ifndef AFREE_YOUNG_HPP
#define AFREE_YOUNG_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "afree/integrand.hpp"
#include "afree/linear_operator.hpp"
#include "afree/measure.hpp"
#include "afree/torus_field.hpp"

namespace afree {

struct WeightedPoint {
  double weight = 0.0;
  Eigen::VectorXd point;
};
using AtomicProb = std::vector<WeightedPoint>;  // weights sum to 1

double prob_weight_sum(const AtomicProb& p);
Eigen::VectorXd prob_mean(const AtomicProb& p);

struct LambdaAtom {
  Eigen::VectorXd x;
  double mass = 0.0;
};

/// Discretized generalized Young measure (nu, lambda, nu_inf): per-cell
/// atomic probability on W, a non-negative scalar concentration measure
/// (density + atoms), and atomic probabilities on the unit sphere at every
/// lambda-site. Atoms must sit strictly inside the domain (the lambda(dOmega)=0
/// class); densities never charge the boundary.
class DiscreteYoungMeasure {
public:
  DiscreteYoungMeasure() = default;
  DiscreteYoungMeasure(BoxDomain domain, int fiber);

  const BoxDomain& domain() const { return domain_; }
  int fiber() const { return fiber_; }
  std::size_t cells() const { return domain_.cell_count(); }

  // oscillation part
  const AtomicProb& nu(std::size_t cell) const { return nu_[cell]; }
  void set_nu(std::size_t cell, AtomicProb p);
  void set_nu_everywhere(const AtomicProb& p);

  // concentration measure
  double lambda_density(std::size_t cell) const { return lambda_density_[cell]; }
  void set_lambda_density(std::size_t cell, double v);
  void set_lambda_density_everywhere(double v);
  const std::vector<LambdaAtom>& lambda_atoms() const { return lambda_atoms_; }
  void add_lambda_atom(LambdaAtom a, AtomicProb nu_inf);

  // concentration-direction probabilities
  const AtomicProb& nu_inf_cell(std::size_t cell) const { return nu_inf_cells_[cell]; }
  void set_nu_inf_cell(std::size_t cell, AtomicProb p);
  void set_nu_inf_everywhere(const AtomicProb& p);
  const AtomicProb& nu_inf_atom(std::size_t atom) const { return nu_inf_atoms_[atom]; }

  double lambda_total() const;
  bool has_concentration() const;
  void validate() const;  // probability sums, unit directions, interior atoms

private:
  BoxDomain domain_;
  int fiber_ = 0;
  std::vector<AtomicProb> nu_;
  std::vector<double> lambda_density_;
  std::vector<LambdaAtom> lambda_atoms_;
  std::vector<AtomicProb> nu_inf_cells_;
  std::vector<AtomicProb> nu_inf_atoms_;
};

using SpatialWeight = std::function<double(const Eigen::VectorXd&)>;

struct PairingReport {
  double value = 0.0;
  double oscillation_part = 0.0;
  double concentration_part = 0.0;
  std::string integrand;
};

/// <<f, nu>> = int <f,nu_x> dx + int <f_inf, nu_inf> dlambda, with
/// f(x,z) = weight(x) h(z). Requires an analytic strong recession when the
/// concentration measure is nonzero.
PairingReport pairing(const Integrand& h, const DiscreteYoungMeasure& ym,
                      const SpatialWeight& weight = nullptr);

/// [nu] = <id,nu> L^d + <id,nu_inf> lambda.
DiscreteMeasure barycenter(const DiscreteYoungMeasure& ym);

/// delta_mu = (delta_{ac mu}, |mu^s|, delta_{polar direction}).
DiscreteYoungMeasure elementary(const DiscreteMeasure& mu);

/// v-shift: nu_x points translated by v(x); lambda and nu_inf unchanged.
DiscreteYoungMeasure shift(const DiscreteYoungMeasure& ym,
                           const std::vector<Eigen::VectorXd>& v);

struct GenerationTest {
  IntegrandPtr h;
  SpatialWeight weight;  // nullptr = 1
  std::string name;
};

struct GenerationSeries {
  std::string name;
  std::vector<double> values;  // <<f, delta_{w_j}>>
  double limit = 0.0;          // Aitken-extrapolated tail
  double error_bar = 0.0;      // last-three spread
  bool converged = false;
};

/// Evaluate <<f, delta_{w_j L^d}>> along a field sequence and extrapolate.
std::vector<GenerationSeries> generation_estimate(std::span<const TorusField> fields,
                                                  std::span<const GenerationTest> tests);

// -------------------------------------------------------------------------
// admissibility certificate

struct QcFamilyMember {
  IntegrandPtr h;
  bool analytic = true;  // false: numeric envelope member, wider slack
  std::string name;
};

struct CertificateOptions {
  double jensen_tol_analytic = 1e-9;
  double jensen_tol_numeric = 5e-2;
  double support_tol = 1e-8;
  double barycenter_tol = 5e-2;
  int barycenter_grid = 64;
  double site_density_floor = 1e-12;
  // A-freeness is a statement against interior test functions; a positive
  // margin windows the residual away from the embedding boundary (needed for
  // free-space constructions that are not torus-periodic)
  double interior_margin = 0.0;
};

struct CertificateReport {
  bool pass_barycenter = false;  // (i)  A [nu] = 0 (mollified surrogate norm)
  bool pass_jensen = false;      // (ii) Jensen inequality for the family
  bool pass_support = false;     // (iii) supp nu_inf inside W_A at lambda-sites
  double barycenter_residual = 0.0;
  double worst_jensen_slack = 0.0;
  std::string worst_jensen_member;
  std::size_t worst_jensen_cell = 0;
  double worst_support_distance = 0.0;
  bool pass() const { return pass_barycenter && pass_jensen && pass_support; }
};

/// Sound-but-incomplete executable certificate of the characterization
/// conditions (i)-(iii); quantifying over all A-quasiconvex integrands is
/// untestable, so (ii) runs over the supplied family only.
CertificateReport jensen_certificate(const DiscreteYoungMeasure& ym, const LinearOperator& op,
                                     std::span<const QcFamilyMember> family,
                                     const CertificateOptions& opt = {});

/// Bundled family: convex radial integrands, shifted norms, the tilde
/// projection of the norm, and (for spanning wave cones) a numerically
/// enveloped radial double well flagged "numeric".
std::vector<QcFamilyMember> default_qc_family(const LinearOperator& op,
                                              bool include_numeric_envelope = true);

// -------------------------------------------------------------------------
// Constructive generators

struct ConcentrationSpec {
  Eigen::VectorXd base;                      // A
  std::function<double(const Eigen::VectorXd&)> lambda_density;  // >= 0 on the torus; may be null
  std::vector<LambdaAtom> lambda_atoms;      // point concentrations
  AtomicProb p;                              // zero-mean probability on S_W cap W_A
  int n_stages = 3;
  int grid_n = 256;
  std::uint64_t seed = 6720;
};

struct ConcentrationStage {
  TorusField field;
  double mass = 0.0;               // int |w - A|
  double support_fraction = 0.0;   // fraction of cells carrying the packets
  double commutator_residual = 0.0;  // |A w|_{s=-k} relative to stage mass
};

/// Fields w_j = A + plane-wave packets that generate (delta_A, lambda, p):
/// per p-atom, oscillation profiles along an integer wave-cone witness,
/// localized by bump partitions whose discrete mass matches c_i lambda.
std::vector<ConcentrationStage> concentration_builder(const LinearOperator& op,
                                                      const ConcentrationSpec& spec);

struct FlexibilityResult {
  TorusField w;                  // kernel-convolution potential field
  TorusField w_spectral;         // spectral cross-validation solve
  double div_residual = 0.0;     // |div(w) + <id,p>.D lambda|_{s=-1} relative
  double cross_validation = 0.0;  // relative L2 gap between the two solves
  DiscreteYoungMeasure triple;   // (delta_w, lambda, p)
  CertificateReport certificate;
};

/// The divergence-flexibility construction w = -(<id,p>.D lambda) * Phi with
/// the truncated, flux-renormalized fundamental solution Phi = c_d x/|x|^d.
FlexibilityResult divergence_flexibility(const TorusField& lambda_field, const AtomicProb& p,
                                         double residual_tol = 1e-2);

// -------------------------------------------------------------------------
// Young-measure file format (structured text; see README)

DiscreteYoungMeasure read_young_measure(const std::string& path);
void write_young_measure(const DiscreteYoungMeasure& ym, const std::string& path);

} // namespace afree

#endif
