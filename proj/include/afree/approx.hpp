#ifndef AFREE_APPROX_HPP
#define AFREE_APPROX_HPP

#include <optional>
#include <vector>

#include "afree/linear_operator.hpp"
#include "afree/measure.hpp"
#include "afree/torus_field.hpp"

namespace afree {

/// Radial polynomial bump (1-(r/eps)^2)^order, unit mass after discrete
/// normalization; eps in box units.
struct Mollifier {
  double epsilon = 0.0;
  int order = 4;
};

/// Measure -> smooth grid field at scale eps on the torus embedding of the
/// measure's box. Total integral preserved exactly in the discrete sense;
/// throws if the support margin to the box boundary is under 2 eps.
TorusField mollify(const DiscreteMeasure& mu, const Mollifier& moll, int grid_n);

/// A-free corrector: w = u - T[u] (plus the Nyquist floor for odd-order
/// symbols), with the mean restored to reference_mean when given. The result
/// is A-free frequency-wise; |w - u| is controlled by |T[u]|.
TorusField afree_correct(const LinearOperator& op, const TorusField& u,
                         const Eigen::VectorXd* reference_mean = nullptr);

struct StageDiagnostics {
  double epsilon = 0.0;          // box units
  double area = 0.0;             // area functional of w L^d over the box
  double mass = 0.0;             // int |w|
  double residual_rel = 0.0;     // |A w|_{s=-k} / |w|_{s=0}
  double t_norm_ratio = 0.0;     // |T[u]| / |u| before correction
  std::vector<double> weak_star_errors;  // per test function (max over fibers)
};

struct ApproximationRun {
  double target_area = 0.0;
  double target_tv = 0.0;
  double box_side = 0.0;
  std::vector<StageDiagnostics> stages;
  std::vector<TorusField> fields;
  std::vector<TorusField> potentials;     // bgradient runs only
  std::vector<double> potential_errors;   // |u_j - u_target|_{s=0}, if target given
};

/// Area-strict approximation of an A-free measure by smooth A-free fields:
/// mollify at each scale in the schedule, correct, log diagnostics.
ApproximationRun area_strict_run(const LinearOperator& op, const DiscreteMeasure& mu,
                                 const std::vector<double>& eps_schedule, int grid_n);

/// Potential variant: corrected stages are lifted through potential_solve of
/// the verified pair (op_a annihilates op_b). Targets live on the unit box.
ApproximationRun bgradient_run(const LinearOperator& op_b, const LinearOperator& op_a,
                               const DiscreteMeasure& z_mu,
                               const std::vector<double>& eps_schedule, int grid_n,
                               const TorusField* u_target = nullptr);

} // namespace afree

#endif
