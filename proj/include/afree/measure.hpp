#ifndef AFREE_MEASURE_HPP
#define AFREE_MEASURE_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "afree/torus_field.hpp"

namespace afree {

/// Axis-aligned box with a uniform cell grid.
struct BoxDomain {
  Eigen::VectorXd lo, hi;
  std::vector<int> cells_per_axis;

  int dim() const { return static_cast<int>(lo.size()); }
  std::size_t cell_count() const;
  double cell_volume() const;
  double volume() const;
  Eigen::VectorXd cell_center(std::size_t cell) const;
  std::size_t locate(const Eigen::VectorXd& x) const;  // containing cell (clamped)
  bool strictly_inside(const Eigen::VectorXd& x, double margin) const;
  void validate() const;
};

struct MeasureAtom {
  Eigen::VectorXd x;
  double mass = 0.0;           // > 0
  Eigen::VectorXd direction;   // unit vector in W
};

/// Density-plus-atoms discretization of a W-valued Radon measure:
/// mu = density L^d + sum_i mass_i direction_i delta_{x_i}.
class DiscreteMeasure {
public:
  DiscreteMeasure() = default;
  DiscreteMeasure(BoxDomain domain, int fiber);

  const BoxDomain& domain() const { return domain_; }
  int fiber() const { return fiber_; }

  Eigen::VectorXd density(std::size_t cell) const;
  void set_density(std::size_t cell, const Eigen::VectorXd& v);
  const std::vector<double>& density_raw() const { return density_; }

  const std::vector<MeasureAtom>& atoms() const { return atoms_; }
  void add_atom(MeasureAtom a);

  double total_variation() const;
  Eigen::VectorXd integral() const;  // mu(box)

private:
  BoxDomain domain_;
  int fiber_ = 0;
  std::vector<double> density_;  // [cell * fiber + c]
  std::vector<MeasureAtom> atoms_;
};

/// Generalized area functional: integral of sqrt(1+|density|^2) plus the
/// atomic total variation.
double area_functional(const DiscreteMeasure& mu);

/// Unit-tangent line measure on a circle, discretized as equispaced atoms
/// (total variation = circumference, divergence-free as a current).
DiscreteMeasure make_circle_measure(const BoxDomain& domain, const Eigen::Vector2d& center,
                                    double radius, int n_atoms = 256);

/// Density + atoms binned onto the N^d torus grid (values are densities in
/// box units; the box maps onto the unit torus).
TorusField rasterize(const DiscreteMeasure& mu, int grid_n);

/// Spectral Gaussian smoothing at scale eps (in box-side units).
TorusField smooth_field(const TorusField& u, double eps);

// Measure file format (structured text; see README).
DiscreteMeasure read_discrete_measure(const std::string& path);
void write_discrete_measure(const DiscreteMeasure& mu, const std::string& path);

} // namespace afree

#endif
