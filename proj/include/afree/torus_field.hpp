#ifndef AFREE_TORUS_FIELD_HPP
#define AFREE_TORUS_FIELD_HPP

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace afree {

/// Real W-valued field sampled on the uniform N^d lattice of the unit torus,
/// x_i = i/N. Storage is planar (component-major), each component contiguous
/// in row-major cell order.
class TorusField {
public:
  TorusField() = default;
  TorusField(int d, int n, int fiber);

  int dim() const { return d_; }
  int grid_n() const { return n_; }
  int fiber() const { return fiber_; }
  std::size_t cells() const { return cells_; }

  double* component(int c) { return data_.data() + static_cast<std::size_t>(c) * cells_; }
  const double* component(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * cells_;
  }
  double& at(int c, std::size_t cell) { return data_[static_cast<std::size_t>(c) * cells_ + cell]; }
  double at(int c, std::size_t cell) const {
    return data_[static_cast<std::size_t>(c) * cells_ + cell];
  }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  void setZero() { std::fill(data_.begin(), data_.end(), 0.0); }

  // lattice index <-> flat cell
  std::size_t cell_index(const std::array<int, 3>& idx) const;
  void cell_coords(std::size_t cell, std::array<int, 3>& idx) const;
  // sample position of a cell, x = i/N per axis
  Eigen::VectorXd position(std::size_t cell) const;

  Eigen::VectorXd mean() const;
  double rms() const;  // sqrt(grid mean of |u|^2)

  TorusField& operator+=(const TorusField& o);
  TorusField& operator-=(const TorusField& o);
  TorusField& operator*=(double s);

private:
  int d_ = 0, n_ = 0, fiber_ = 0;
  std::size_t cells_ = 0;
  std::vector<double> data_;
};

/// Trigonometric coefficients of a real field in r2c half-lattice layout:
/// last axis stores frequencies 0..N/2, other axes the full 0..N-1 (integer
/// frequency j or j-N). Entry scaling is the e^{2 pi i x.xi} series
/// coefficient, so inverse(transform(u)) == u.
class Spectrum {
public:
  Spectrum() = default;
  Spectrum(int d, int n, int fiber);

  int dim() const { return d_; }
  int grid_n() const { return n_; }
  int fiber() const { return fiber_; }
  std::size_t bins() const { return bins_; }  // per component

  std::complex<double>* component(int c) { return data_.data() + static_cast<std::size_t>(c) * bins_; }
  const std::complex<double>* component(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * bins_;
  }

  // integer frequency vector of a flat bin
  void frequency(std::size_t bin, std::array<int, 3>& xi) const;
  // # of full-lattice points this stored bin represents (1 on the
  // self-conjugate planes, else 2)
  int multiplicity(std::size_t bin) const;
  // true if any component sits at the Nyquist frequency -N/2
  bool has_nyquist(std::size_t bin) const;

  std::vector<std::complex<double>>& raw() { return data_; }
  const std::vector<std::complex<double>>& raw() const { return data_; }

private:
  int d_ = 0, n_ = 0, fiber_ = 0;
  std::size_t bins_ = 0;
  std::vector<std::complex<double>> data_;
};

Spectrum fft_forward(const TorusField& u);
TorusField fft_inverse(const Spectrum& s);

/// Random real field with spectrum supported on |xi|_inf <= band (defaults to
/// N/4); keeps spectral identities exact under the Nyquist conventions.
class Rng;
TorusField random_band_limited_field(int d, int n, int fiber, Rng& rng, int band = -1,
                                     double amplitude = 1.0);

// Field file I/O (binary header: magic "AFB1", u32 d, grid_n, fiber; payload
// row-major cells x fiber interleaved little-endian doubles). CSV for d<=2.
void write_field(const TorusField& u, const std::string& path);
TorusField read_field(const std::string& path);
void write_field_csv(const TorusField& u, const std::string& path);

} // namespace afree

#endif
