#include "afree/torus_field.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>

#include "afree/rng.hpp"

namespace afree {

namespace {

std::size_t ipow(int base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= static_cast<std::size_t>(base);
  return r;
}

void check_dims(int d, int n, int fiber) {
  if (d < 1 || d > 3) throw std::invalid_argument("TorusField: d must be 1..3");
  if (n < 2 || (n & (n - 1)) != 0)
    throw std::invalid_argument("TorusField: grid_n must be a power of two >= 2");
  if (fiber < 1 || fiber > 8) throw std::invalid_argument("TorusField: fiber must be 1..8");
}

} // namespace

TorusField::TorusField(int d, int n, int fiber) : d_(d), n_(n), fiber_(fiber) {
  check_dims(d, n, fiber);
  cells_ = ipow(n, d);
  data_.assign(cells_ * static_cast<std::size_t>(fiber), 0.0);
}

std::size_t TorusField::cell_index(const std::array<int, 3>& idx) const {
  std::size_t cell = 0;
  for (int j = 0; j < d_; ++j) {
    int i = idx[j] % n_;
    if (i < 0) i += n_;
    cell = cell * n_ + static_cast<std::size_t>(i);
  }
  return cell;
}

void TorusField::cell_coords(std::size_t cell, std::array<int, 3>& idx) const {
  for (int j = d_ - 1; j >= 0; --j) {
    idx[j] = static_cast<int>(cell % n_);
    cell /= n_;
  }
  for (int j = d_; j < 3; ++j) idx[j] = 0;
}

Eigen::VectorXd TorusField::position(std::size_t cell) const {
  std::array<int, 3> idx{};
  cell_coords(cell, idx);
  Eigen::VectorXd x(d_);
  for (int j = 0; j < d_; ++j) x[j] = static_cast<double>(idx[j]) / n_;
  return x;
}

Eigen::VectorXd TorusField::mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(fiber_);
  for (int c = 0; c < fiber_; ++c) {
    const double* p = component(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < cells_; ++i) acc += p[i];
    m[c] = acc / static_cast<double>(cells_);
  }
  return m;
}

double TorusField::rms() const {
  double acc = 0.0;
  for (double v : data_) acc += v * v;
  return std::sqrt(acc / static_cast<double>(cells_));
}

TorusField& TorusField::operator+=(const TorusField& o) {
  if (o.data_.size() != data_.size()) throw std::invalid_argument("field shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

TorusField& TorusField::operator-=(const TorusField& o) {
  if (o.data_.size() != data_.size()) throw std::invalid_argument("field shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

TorusField& TorusField::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Spectrum::Spectrum(int d, int n, int fiber) : d_(d), n_(n), fiber_(fiber) {
  check_dims(d, n, fiber);
  bins_ = ipow(n, d - 1) * static_cast<std::size_t>(n / 2 + 1);
  data_.assign(bins_ * static_cast<std::size_t>(fiber), {0.0, 0.0});
}

void Spectrum::frequency(std::size_t bin, std::array<int, 3>& xi) const {
  int last = n_ / 2 + 1;
  int kl = static_cast<int>(bin % last);
  bin /= last;
  std::array<int, 3> idx{};
  for (int j = d_ - 2; j >= 0; --j) {
    idx[j] = static_cast<int>(bin % n_);
    bin /= n_;
  }
  for (int j = 0; j < d_ - 1; ++j) xi[j] = idx[j] <= n_ / 2 ? idx[j] : idx[j] - n_;
  xi[d_ - 1] = kl;
  for (int j = d_; j < 3; ++j) xi[j] = 0;
  // represent Nyquist as -N/2 to match the lattice {-N/2,...,N/2-1}
  for (int j = 0; j < d_; ++j)
    if (xi[j] == n_ / 2) xi[j] = -n_ / 2;
}

int Spectrum::multiplicity(std::size_t bin) const {
  int last = n_ / 2 + 1;
  int kl = static_cast<int>(bin % last);
  return (kl == 0 || kl == n_ / 2) ? 1 : 2;
}

bool Spectrum::has_nyquist(std::size_t bin) const {
  std::array<int, 3> xi{};
  frequency(bin, xi);
  for (int j = 0; j < d_; ++j)
    if (xi[j] == -n_ / 2) return true;
  return false;
}

// -------------------------------------------------------------------------
// FFTW plan registry

namespace {

struct PlanPair {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

std::mutex g_plan_mutex;
std::map<std::pair<int, int>, PlanPair> g_plans;

PlanPair& plans_for(int d, int n) {
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto key = std::make_pair(d, n);
  auto it = g_plans.find(key);
  if (it != g_plans.end()) return it->second;

  std::size_t cells = ipow(n, d);
  std::size_t bins = ipow(n, d - 1) * static_cast<std::size_t>(n / 2 + 1);
  double* rbuf = fftw_alloc_real(cells);
  fftw_complex* cbuf = fftw_alloc_complex(bins);
  int dims[3] = {n, n, n};
  PlanPair p;
  // FFTW_UNALIGNED: plans are executed on caller-owned std::vector storage
  p.r2c = fftw_plan_dft_r2c(d, dims, rbuf, cbuf, FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.c2r = fftw_plan_dft_c2r(d, dims, cbuf, rbuf, FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(rbuf);
  fftw_free(cbuf);
  if (!p.r2c || !p.c2r) throw std::runtime_error("FFTW plan creation failed");
  return g_plans.emplace(key, p).first->second;
}

} // namespace

Spectrum fft_forward(const TorusField& u) {
  Spectrum s(u.dim(), u.grid_n(), u.fiber());
  PlanPair& p = plans_for(u.dim(), u.grid_n());
  std::vector<double> scratch(u.cells());
  const double scale = 1.0 / static_cast<double>(u.cells());
  for (int c = 0; c < u.fiber(); ++c) {
    std::memcpy(scratch.data(), u.component(c), u.cells() * sizeof(double));
    fftw_execute_dft_r2c(p.r2c, scratch.data(),
                         reinterpret_cast<fftw_complex*>(s.component(c)));
    std::complex<double>* out = s.component(c);
    for (std::size_t i = 0; i < s.bins(); ++i) out[i] *= scale;
  }
  return s;
}

TorusField fft_inverse(const Spectrum& s) {
  TorusField u(s.dim(), s.grid_n(), s.fiber());
  PlanPair& p = plans_for(s.dim(), s.grid_n());
  std::vector<std::complex<double>> scratch(s.bins());
  for (int c = 0; c < s.fiber(); ++c) {
    std::memcpy(scratch.data(), s.component(c), s.bins() * sizeof(std::complex<double>));
    fftw_execute_dft_c2r(p.c2r, reinterpret_cast<fftw_complex*>(scratch.data()),
                         u.component(c));
  }
  return u;
}

TorusField random_band_limited_field(int d, int n, int fiber, Rng& rng, int band,
                                     double amplitude) {
  if (band < 0) band = n / 4;
  TorusField u(d, n, fiber);
  for (double& v : u.raw()) v = rng.normal(0.0, amplitude);
  Spectrum s = fft_forward(u);
  std::array<int, 3> xi{};
  for (std::size_t b = 0; b < s.bins(); ++b) {
    s.frequency(b, xi);
    int linf = 0;
    for (int j = 0; j < d; ++j) linf = std::max(linf, std::abs(xi[j]));
    if (linf > band)
      for (int c = 0; c < fiber; ++c) s.component(c)[b] = 0.0;
  }
  return fft_inverse(s);
}

// -------------------------------------------------------------------------
// I/O

void write_field(const TorusField& u, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  const char magic[4] = {'A', 'F', 'B', '1'};
  f.write(magic, 4);
  std::uint32_t hdr[3] = {static_cast<std::uint32_t>(u.dim()),
                          static_cast<std::uint32_t>(u.grid_n()),
                          static_cast<std::uint32_t>(u.fiber())};
  f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  // interleaved row-major cells x fiber
  for (std::size_t cell = 0; cell < u.cells(); ++cell)
    for (int c = 0; c < u.fiber(); ++c) {
      double v = u.at(c, cell);
      f.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
  if (!f) throw std::runtime_error("short write to '" + path + "'");
}

TorusField read_field(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open field file '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "AFB1", 4) != 0)
    throw std::runtime_error("'" + path + "': not a field file (bad magic)");
  std::uint32_t hdr[3];
  f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!f) throw std::runtime_error("'" + path + "': truncated header");
  TorusField u(static_cast<int>(hdr[0]), static_cast<int>(hdr[1]), static_cast<int>(hdr[2]));
  for (std::size_t cell = 0; cell < u.cells(); ++cell)
    for (int c = 0; c < u.fiber(); ++c) {
      double v;
      f.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!f) throw std::runtime_error("'" + path + "': truncated payload");
      u.at(c, cell) = v;
    }
  return u;
}

void write_field_csv(const TorusField& u, const std::string& path) {
  if (u.dim() > 2) throw std::invalid_argument("CSV field output supports d <= 2");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << "x1";
  if (u.dim() == 2) f << ",x2";
  for (int c = 0; c < u.fiber(); ++c) f << ",w" << c;
  f << "\n";
  f.precision(10);
  for (std::size_t cell = 0; cell < u.cells(); ++cell) {
    Eigen::VectorXd x = u.position(cell);
    f << x[0];
    if (u.dim() == 2) f << "," << x[1];
    for (int c = 0; c < u.fiber(); ++c) f << "," << u.at(c, cell);
    f << "\n";
  }
}

} // namespace afree
