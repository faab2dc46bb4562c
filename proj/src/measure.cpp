#include "afree/measure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace afree {

std::size_t BoxDomain::cell_count() const {
  std::size_t n = 1;
  for (int c : cells_per_axis) n *= static_cast<std::size_t>(c);
  return n;
}

double BoxDomain::cell_volume() const {
  double v = 1.0;
  for (int j = 0; j < dim(); ++j) v *= (hi[j] - lo[j]) / cells_per_axis[j];
  return v;
}

double BoxDomain::volume() const {
  double v = 1.0;
  for (int j = 0; j < dim(); ++j) v *= hi[j] - lo[j];
  return v;
}

Eigen::VectorXd BoxDomain::cell_center(std::size_t cell) const {
  Eigen::VectorXd x(dim());
  for (int j = dim() - 1; j >= 0; --j) {
    int i = static_cast<int>(cell % cells_per_axis[j]);
    cell /= cells_per_axis[j];
    double h = (hi[j] - lo[j]) / cells_per_axis[j];
    x[j] = lo[j] + (i + 0.5) * h;
  }
  return x;
}

std::size_t BoxDomain::locate(const Eigen::VectorXd& x) const {
  std::size_t cell = 0;
  for (int j = 0; j < dim(); ++j) {
    double h = (hi[j] - lo[j]) / cells_per_axis[j];
    int i = static_cast<int>(std::floor((x[j] - lo[j]) / h));
    i = std::clamp(i, 0, cells_per_axis[j] - 1);
    cell = cell * cells_per_axis[j] + static_cast<std::size_t>(i);
  }
  return cell;
}

bool BoxDomain::strictly_inside(const Eigen::VectorXd& x, double margin) const {
  for (int j = 0; j < dim(); ++j)
    if (x[j] < lo[j] + margin || x[j] > hi[j] - margin) return false;
  return true;
}

void BoxDomain::validate() const {
  if (lo.size() != hi.size() || static_cast<int>(cells_per_axis.size()) != dim())
    throw std::invalid_argument("BoxDomain: inconsistent dimensions");
  if (dim() < 1 || dim() > 3) throw std::invalid_argument("BoxDomain: dim must be 1..3");
  for (int j = 0; j < dim(); ++j) {
    if (!(hi[j] > lo[j])) throw std::invalid_argument("BoxDomain: hi must exceed lo");
    if (cells_per_axis[j] < 1) throw std::invalid_argument("BoxDomain: empty grid");
  }
}

DiscreteMeasure::DiscreteMeasure(BoxDomain domain, int fiber)
    : domain_(std::move(domain)), fiber_(fiber) {
  domain_.validate();
  if (fiber < 1) throw std::invalid_argument("DiscreteMeasure: fiber must be positive");
  density_.assign(domain_.cell_count() * static_cast<std::size_t>(fiber), 0.0);
}

Eigen::VectorXd DiscreteMeasure::density(std::size_t cell) const {
  Eigen::VectorXd v(fiber_);
  for (int c = 0; c < fiber_; ++c) v[c] = density_[cell * fiber_ + c];
  return v;
}

void DiscreteMeasure::set_density(std::size_t cell, const Eigen::VectorXd& v) {
  for (int c = 0; c < fiber_; ++c) density_[cell * fiber_ + c] = v[c];
}

void DiscreteMeasure::add_atom(MeasureAtom a) {
  if (!(a.mass > 0.0)) throw std::invalid_argument("atom mass must be positive");
  double n = a.direction.norm();
  if (std::abs(n - 1.0) > 1e-12) {
    if (n < 1e-14) throw std::invalid_argument("atom direction must be nonzero");
    a.direction /= n;  // renormalize within tolerance
  }
  atoms_.push_back(std::move(a));
}

double DiscreteMeasure::total_variation() const {
  double tv = 0.0;
  const double vol = domain_.cell_volume();
  for (std::size_t cell = 0; cell < domain_.cell_count(); ++cell) {
    double s = 0.0;
    for (int c = 0; c < fiber_; ++c) {
      double v = density_[cell * fiber_ + c];
      s += v * v;
    }
    tv += std::sqrt(s) * vol;
  }
  for (const auto& a : atoms_) tv += a.mass;
  return tv;
}

Eigen::VectorXd DiscreteMeasure::integral() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(fiber_);
  const double vol = domain_.cell_volume();
  for (std::size_t cell = 0; cell < domain_.cell_count(); ++cell)
    for (int c = 0; c < fiber_; ++c) m[c] += density_[cell * fiber_ + c] * vol;
  for (const auto& a : atoms_) m += a.mass * a.direction;
  return m;
}

double area_functional(const DiscreteMeasure& mu) {
  double area = 0.0;
  const double vol = mu.domain().cell_volume();
  const int fiber = mu.fiber();
  const auto& raw = mu.density_raw();
  for (std::size_t cell = 0; cell < mu.domain().cell_count(); ++cell) {
    double s = 0.0;
    for (int c = 0; c < fiber; ++c) {
      double v = raw[cell * fiber + c];
      s += v * v;
    }
    area += std::sqrt(1.0 + s) * vol;
  }
  for (const auto& a : mu.atoms()) area += a.mass;
  return area;
}

DiscreteMeasure make_circle_measure(const BoxDomain& domain, const Eigen::Vector2d& center,
                                    double radius, int n_atoms) {
  if (domain.dim() != 2) throw std::invalid_argument("circle measure needs d = 2");
  DiscreteMeasure mu(domain, 2);
  const double mass = 2.0 * std::numbers::pi * radius / n_atoms;  // arclength element
  for (int i = 0; i < n_atoms; ++i) {
    double th = 2.0 * std::numbers::pi * (i + 0.5) / n_atoms;
    MeasureAtom a;
    a.x = center + radius * Eigen::Vector2d(std::cos(th), std::sin(th));
    a.mass = mass;
    a.direction = Eigen::Vector2d(-std::sin(th), std::cos(th));
    mu.add_atom(std::move(a));
  }
  return mu;
}

TorusField rasterize(const DiscreteMeasure& mu, int grid_n) {
  const BoxDomain& dom = mu.domain();
  const int d = dom.dim();
  TorusField u(d, grid_n, mu.fiber());
  // density: sample the containing measure cell at each torus lattice point
  for (std::size_t cell = 0; cell < u.cells(); ++cell) {
    Eigen::VectorXd y = u.position(cell);  // unit torus coords
    Eigen::VectorXd x(d);
    for (int j = 0; j < d; ++j) x[j] = dom.lo[j] + y[j] * (dom.hi[j] - dom.lo[j]);
    Eigen::VectorXd v = mu.density(dom.locate(x));
    for (int c = 0; c < mu.fiber(); ++c) u.at(c, cell) = v[c];
  }
  // atoms: mass spread over the containing grid cell
  double hvol = 1.0;
  for (int j = 0; j < d; ++j) hvol *= (dom.hi[j] - dom.lo[j]) / grid_n;
  for (const auto& a : mu.atoms()) {
    std::array<int, 3> idx{};
    for (int j = 0; j < d; ++j) {
      double y = (a.x[j] - dom.lo[j]) / (dom.hi[j] - dom.lo[j]);
      idx[j] = std::clamp(static_cast<int>(std::floor(y * grid_n)), 0, grid_n - 1);
    }
    std::size_t cell = u.cell_index(idx);
    for (int c = 0; c < mu.fiber(); ++c) u.at(c, cell) += a.mass * a.direction[c] / hvol;
  }
  return u;
}

namespace {

[[noreturn]] void m_fail(const std::string& origin, int line, const std::string& what) {
  throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + what);
}

std::vector<double> m_tuple(const std::string& s, const std::string& origin, int line) {
  if (s.size() < 2 || s.front() != '(' || s.back() != ')')
    m_fail(origin, line, "expected (..) tuple, got '" + s + "'");
  std::vector<double> out;
  std::stringstream ss(s.substr(1, s.size() - 2));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (...) {
      m_fail(origin, line, "bad number '" + tok + "'");
    }
  }
  return out;
}

std::map<std::string, std::string> m_kv(const std::string& rest) {
  std::map<std::string, std::string> kv;
  std::istringstream ss(rest);
  std::string tok;
  while (ss >> tok) {
    std::size_t eq = tok.find('=');
    if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

Eigen::VectorXd m_vec(const std::vector<double>& v) {
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

} // namespace

DiscreteMeasure read_discrete_measure(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open measure file '" + path + "'");
  BoxDomain dom;
  int fiber = -1;
  bool have_domain = false;
  std::unique_ptr<DiscreteMeasure> mu;
  std::string raw;
  int lineno = 0;
  auto need_mu = [&]() -> DiscreteMeasure& {
    if (!mu) {
      if (!have_domain || fiber < 1)
        throw std::runtime_error(path + ": 'domain' and 'fiber' must come first");
      mu = std::make_unique<DiscreteMeasure>(dom, fiber);
    }
    return *mu;
  };
  while (std::getline(f, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto h = line.find('#'); h != std::string::npos) line = line.substr(0, h);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::string rest;
    std::getline(ls, rest);
    auto kv = m_kv(rest);
    if (key == "domain") {
      dom.lo = m_vec(m_tuple(kv["lo"], path, lineno));
      dom.hi = m_vec(m_tuple(kv["hi"], path, lineno));
      dom.cells_per_axis.clear();
      for (double c : m_tuple(kv["cells"], path, lineno))
        dom.cells_per_axis.push_back(static_cast<int>(c));
      have_domain = true;
    } else if (key == "fiber") {
      fiber = std::stoi(rest);
    } else if (key == "density") {
      auto& m = need_mu();
      std::istringstream rs(rest);
      std::string what;
      rs >> what;
      if (what == "constant") {
        std::string t;
        rs >> t;
        Eigen::VectorXd v = m_vec(m_tuple(t, path, lineno));
        for (std::size_t cell = 0; cell < dom.cell_count(); ++cell) m.set_density(cell, v);
      } else if (what == "cell") {
        if (!kv.count("cell") || !kv.count("value"))
          m_fail(path, lineno, "density cell needs cell=(..) value=(..)");
        auto idx = m_tuple(kv["cell"], path, lineno);
        std::size_t cell = 0;
        for (int j = 0; j < dom.dim(); ++j)
          cell = cell * dom.cells_per_axis[j] + static_cast<std::size_t>(idx[j]);
        m.set_density(cell, m_vec(m_tuple(kv["value"], path, lineno)));
      } else {
        m_fail(path, lineno, "density needs 'constant' or 'cell'");
      }
    } else if (key == "atom") {
      auto& m = need_mu();
      if (!kv.count("x") || !kv.count("mass") || !kv.count("dir"))
        m_fail(path, lineno, "atom needs x=(..) mass=m dir=(..)");
      MeasureAtom a;
      a.x = m_vec(m_tuple(kv["x"], path, lineno));
      a.mass = std::stod(kv["mass"]);
      a.direction = m_vec(m_tuple(kv["dir"], path, lineno));
      m.add_atom(std::move(a));
    } else {
      m_fail(path, lineno, "unknown field '" + key + "'");
    }
  }
  need_mu();
  return *mu;
}

void write_discrete_measure(const DiscreteMeasure& mu, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.precision(12);
  const BoxDomain& dom = mu.domain();
  auto tuple = [&f](const Eigen::VectorXd& v) {
    f << "(";
    for (int j = 0; j < v.size(); ++j) f << (j ? "," : "") << v[j];
    f << ")";
  };
  f << "domain lo=";
  tuple(dom.lo);
  f << " hi=";
  tuple(dom.hi);
  f << " cells=(";
  for (std::size_t j = 0; j < dom.cells_per_axis.size(); ++j)
    f << (j ? "," : "") << dom.cells_per_axis[j];
  f << ")\nfiber " << mu.fiber() << "\n";
  for (std::size_t cell = 0; cell < dom.cell_count(); ++cell) {
    Eigen::VectorXd v = mu.density(cell);
    if (v.norm() == 0.0) continue;
    std::vector<int> idx(dom.dim());
    std::size_t c = cell;
    for (int j = dom.dim() - 1; j >= 0; --j) {
      idx[j] = static_cast<int>(c % dom.cells_per_axis[j]);
      c /= dom.cells_per_axis[j];
    }
    f << "density cell cell=(";
    for (int j = 0; j < dom.dim(); ++j) f << (j ? "," : "") << idx[j];
    f << ") value=";
    tuple(v);
    f << "\n";
  }
  for (const auto& a : mu.atoms()) {
    f << "atom x=";
    tuple(a.x);
    f << " mass=" << a.mass << " dir=";
    tuple(a.direction);
    f << "\n";
  }
}

TorusField smooth_field(const TorusField& u, double eps) {
  Spectrum s = fft_forward(u);
  std::array<int, 3> xi{};
  for (std::size_t b = 0; b < s.bins(); ++b) {
    s.frequency(b, xi);
    double n2 = 0.0;
    for (int j = 0; j < u.dim(); ++j) n2 += static_cast<double>(xi[j]) * xi[j];
    double g = std::exp(-2.0 * std::numbers::pi * std::numbers::pi * eps * eps * n2);
    for (int c = 0; c < u.fiber(); ++c) s.component(c)[b] *= g;
  }
  return fft_inverse(s);
}

} // namespace afree
