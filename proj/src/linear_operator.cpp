#include "afree/linear_operator.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace afree {

LinearOperator::LinearOperator(int dimension, int order, int fiber_in, int fiber_out,
                               std::vector<OperatorTerm> terms, std::string name) {
  if (dimension < 1 || dimension > 3)
    throw std::invalid_argument("LinearOperator: dimension must be 1, 2 or 3");
  if (order < 1) throw std::invalid_argument("LinearOperator: order must be >= 1");
  if (fiber_in < 1 || fiber_out < 1)
    throw std::invalid_argument("LinearOperator: fiber dimensions must be positive");
  if (terms.empty()) throw std::invalid_argument("LinearOperator: no terms");
  double max_abs = 0.0;
  for (const auto& t : terms) {
    if (t.alpha.dim() != dimension)
      throw std::invalid_argument("LinearOperator: multi-index dimension mismatch");
    if (t.alpha.modulus() != order)
      throw std::invalid_argument("LinearOperator: |alpha| != order for a term");
    if (t.matrix.rows() != fiber_out || t.matrix.cols() != fiber_in)
      throw std::invalid_argument("LinearOperator: coefficient matrix shape mismatch");
    max_abs = std::max(max_abs, t.matrix.cwiseAbs().maxCoeff());
  }
  if (!(max_abs > 0.0))
    throw std::invalid_argument("LinearOperator: all coefficient matrices are zero");
  auto impl = std::make_shared<Impl>();
  impl->d = dimension;
  impl->k = order;
  impl->dim_w = fiber_in;
  impl->dim_x = fiber_out;
  impl->terms = std::move(terms);
  impl->name = std::move(name);
  impl_ = std::move(impl);
}

void LinearOperator::reduced_symbol(const Eigen::VectorXd& xi, Eigen::MatrixXd& out) const {
  if (xi.size() != impl_->d)
    throw std::invalid_argument("symbol: frequency dimension mismatch");
  out.setZero(impl_->dim_x, impl_->dim_w);
  for (const auto& t : impl_->terms) {
    double m = monomial(t.alpha, xi.data());
    if (m != 0.0) out.noalias() += m * t.matrix;
  }
}

Eigen::MatrixXd LinearOperator::reduced_symbol(const Eigen::VectorXd& xi) const {
  Eigen::MatrixXd out;
  reduced_symbol(xi, out);
  return out;
}

std::complex<double> LinearOperator::symbol_scale() const {
  const std::complex<double> two_pi_i(0.0, 2.0 * std::numbers::pi);
  std::complex<double> s(1.0, 0.0);
  for (int i = 0; i < impl_->k; ++i) s *= two_pi_i;
  return s;
}

double LinearOperator::symbol_scale_abs() const {
  return std::pow(2.0 * std::numbers::pi, impl_->k);
}

Eigen::MatrixXcd LinearOperator::symbol(const Eigen::VectorXd& xi) const {
  return symbol_scale() * reduced_symbol(xi);
}

Eigen::MatrixXd LinearOperator::symbol_jacobian(const Eigen::VectorXd& xi,
                                                const Eigen::VectorXd& w) const {
  if (w.size() != impl_->dim_w)
    throw std::invalid_argument("symbol_jacobian: amplitude dimension mismatch");
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(impl_->dim_x, impl_->d);
  for (const auto& t : impl_->terms) {
    Eigen::VectorXd aw = t.matrix * w;
    for (int j = 0; j < impl_->d; ++j) {
      double dm = monomial_derivative(t.alpha, xi.data(), j);
      if (dm != 0.0) jac.col(j) += dm * aw;
    }
  }
  return jac;
}

SymbolMatrix::SymbolMatrix(Eigen::VectorXd xi, Eigen::MatrixXcd value, int order)
    : xi_(std::move(xi)), value_(std::move(value)), order_(order) {}

const Eigen::JacobiSVD<Eigen::MatrixXcd>& SymbolMatrix::svd() const {
  if (!svd_) svd_ = std::make_unique<Eigen::JacobiSVD<Eigen::MatrixXcd>>(value_);
  return *svd_;
}

int SymbolMatrix::rank(double tol) const {
  const auto& sv = svd().singularValues();
  if (sv.size() == 0 || !(sv[0] > 0.0)) return 0;
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > tol * sv[0]) ++r;
  return r;
}

SymbolMatrix symbol_at(const LinearOperator& op, const Eigen::VectorXd& xi) {
  return SymbolMatrix(xi, op.symbol(xi), op.order());
}

// -------------------------------------------------------------------------
// Definition file parsing

namespace {

[[noreturn]] void parse_fail(const std::string& origin, int line, const std::string& what) {
  std::ostringstream os;
  os << origin << ":" << line << ": " << what;
  throw std::runtime_error(os.str());
}

std::string strip(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c); };
  while (!s.empty() && issp(s.front())) s.erase(s.begin());
  while (!s.empty() && issp(s.back())) s.pop_back();
  return s;
}

// parse "(1,0)" -> ints
std::vector<int> parse_int_tuple(const std::string& s, const std::string& origin, int line) {
  std::vector<int> out;
  std::string body = strip(s);
  if (body.size() < 2 || body.front() != '(' || body.back() != ')')
    parse_fail(origin, line, "expected parenthesized tuple, got '" + s + "'");
  std::stringstream ss(body.substr(1, body.size() - 2));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(strip(tok)));
    } catch (...) {
      parse_fail(origin, line, "bad integer '" + tok + "'");
    }
  }
  return out;
}

// parse "[[1,0],[0,1]]" -> matrix
Eigen::MatrixXd parse_matrix(const std::string& s, const std::string& origin, int line) {
  std::string body = strip(s);
  if (body.size() < 4 || body.front() != '[' || body.back() != ']')
    parse_fail(origin, line, "expected [[..],[..]] matrix, got '" + s + "'");
  body = body.substr(1, body.size() - 2);
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t open = body.find('[', pos);
    if (open == std::string::npos) break;
    std::size_t close = body.find(']', open);
    if (close == std::string::npos) parse_fail(origin, line, "unterminated matrix row");
    std::stringstream ss(body.substr(open + 1, close - open - 1));
    std::string tok;
    std::vector<double> row;
    while (std::getline(ss, tok, ',')) {
      try {
        row.push_back(std::stod(strip(tok)));
      } catch (...) {
        parse_fail(origin, line, "bad number '" + tok + "'");
      }
    }
    rows.push_back(std::move(row));
    pos = close + 1;
  }
  if (rows.empty()) parse_fail(origin, line, "empty matrix");
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) parse_fail(origin, line, "ragged matrix rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

} // namespace

LinearOperator parse_operator_text(std::string_view text, const std::string& origin) {
  int dimension = -1, order = -1, fiber_in = -1, fiber_out = -1;
  std::string name = origin;
  std::vector<OperatorTerm> terms;

  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = strip(raw);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::string rest = strip(line.substr(key.size()));
    if (key == "name") {
      name = rest;
    } else if (key == "dimension" || key == "order" || key == "fiber_in" || key == "fiber_out") {
      int v = 0;
      try {
        v = std::stoi(rest);
      } catch (...) {
        parse_fail(origin, lineno, "field '" + key + "' needs an integer");
      }
      if (key == "dimension") dimension = v;
      else if (key == "order") order = v;
      else if (key == "fiber_in") fiber_in = v;
      else fiber_out = v;
    } else if (key == "term") {
      std::size_t ap = rest.find("alpha=");
      std::size_t mp = rest.find("matrix=");
      if (ap == std::string::npos || mp == std::string::npos)
        parse_fail(origin, lineno, "term needs alpha=(..) and matrix=[[..]]");
      std::string alpha_s = strip(rest.substr(ap + 6, mp - (ap + 6)));
      std::string matrix_s = strip(rest.substr(mp + 7));
      OperatorTerm t;
      t.alpha = MultiIndex(parse_int_tuple(alpha_s, origin, lineno));
      t.matrix = parse_matrix(matrix_s, origin, lineno);
      terms.push_back(std::move(t));
    } else {
      parse_fail(origin, lineno, "unknown field '" + key + "'");
    }
  }
  if (dimension < 0) parse_fail(origin, lineno, "missing 'dimension'");
  if (order < 0) parse_fail(origin, lineno, "missing 'order'");
  if (fiber_in < 0) parse_fail(origin, lineno, "missing 'fiber_in'");
  if (fiber_out < 0) parse_fail(origin, lineno, "missing 'fiber_out'");
  try {
    return LinearOperator(dimension, order, fiber_in, fiber_out, std::move(terms), name);
  } catch (const std::invalid_argument& e) {
    parse_fail(origin, lineno, e.what());
  }
}

LinearOperator parse_operator_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open operator file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_operator_text(ss.str(), path);
}

std::string format_operator(const LinearOperator& op) {
  std::ostringstream os;
  os << "name " << op.name() << "\n";
  os << "dimension " << op.dimension() << "\n";
  os << "order " << op.order() << "\n";
  os << "fiber_in " << op.fiber_in() << "\n";
  os << "fiber_out " << op.fiber_out() << "\n";
  for (const auto& t : op.terms()) {
    os << "term alpha=(";
    for (int i = 0; i < t.alpha.dim(); ++i) os << (i ? "," : "") << t.alpha.entries[i];
    os << ") matrix=[";
    for (int r = 0; r < t.matrix.rows(); ++r) {
      os << (r ? ",[" : "[");
      for (int c = 0; c < t.matrix.cols(); ++c) os << (c ? "," : "") << t.matrix(r, c);
      os << "]";
    }
    os << "]\n";
  }
  return os.str();
}

// -------------------------------------------------------------------------
// Gallery

namespace {

MultiIndex unit_alpha(int d, int j, int count = 1) {
  std::vector<int> e(d, 0);
  e[j] = count;
  return MultiIndex(e);
}

LinearOperator make_divergence(int d) {
  std::vector<OperatorTerm> terms;
  for (int j = 0; j < d; ++j) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(1, d);
    m(0, j) = 1.0;
    terms.push_back({unit_alpha(d, j), m});
  }
  return LinearOperator(d, 1, d, 1, std::move(terms),
                        "divergence_" + std::to_string(d) + "d");
}

LinearOperator make_laplacian(int d) {
  std::vector<OperatorTerm> terms;
  for (int j = 0; j < d; ++j) {
    terms.push_back({unit_alpha(d, j, 2), Eigen::MatrixXd::Ones(1, 1)});
  }
  return LinearOperator(d, 2, 1, 1, std::move(terms), "laplacian_" + std::to_string(d) + "d");
}

// A w = d1 w2 - d2 w1, the annihilator of scalar gradients in d=2.
LinearOperator make_curl_2d() {
  std::vector<OperatorTerm> terms;
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(1, 2);
  m1(0, 1) = 1.0;
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(1, 2);
  m2(0, 0) = -1.0;
  terms.push_back({unit_alpha(2, 0), m1});
  terms.push_back({unit_alpha(2, 1), m2});
  return LinearOperator(2, 1, 2, 1, std::move(terms), "curl_2d");
}

// B u = (d2 u, -d1 u): potential of the 2d divergence.
LinearOperator make_rot_gradient_2d() {
  std::vector<OperatorTerm> terms;
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(2, 1);
  m1(1, 0) = -1.0;
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(2, 1);
  m2(0, 0) = 1.0;
  terms.push_back({unit_alpha(2, 0), m1});
  terms.push_back({unit_alpha(2, 1), m2});
  return LinearOperator(2, 1, 1, 2, std::move(terms), "rot_gradient_2d");
}

// Gradient on maps R^d -> R^m, fibers flattened row-major (i,j) -> i*d+j.
LinearOperator make_gradient(int d, int m) {
  std::vector<OperatorTerm> terms;
  for (int j = 0; j < d; ++j) {
    Eigen::MatrixXd mat = Eigen::MatrixXd::Zero(m * d, m);
    for (int i = 0; i < m; ++i) mat(i * d + j, i) = 1.0;
    terms.push_back({unit_alpha(d, j), mat});
  }
  return LinearOperator(d, 1, m, m * d, std::move(terms),
                        "gradient_" + std::to_string(d) + "d_m" + std::to_string(m));
}

// Scalar gradient, d=1..3.
LinearOperator make_gradient_scalar(int d) {
  std::vector<OperatorTerm> terms;
  for (int j = 0; j < d; ++j) {
    Eigen::MatrixXd mat = Eigen::MatrixXd::Zero(d, 1);
    mat(j, 0) = 1.0;
    terms.push_back({unit_alpha(d, j), mat});
  }
  return LinearOperator(d, 1, 1, d, std::move(terms),
                        "gradient_scalar_" + std::to_string(d) + "d");
}

// Second gradient of scalars in d=2; X = sym 2-tensors as (xx, xy, yy).
LinearOperator make_hessian_2d() {
  std::vector<OperatorTerm> terms;
  auto mk = [](int row) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 1);
    m(row, 0) = 1.0;
    return m;
  };
  terms.push_back({MultiIndex({2, 0}), mk(0)});
  terms.push_back({MultiIndex({1, 1}), mk(1)});
  terms.push_back({MultiIndex({0, 2}), mk(2)});
  return LinearOperator(2, 2, 1, 3, std::move(terms), "hessian_2d");
}

// Symmetric gradient in d=2; W = sym 2x2 as (e11, e12, e22).
LinearOperator make_sym_gradient_2d() {
  std::vector<OperatorTerm> terms;
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(3, 2);
  m1(0, 0) = 1.0;
  m1(1, 1) = 0.5;
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(3, 2);
  m2(1, 0) = 0.5;
  m2(2, 1) = 1.0;
  terms.push_back({unit_alpha(2, 0), m1});
  terms.push_back({unit_alpha(2, 1), m2});
  return LinearOperator(2, 1, 2, 3, std::move(terms), "sym_gradient_2d");
}

// Saint-Venant compatibility operator: annihilator of E in d=2,
// A e = d22 e11 - 2 d12 e12 + d11 e22 on (e11,e12,e22).
LinearOperator make_saint_venant_2d() {
  std::vector<OperatorTerm> terms;
  Eigen::MatrixXd m20 = Eigen::MatrixXd::Zero(1, 3);
  m20(0, 2) = 1.0;
  Eigen::MatrixXd m11 = Eigen::MatrixXd::Zero(1, 3);
  m11(0, 1) = -2.0;
  Eigen::MatrixXd m02 = Eigen::MatrixXd::Zero(1, 3);
  m02(0, 0) = 1.0;
  terms.push_back({MultiIndex({2, 0}), m20});
  terms.push_back({MultiIndex({1, 1}), m11});
  terms.push_back({MultiIndex({0, 2}), m02});
  return LinearOperator(2, 2, 3, 1, std::move(terms), "saint_venant_2d");
}

// Deviatoric (trace-free symmetric) gradient in d=2; fibers (m11, m12),
// m22 = -m11 implicit.
LinearOperator make_deviatoric_2d() {
  std::vector<OperatorTerm> terms;
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(2, 2);
  m1(0, 0) = 0.5;   // m11 from d1 u1: 1 - 1/2
  m1(1, 1) = 0.5;   // m12 from d1 u2
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(2, 2);
  m2(0, 1) = -0.5;  // m11 from d2 u2: -div/2 part
  m2(1, 0) = 0.5;   // m12 from d2 u1
  terms.push_back({unit_alpha(2, 0), m1});
  terms.push_back({unit_alpha(2, 1), m2});
  return LinearOperator(2, 1, 2, 2, std::move(terms), "deviatoric_2d");
}

// Mueller's diagonal-gradient annihilator A(w1,w2) = (d2 w1, d1 w2):
// rank 1 on the axes, 2 elsewhere (not constant rank).
LinearOperator make_mueller_diagonal_2d() {
  std::vector<OperatorTerm> terms;
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(2, 2);
  m1(1, 1) = 1.0;
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(2, 2);
  m2(0, 0) = 1.0;
  terms.push_back({unit_alpha(2, 0), m1});
  terms.push_back({unit_alpha(2, 1), m2});
  return LinearOperator(2, 1, 2, 2, std::move(terms), "mueller_diagonal_2d");
}

// Cauchy-Riemann system: elliptic first-order, W = X = R^2.
LinearOperator make_cauchy_riemann_2d() {
  std::vector<OperatorTerm> terms;
  Eigen::MatrixXd m1(2, 2), m2(2, 2);
  m1 << 1, 0, 0, 1;
  m2 << 0, -1, 1, 0;
  terms.push_back({unit_alpha(2, 0), m1});
  terms.push_back({unit_alpha(2, 1), m2});
  return LinearOperator(2, 1, 2, 2, std::move(terms), "cauchy_riemann_2d");
}

// Boundary operator on m-currents for d <= 3, fibers identified with R^dim
// via the Hodge star: contraction w -> w ⌟ xi.
//   d=2: m=1 is the divergence; m=2 maps w e1^e2 to (xi2 w, -xi1 w).
//   d=3: m=1 is the divergence; m=2 is (Hodge) w x xi; m=3 maps w e123
//        to (w xi3?, ...) -- contraction of the volume form.
LinearOperator make_current_boundary(int d, int m) {
  if (d == 2 && m == 1) {
    auto op = make_divergence(2);
    return LinearOperator(2, 1, 2, 1, op.terms(), "current_boundary_2d_m1");
  }
  if (d == 2 && m == 2) {
    // iota_xi(e1^e2) = xi1 e2 - xi2 e1
    std::vector<OperatorTerm> terms;
    Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(2, 1);
    m1(1, 0) = 1.0;
    Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(2, 1);
    m2(0, 0) = -1.0;
    terms.push_back({unit_alpha(2, 0), m1});
    terms.push_back({unit_alpha(2, 1), m2});
    return LinearOperator(2, 1, 1, 2, std::move(terms), "current_boundary_2d_m2");
  }
  if (d == 3 && m == 1) {
    auto op = make_divergence(3);
    return LinearOperator(3, 1, 3, 1, op.terms(), "current_boundary_3d_m1");
  }
  if (d == 3 && m == 2) {
    // On Hodge vectors: (w ⌟ xi) = xi x w.
    std::vector<OperatorTerm> terms;
    for (int j = 0; j < 3; ++j) {
      Eigen::MatrixXd mat = Eigen::MatrixXd::Zero(3, 3);
      // (xi x w)_i = eps_{i j l} xi_j w_l
      for (int i = 0; i < 3; ++i)
        for (int l = 0; l < 3; ++l) {
          int eps = (i == j || j == l || i == l)
                        ? 0
                        : (((j - i + 3) % 3 == 1 && (l - j + 3) % 3 == 1) ? 1 : -1);
          if (eps != 0) mat(i, l) = eps;
        }
      terms.push_back({unit_alpha(3, j), mat});
    }
    return LinearOperator(3, 1, 3, 3, std::move(terms), "current_boundary_3d_m2");
  }
  if (d == 3 && m == 3) {
    // iota_xi(e1^e2^e3) on Hodge fibers: w -> w * xi (scalar to vector).
    std::vector<OperatorTerm> terms;
    for (int j = 0; j < 3; ++j) {
      Eigen::MatrixXd mat = Eigen::MatrixXd::Zero(3, 1);
      mat(j, 0) = 1.0;
      terms.push_back({unit_alpha(3, j), mat});
    }
    return LinearOperator(3, 1, 1, 3, std::move(terms), "current_boundary_3d_m3");
  }
  throw std::invalid_argument("current boundary gallery covers d<=3 only");
}

std::map<std::string, LinearOperator> build_gallery() {
  std::map<std::string, LinearOperator> g;
  auto add = [&g](const LinearOperator& op) { g.emplace(op.name(), op); };
  add(make_divergence(2));
  add(make_divergence(3));
  add(make_laplacian(2));
  add(make_laplacian(3));
  add(make_curl_2d());
  add(make_rot_gradient_2d());
  add(make_gradient(2, 2));
  add(make_gradient_scalar(1));
  add(make_gradient_scalar(2));
  add(make_gradient_scalar(3));
  add(make_hessian_2d());
  add(make_sym_gradient_2d());
  add(make_saint_venant_2d());
  add(make_deviatoric_2d());
  add(make_mueller_diagonal_2d());
  add(make_cauchy_riemann_2d());
  add(make_current_boundary(2, 1));
  add(make_current_boundary(2, 2));
  add(make_current_boundary(3, 1));
  add(make_current_boundary(3, 2));
  add(make_current_boundary(3, 3));
  return g;
}

const std::map<std::string, LinearOperator>& gallery_map() {
  static const std::map<std::string, LinearOperator> g = build_gallery();
  return g;
}

} // namespace

const LinearOperator& gallery(std::string_view name) {
  const auto& g = gallery_map();
  auto it = g.find(std::string(name));
  if (it == g.end())
    throw std::invalid_argument("no gallery operator named '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string> gallery_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : gallery_map()) out.push_back(k);
  return out;
}

} // namespace afree
