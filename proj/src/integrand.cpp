#include "afree/integrand.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "afree/kernels.hpp"
#include "afree/rng.hpp"

namespace afree {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd from_raw(const double* const* comps, int fiber, std::size_t i,
                         const double* z) {
  Eigen::VectorXd q(fiber);
  for (int c = 0; c < fiber; ++c) q[c] = z[c] + comps[c][i];
  return q;
}
} // namespace

void Integrand::gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const {
  if (!differentiable())
    throw std::runtime_error(describe() + ": gradient of a nonsmooth integrand (smooth it first)");
  // central differences fallback for kinds without an analytic gradient
  const double h = 1e-6;
  g.resize(z.size());
  Eigen::VectorXd zp = z, zm = z;
  for (int i = 0; i < z.size(); ++i) {
    zp[i] += h;
    zm[i] -= h;
    g[i] = (value(zp) - value(zm)) / (2 * h);
    zp[i] = z[i];
    zm[i] = z[i];
  }
}

double Integrand::recession(const Eigen::VectorXd&) const {
  throw std::runtime_error(describe() + ": no strong recession");
}

bool Integrand::upper_recession_analytic(const Eigen::VectorXd& z, double& out) const {
  if (has_strong_recession()) {
    out = recession(z);
    return true;
  }
  return false;
}

IntegrandPtr Integrand::smoothed(double) const {
  if (differentiable())
    throw std::runtime_error("smoothed(): pass the shared_ptr kinds, not a raw Integrand");
  throw std::runtime_error(describe() + ": no smoothing rule for this kind");
}

double Integrand::grid_sum(const double* const* comps, int fiber, std::size_t n,
                           const double* z, double* const* grads) const {
  double acc = 0.0;
  Eigen::VectorXd g;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd q = from_raw(comps, fiber, i, z);
    acc += value(q);
    if (grads) {
      gradient(q, g);
      for (int c = 0; c < fiber; ++c) grads[c][i] = g[c];
    }
  }
  return acc;
}

// -------------------------------------------------------------------------
// Kinds

namespace {

class ConstantIntegrand final : public Integrand,
                                public std::enable_shared_from_this<ConstantIntegrand> {
public:
  explicit ConstantIntegrand(double c) : c_(c) {}
  double value(const Eigen::VectorXd&) const override { return c_; }
  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    g.setZero(z.size());
  }
  bool has_strong_recession() const override { return true; }
  double recession(const Eigen::VectorXd&) const override { return 0.0; }
  double growth_constant() const override { return std::abs(c_); }
  IntegrandPtr smoothed(double) const override { return shared_from_this(); }
  std::string describe() const override {
    std::ostringstream os;
    os << c_;
    return os.str();
  }
  double grid_sum(const double* const*, int fiber, std::size_t n, const double*,
                  double* const* grads) const override {
    if (grads)
      for (int c = 0; c < fiber; ++c) std::fill(grads[c], grads[c] + n, 0.0);
    return c_ * static_cast<double>(n);
  }

private:
  double c_;
};

class NormIntegrand final : public Integrand {
public:
  double value(const Eigen::VectorXd& z) const override { return z.norm(); }
  bool differentiable() const override { return false; }
  bool has_strong_recession() const override { return true; }
  double recession(const Eigen::VectorXd& z) const override { return z.norm(); }
  std::optional<double> lipschitz_constant() const override { return 1.0; }
  double growth_constant() const override { return 1.0; }
  IntegrandPtr smoothed(double eps) const override { return make_smooth_norm(eps); }
  std::string describe() const override { return "norm()"; }
};

class SmoothNormIntegrand final : public Integrand,
                                  public std::enable_shared_from_this<SmoothNormIntegrand> {
public:
  explicit SmoothNormIntegrand(double eps) : eps2_(eps * eps) {
    if (!(eps > 0)) throw std::invalid_argument("smooth norm needs eps > 0");
  }
  double value(const Eigen::VectorXd& z) const override {
    return std::sqrt(z.squaredNorm() + eps2_);
  }
  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    g = z / std::sqrt(z.squaredNorm() + eps2_);
  }
  bool has_strong_recession() const override { return true; }
  double recession(const Eigen::VectorXd& z) const override { return z.norm(); }
  std::optional<double> lipschitz_constant() const override { return 1.0; }
  double growth_constant() const override { return 1.0 + std::sqrt(eps2_); }
  IntegrandPtr smoothed(double) const override { return shared_from_this(); }
  std::string describe() const override {
    std::ostringstream os;
    os << "smooth_norm(eps=" << std::sqrt(eps2_) << ")";
    return os.str();
  }
  double grid_sum(const double* const* comps, int fiber, std::size_t n, const double* z,
                  double* const* grads) const override {
    return kern::active().smooth_norm(comps, fiber, n, z, eps2_, grads);
  }

private:
  double eps2_;
};

class AreaIntegrand final : public Integrand,
                            public std::enable_shared_from_this<AreaIntegrand> {
public:
  double value(const Eigen::VectorXd& z) const override {
    return std::sqrt(1.0 + z.squaredNorm());
  }
  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    g = z / std::sqrt(1.0 + z.squaredNorm());
  }
  bool has_strong_recession() const override { return true; }
  double recession(const Eigen::VectorXd& z) const override { return z.norm(); }
  std::optional<double> lipschitz_constant() const override { return 1.0; }
  double growth_constant() const override { return 2.0; }
  IntegrandPtr smoothed(double) const override { return shared_from_this(); }
  std::string describe() const override { return "area()"; }
  double grid_sum(const double* const* comps, int fiber, std::size_t n, const double* z,
                  double* const* grads) const override {
    return kern::active().area(comps, fiber, n, z, grads);
  }
};

class QuadraticIntegrand final : public Integrand,
                                 public std::enable_shared_from_this<QuadraticIntegrand> {
public:
  double value(const Eigen::VectorXd& z) const override { return z.squaredNorm(); }
  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override { g = 2.0 * z; }
  bool linear_growth() const override { return false; }
  bool upper_recession_analytic(const Eigen::VectorXd& z, double& out) const override {
    out = z.isZero(0) ? 0.0 : kInf;
    return true;
  }
  double growth_constant() const override { return kInf; }
  IntegrandPtr smoothed(double) const override { return shared_from_this(); }
  std::string describe() const override { return "quadratic()"; }
  double grid_sum(const double* const* comps, int fiber, std::size_t n, const double* z,
                  double* const* grads) const override {
    return kern::active().quadratic(comps, fiber, n, z, grads);
  }
};

class RadialDoubleWell final : public Integrand,
                               public std::enable_shared_from_this<RadialDoubleWell> {
public:
  double value(const Eigen::VectorXd& z) const override {
    double s = z.squaredNorm() - 1.0;
    return s * s;
  }
  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    g = 4.0 * (z.squaredNorm() - 1.0) * z;
  }
  bool linear_growth() const override { return false; }
  bool upper_recession_analytic(const Eigen::VectorXd& z, double& out) const override {
    out = z.isZero(0) ? 0.0 : kInf;
    return true;
  }
  double growth_constant() const override { return kInf; }
  IntegrandPtr smoothed(double) const override { return shared_from_this(); }
  std::string describe() const override { return "radial_double_well()"; }
  double grid_sum(const double* const* comps, int fiber, std::size_t n, const double* z,
                  double* const* grads) const override {
    return kern::active().double_well(comps, fiber, n, z, grads);
  }
};

class DistanceIntegrand final : public Integrand {
public:
  explicit DistanceIntegrand(std::vector<Eigen::VectorXd> pts) : pts_(std::move(pts)) {
    if (pts_.empty()) throw std::invalid_argument("distance(): needs at least one point");
  }
  double value(const Eigen::VectorXd& z) const override {
    double best = kInf;
    for (const auto& a : pts_) best = std::min(best, (z - a).norm());
    return best;
  }
  bool differentiable() const override { return false; }
  bool has_strong_recession() const override { return true; }
  double recession(const Eigen::VectorXd& z) const override { return z.norm(); }
  std::optional<double> lipschitz_constant() const override { return 1.0; }
  double growth_constant() const override {
    double m = 0.0;
    for (const auto& a : pts_) m = std::max(m, a.norm());
    return 1.0 + m;
  }
  IntegrandPtr smoothed(double eps) const override { return make_smooth_distance(pts_, eps); }
  std::string describe() const override { return "distance(...)"; }

private:
  std::vector<Eigen::VectorXd> pts_;
};

// smooth-min composition of smoothed point distances
class SmoothDistanceIntegrand final
    : public Integrand,
      public std::enable_shared_from_this<SmoothDistanceIntegrand> {
public:
  SmoothDistanceIntegrand(std::vector<Eigen::VectorXd> pts, double eps)
      : pts_(std::move(pts)), eps_(eps), eps2_(eps * eps) {
    if (pts_.empty()) throw std::invalid_argument("distance(): needs at least one point");
    if (!(eps > 0)) throw std::invalid_argument("smooth distance needs eps > 0");
  }
  double value(const Eigen::VectorXd& z) const override {
    double m = std::sqrt((z - pts_[0]).squaredNorm() + eps2_);
    for (std::size_t i = 1; i < pts_.size(); ++i) {
      double d = std::sqrt((z - pts_[i]).squaredNorm() + eps2_);
      m = smin_eps(m, d);
    }
    return m;
  }
  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    // chain through the nested smooth-min
    double m = std::sqrt((z - pts_[0]).squaredNorm() + eps2_);
    g = (z - pts_[0]) / m;
    for (std::size_t i = 1; i < pts_.size(); ++i) {
      double d = std::sqrt((z - pts_[i]).squaredNorm() + eps2_);
      Eigen::VectorXd gd = (z - pts_[i]) / d;
      double r = std::sqrt((m - d) * (m - d) + eps2_);
      double w1 = 0.5 * (1.0 - (m - d) / r);
      double w2 = 0.5 * (1.0 + (m - d) / r);
      g = w1 * g + w2 * gd;
      m = 0.5 * (m + d - r);
    }
  }
  bool has_strong_recession() const override { return true; }
  double recession(const Eigen::VectorXd& z) const override { return z.norm(); }
  std::optional<double> lipschitz_constant() const override { return 1.0; }
  double growth_constant() const override {
    double m = 0.0;
    for (const auto& a : pts_) m = std::max(m, a.norm());
    return 1.0 + m + eps_;
  }
  IntegrandPtr smoothed(double) const override { return shared_from_this(); }
  std::string describe() const override {
    std::ostringstream os;
    os << "smooth_distance(n=" << pts_.size() << ",eps=" << eps_ << ")";
    return os.str();
  }
  double grid_sum(const double* const* comps, int fiber, std::size_t n, const double* z,
                  double* const* grads) const override {
    if (pts_.size() == 2 && fiber == pts_[0].size())
      return kern::active().two_point_dist(comps, fiber, n, z, pts_[0].data(), pts_[1].data(),
                                           eps2_, grads);
    return Integrand::grid_sum(comps, fiber, n, z, grads);
  }

private:
  double smin_eps(double a, double b) const {
    return 0.5 * (a + b - std::sqrt((a - b) * (a - b) + eps2_));
  }
  std::vector<Eigen::VectorXd> pts_;
  double eps_, eps2_;
};

class ShiftedNormIntegrand final : public Integrand,
                                   public std::enable_shared_from_this<ShiftedNormIntegrand> {
public:
  explicit ShiftedNormIntegrand(Eigen::VectorXd a) : a_(std::move(a)) {}
  double value(const Eigen::VectorXd& z) const override { return (z - a_).norm(); }
  bool differentiable() const override { return false; }
  bool has_strong_recession() const override { return true; }
  double recession(const Eigen::VectorXd& z) const override { return z.norm(); }
  std::optional<double> lipschitz_constant() const override { return 1.0; }
  double growth_constant() const override { return 1.0 + a_.norm(); }
  IntegrandPtr smoothed(double eps) const override {
    return make_smooth_distance({a_}, eps);
  }
  std::string describe() const override { return "shifted_norm(...)"; }

private:
  Eigen::VectorXd a_;
};

class ScaledIntegrand final : public Integrand {
public:
  ScaledIntegrand(double a, IntegrandPtr f) : a_(a), f_(std::move(f)) {}
  double value(const Eigen::VectorXd& z) const override { return a_ * f_->value(z); }
  bool differentiable() const override { return f_->differentiable(); }
  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    f_->gradient(z, g);
    g *= a_;
  }
  bool has_strong_recession() const override { return f_->has_strong_recession(); }
  double recession(const Eigen::VectorXd& z) const override { return a_ * f_->recession(z); }
  bool upper_recession_analytic(const Eigen::VectorXd& z, double& out) const override {
    // only safe for non-negative scale: limsup is order-preserving then
    if (a_ >= 0.0 && f_->upper_recession_analytic(z, out)) {
      out *= a_;
      return true;
    }
    return Integrand::upper_recession_analytic(z, out);
  }
  bool linear_growth() const override { return f_->linear_growth(); }
  double growth_constant() const override { return std::abs(a_) * f_->growth_constant(); }
  IntegrandPtr smoothed(double eps) const override {
    return make_scaled(a_, f_->smoothed(eps));
  }
  std::string describe() const override {
    std::ostringstream os;
    os << a_ << "*" << f_->describe();
    return os.str();
  }
  double grid_sum(const double* const* comps, int fiber, std::size_t n, const double* z,
                  double* const* grads) const override {
    double v = f_->grid_sum(comps, fiber, n, z, grads);
    if (grads)
      for (int c = 0; c < fiber; ++c)
        for (std::size_t i = 0; i < n; ++i) grads[c][i] *= a_;
    return a_ * v;
  }

private:
  double a_;
  IntegrandPtr f_;
};

class SumIntegrand final : public Integrand {
public:
  SumIntegrand(IntegrandPtr f, IntegrandPtr g) : f_(std::move(f)), g_(std::move(g)) {}
  double value(const Eigen::VectorXd& z) const override { return f_->value(z) + g_->value(z); }
  bool differentiable() const override {
    return f_->differentiable() && g_->differentiable();
  }
  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    Eigen::VectorXd t;
    f_->gradient(z, g);
    g_->gradient(z, t);
    g += t;
  }
  bool has_strong_recession() const override {
    return f_->has_strong_recession() && g_->has_strong_recession();
  }
  double recession(const Eigen::VectorXd& z) const override {
    return f_->recession(z) + g_->recession(z);
  }
  bool linear_growth() const override { return f_->linear_growth() && g_->linear_growth(); }
  double growth_constant() const override {
    return f_->growth_constant() + g_->growth_constant();
  }
  IntegrandPtr smoothed(double eps) const override {
    return make_sum(f_->smoothed(eps), g_->smoothed(eps));
  }
  std::string describe() const override {
    return f_->describe() + " + " + g_->describe();
  }
  double grid_sum(const double* const* comps, int fiber, std::size_t n, const double* z,
                  double* const* grads) const override {
    if (!grads) return f_->grid_sum(comps, fiber, n, z, nullptr) +
                       g_->grid_sum(comps, fiber, n, z, nullptr);
    std::vector<double> scratch(static_cast<std::size_t>(fiber) * n);
    std::vector<double*> gp(fiber);
    for (int c = 0; c < fiber; ++c) gp[c] = scratch.data() + static_cast<std::size_t>(c) * n;
    double v = f_->grid_sum(comps, fiber, n, z, grads);
    v += g_->grid_sum(comps, fiber, n, z, gp.data());
    for (int c = 0; c < fiber; ++c)
      for (std::size_t i = 0; i < n; ++i) grads[c][i] += gp[c][i];
    return v;
  }

private:
  IntegrandPtr f_, g_;
};

// f(P z) with P = B B^T for an orthonormal basis B of W_A
class ProjectedIntegrand final : public Integrand {
public:
  ProjectedIntegrand(IntegrandPtr f, Eigen::MatrixXd basis)
      : f_(std::move(f)), basis_(std::move(basis)), proj_(basis_ * basis_.transpose()) {}
  double value(const Eigen::VectorXd& z) const override { return f_->value(proj_ * z); }
  bool differentiable() const override { return f_->differentiable(); }
  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    Eigen::VectorXd inner;
    f_->gradient(proj_ * z, inner);
    g = proj_.transpose() * inner;
  }
  bool has_strong_recession() const override { return f_->has_strong_recession(); }
  double recession(const Eigen::VectorXd& z) const override {
    return f_->recession(proj_ * z);
  }
  bool upper_recession_analytic(const Eigen::VectorXd& z, double& out) const override {
    return f_->upper_recession_analytic(proj_ * z, out);
  }
  bool linear_growth() const override { return f_->linear_growth(); }
  double growth_constant() const override { return f_->growth_constant(); }
  IntegrandPtr smoothed(double eps) const override {
    return std::make_shared<ProjectedIntegrand>(f_->smoothed(eps), basis_);
  }
  std::string describe() const override {
    std::ostringstream os;
    os << "tilde[" << f_->describe() << ", span_dim=" << basis_.cols() << "]";
    return os.str();
  }

private:
  IntegrandPtr f_;
  Eigen::MatrixXd basis_;
  Eigen::MatrixXd proj_;
};

} // namespace

IntegrandPtr make_constant(double c, int) { return std::make_shared<ConstantIntegrand>(c); }
IntegrandPtr make_norm() { return std::make_shared<NormIntegrand>(); }
IntegrandPtr make_smooth_norm(double eps) { return std::make_shared<SmoothNormIntegrand>(eps); }
IntegrandPtr make_area() { return std::make_shared<AreaIntegrand>(); }
IntegrandPtr make_quadratic() { return std::make_shared<QuadraticIntegrand>(); }
IntegrandPtr make_radial_double_well() { return std::make_shared<RadialDoubleWell>(); }
IntegrandPtr make_distance(std::vector<Eigen::VectorXd> points) {
  return std::make_shared<DistanceIntegrand>(std::move(points));
}
IntegrandPtr make_smooth_distance(std::vector<Eigen::VectorXd> points, double eps) {
  return std::make_shared<SmoothDistanceIntegrand>(std::move(points), eps);
}
IntegrandPtr make_shifted_norm(Eigen::VectorXd a) {
  return std::make_shared<ShiftedNormIntegrand>(std::move(a));
}
IntegrandPtr make_scaled(double a, IntegrandPtr f) {
  return std::make_shared<ScaledIntegrand>(a, std::move(f));
}
IntegrandPtr make_sum(IntegrandPtr f, IntegrandPtr g) {
  return std::make_shared<SumIntegrand>(std::move(f), std::move(g));
}

IntegrandPtr tilde_transform(IntegrandPtr f, const Eigen::MatrixXd& span_basis) {
  if (span_basis.cols() > 0) {
    Eigen::MatrixXd gram = span_basis.transpose() * span_basis;
    if ((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() >
        1e-10)
      throw std::invalid_argument("tilde_transform: span basis must be orthonormal");
  }
  return std::make_shared<ProjectedIntegrand>(std::move(f), span_basis);
}

// -------------------------------------------------------------------------
// transforms and recessions

double s_transform(const Integrand& f, const Eigen::VectorXd& zhat, double boundary_tol) {
  double r = zhat.norm();
  if (r > 1.0 + boundary_tol)
    throw std::invalid_argument("s_transform: |zhat| must be <= 1");
  if (r >= 1.0 - boundary_tol) {
    if (!f.has_strong_recession())
      throw std::runtime_error("s_transform: boundary evaluation needs a strong recession");
    return f.recession(zhat);
  }
  return (1.0 - r) * f.value(zhat / (1.0 - r));
}

double t_transform(const std::function<double(const Eigen::VectorXd&)>& g,
                   const Eigen::VectorXd& z) {
  double r = z.norm();
  return (1.0 + r) * g(z / (1.0 + r));
}

RecessionEstimate upper_recession(const Integrand& f, const Eigen::VectorXd& z,
                                  std::uint64_t seed) {
  RecessionEstimate est;
  double analytic = 0.0;
  if (f.upper_recession_analytic(z, analytic)) {
    est.value = analytic;
    est.analytic = true;
    return est;
  }
  // numeric upper estimate of limsup f(t z')/t over z' -> z, t -> inf:
  // per-stage maxima over shrinking perturbation balls, stabilized on the
  // tail stages (early stages overshoot for any Lipschitz integrand)
  Rng rng(seed);
  std::vector<double> stage_max;
  for (int p = 4; p <= 12; ++p) {
    double t = std::pow(2.0, p);
    double radius = 1.0 / t;
    double best = f.value(t * z) / t;
    for (int j = 0; j < 64; ++j) {
      Eigen::VectorXd zp = z + radius * rng.normal_vector(z.size());
      best = std::max(best, f.value(t * zp) / t);
    }
    stage_max.push_back(best);
  }
  est.value = std::max({stage_max[stage_max.size() - 3], stage_max[stage_max.size() - 2],
                        stage_max.back()});
  est.analytic = false;
  return est;
}

// -------------------------------------------------------------------------
// DSL

namespace {

std::string strip_ws(std::string s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  return out;
}

// split on '+' at nesting depth 0
std::vector<std::string> split_terms(const std::string& s) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '(' || c == '[') ++depth;
    if (c == ')' || c == ']') --depth;
    if (c == '+' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<Eigen::VectorXd> parse_point_list(const std::string& s) {
  // [[1,0],[-1,0]]
  std::vector<Eigen::VectorXd> pts;
  std::size_t pos = 0;
  if (s.empty() || s.front() != '[' || s.back() != ']')
    throw std::runtime_error("integrand DSL: expected [[..],[..]] point list");
  std::string body = s.substr(1, s.size() - 2);
  while (pos < body.size()) {
    std::size_t open = body.find('[', pos);
    if (open == std::string::npos) break;
    std::size_t close = body.find(']', open);
    if (close == std::string::npos)
      throw std::runtime_error("integrand DSL: unterminated point");
    std::stringstream ss(body.substr(open + 1, close - open - 1));
    std::vector<double> vals;
    std::string tok;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    Eigen::VectorXd v(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
    pts.push_back(v);
    pos = close + 1;
  }
  return pts;
}

IntegrandPtr parse_primary(const std::string& s) {
  std::size_t open = s.find('(');
  if (open == std::string::npos) {
    // bare number
    try {
      return make_constant(std::stod(s));
    } catch (...) {
      throw std::runtime_error("integrand DSL: cannot parse term '" + s + "'");
    }
  }
  if (s.back() != ')')
    throw std::runtime_error("integrand DSL: missing ')' in '" + s + "'");
  std::string name = s.substr(0, open);
  std::string args = s.substr(open + 1, s.size() - open - 2);
  if (name == "norm") return make_norm();
  if (name == "area") return make_area();
  if (name == "quadratic") return make_quadratic();
  if (name == "radial_double_well") return make_radial_double_well();
  if (name == "smooth_norm") return make_smooth_norm(std::stod(args));
  if (name == "constant") return make_constant(std::stod(args));
  if (name == "distance") {
    std::string a = args;
    if (a.rfind("points=", 0) == 0) a = a.substr(7);
    return make_distance(parse_point_list(a));
  }
  throw std::runtime_error("integrand DSL: unknown integrand '" + name + "'");
}

} // namespace

IntegrandPtr parse_integrand(std::string_view text) {
  std::string s = strip_ws(std::string(text));
  // unicode minus from copied formulas
  for (std::string::size_type p; (p = s.find("\xe2\x88\x92")) != std::string::npos;)
    s.replace(p, 3, "-");
  if (s.empty()) throw std::runtime_error("integrand DSL: empty expression");
  IntegrandPtr acc;
  for (const std::string& term : split_terms(s)) {
    if (term.empty()) throw std::runtime_error("integrand DSL: empty term");
    IntegrandPtr cur;
    std::size_t star = term.find('*');
    // "coef*primary" only when the prefix is a plain number
    bool scaled = false;
    double coef = 1.0;
    if (star != std::string::npos) {
      try {
        std::size_t used = 0;
        coef = std::stod(term.substr(0, star), &used);
        scaled = used == star;
      } catch (...) {
        scaled = false;
      }
    }
    if (scaled) {
      cur = make_scaled(coef, parse_primary(term.substr(star + 1)));
    } else {
      cur = parse_primary(term);
    }
    acc = acc ? make_sum(acc, cur) : cur;
  }
  return acc;
}

} // namespace afree
