#include "fb/problem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "fb/error.hpp"

namespace fb {

namespace {

// C-infinity step: 0 for t <= 0, 1 for t >= 1.
double psi(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }

double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = psi(t), b = psi(1.0 - t);
  return a / (a + b);
}

double smooth_step_derivative(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  const double a = psi(t), b = psi(1.0 - t);
  const double da = a / (t * t), db = b / ((1.0 - t) * (1.0 - t));
  return (da * b + a * db) / ((a + b) * (a + b));
}

Vec zero_vec(int n) { return Vec::Zero(n); }

}  // namespace

// ---------------------------------------------------------------------------
// Nonlinearity

Nonlinearity Nonlinearity::constant_f(double c) {
  Nonlinearity nl;
  nl.kind_ = NonlinearityKind::ConstantF;
  nl.name_ = "constant_f";
  nl.params_ = {c};
  return nl;
}

Nonlinearity Nonlinearity::linear_f(double a, double slope) {
  Nonlinearity nl;
  nl.kind_ = NonlinearityKind::LinearF;
  nl.name_ = "linear_f";
  nl.params_ = {a, slope};
  return nl;
}

Nonlinearity Nonlinearity::quadratic_F(double b, double a) {
  Nonlinearity nl;
  nl.kind_ = NonlinearityKind::QuadraticF;
  nl.name_ = "quadratic_F";
  nl.params_ = {b, a};
  return nl;
}

Nonlinearity Nonlinearity::bump_times_u(int dim, double m, std::vector<Vec> centers) {
  if (!(m > 0.0)) throw Error(ErrorCode::InvalidArgument, "bump_times_u needs m > 0");
  if (centers.empty()) throw Error(ErrorCode::InvalidArgument, "bump_times_u needs a center");
  Nonlinearity nl;
  nl.kind_ = NonlinearityKind::BumpTimesU;
  nl.name_ = "bump_times_u";
  nl.params_ = {m};
  for (const auto& c : centers) {
    if (c.size() != dim) throw Error(ErrorCode::InvalidArgument, "bump center dimension mismatch");
    for (int i = 0; i < dim; ++i) nl.params_.push_back(c[i]);
  }
  nl.r_inner_ = ball_radius(dim, 0.5 * m);
  nl.r_outer_ = ball_radius(dim, m);
  nl.seeds_ = std::move(centers);
  return nl;
}

Nonlinearity Nonlinearity::custom_table(std::vector<double> u, std::vector<double> F) {
  if (u.size() != F.size() || u.size() < 2)
    throw Error(ErrorCode::InvalidArgument, "custom_table needs >= 2 (u, F) pairs");
  for (std::size_t k = 1; k < u.size(); ++k)
    if (!(u[k] > u[k - 1])) throw Error(ErrorCode::InvalidArgument, "custom_table u must increase");
  Nonlinearity nl;
  nl.kind_ = NonlinearityKind::CustomTable;
  nl.name_ = "custom_table";
  for (std::size_t k = 0; k < u.size(); ++k) {
    nl.params_.push_back(u[k]);
    nl.params_.push_back(F[k]);
  }
  // Fritsch-Carlson monotone slopes.
  const std::size_t K = u.size();
  std::vector<double> delta(K - 1);
  for (std::size_t k = 0; k + 1 < K; ++k) delta[k] = (F[k + 1] - F[k]) / (u[k + 1] - u[k]);
  std::vector<double> d(K);
  d[0] = delta[0];
  d[K - 1] = delta[K - 2];
  for (std::size_t k = 1; k + 1 < K; ++k) {
    if (delta[k - 1] * delta[k] <= 0.0) {
      d[k] = 0.0;
    } else {
      const double h0 = u[k] - u[k - 1], h1 = u[k + 1] - u[k];
      const double w1 = 2.0 * h1 + h0, w2 = h1 + 2.0 * h0;
      d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
  }
  for (std::size_t k = 0; k + 1 < K; ++k) {
    if (delta[k] == 0.0) {
      d[k] = d[k + 1] = 0.0;
      continue;
    }
    const double a = d[k] / delta[k], b = d[k + 1] / delta[k];
    const double s = a * a + b * b;
    if (s > 9.0) {
      const double t = 3.0 / std::sqrt(s);
      d[k] = t * a * delta[k];
      d[k + 1] = t * b * delta[k];
    }
  }
  nl.tu_ = std::move(u);
  nl.tF_ = std::move(F);
  nl.td_ = std::move(d);
  return nl;
}

void Nonlinearity::table_eval(double u, double* F, double* f, double* fp) const {
  const std::size_t K = tu_.size();
  if (u >= tu_[K - 1]) {
    // Linear continuation beyond the table.
    if (F) *F = tF_[K - 1] + td_[K - 1] * (u - tu_[K - 1]);
    if (f) *f = td_[K - 1];
    if (fp) *fp = 0.0;
    return;
  }
  const auto it = std::upper_bound(tu_.begin(), tu_.end(), u);
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(it - tu_.begin())) - 1;
  const double h = tu_[k + 1] - tu_[k];
  const double t = (u - tu_[k]) / h;
  const double y0 = tF_[k], y1 = tF_[k + 1], m0 = td_[k] * h, m1 = td_[k + 1] * h;
  // Cubic Hermite basis.
  const double t2 = t * t, t3 = t2 * t;
  if (F)
    *F = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * y1 +
         (t3 - t2) * m1;
  if (f)
    *f = ((6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * y1 +
          (3 * t2 - 2 * t) * m1) /
         h;
  if (fp)
    *fp = ((12 * t - 6) * y0 + (6 * t - 4) * m0 + (-12 * t + 6) * y1 + (6 * t - 2) * m1) / (h * h);
}

double Nonlinearity::bump(const Vec& x) const {
  if (kind_ != NonlinearityKind::BumpTimesU) return 1.0;
  double value = 0.0;
  for (const auto& c : seeds_) {
    const double s = (x - c).norm();
    if (s >= r_outer_) continue;
    value = std::max(value, smooth_step((r_outer_ - s) / (r_outer_ - r_inner_)));
  }
  return value;
}

double Nonlinearity::bump_slope(double s) const {
  return -smooth_step_derivative((r_outer_ - s) / (r_outer_ - r_inner_)) / (r_outer_ - r_inner_);
}

double Nonlinearity::F(const Vec& x, double u) const {
  switch (kind_) {
    case NonlinearityKind::ConstantF: return params_[0] * u;
    case NonlinearityKind::LinearF: return params_[0] * u + 0.5 * params_[1] * u * u;
    case NonlinearityKind::QuadraticF: return params_[1] * u + params_[0] * u * u;
    case NonlinearityKind::BumpTimesU: return bump(x) * u;
    case NonlinearityKind::CustomTable: {
      double v = 0.0;
      table_eval(u, &v, nullptr, nullptr);
      return v;
    }
  }
  return 0.0;
}

double Nonlinearity::f(const Vec& x, double u) const {
  switch (kind_) {
    case NonlinearityKind::ConstantF: return params_[0];
    case NonlinearityKind::LinearF: return params_[0] + params_[1] * u;
    case NonlinearityKind::QuadraticF: return params_[1] + 2.0 * params_[0] * u;
    case NonlinearityKind::BumpTimesU: return bump(x);
    case NonlinearityKind::CustomTable: {
      double v = 0.0;
      table_eval(u, nullptr, &v, nullptr);
      return v;
    }
  }
  return 0.0;
}

double Nonlinearity::fprime(const Vec& /*x*/, double u) const {
  switch (kind_) {
    case NonlinearityKind::ConstantF: return 0.0;
    case NonlinearityKind::LinearF: return params_[1];
    case NonlinearityKind::QuadraticF: return 2.0 * params_[0];
    case NonlinearityKind::BumpTimesU: return 0.0;
    case NonlinearityKind::CustomTable: {
      double v = 0.0;
      table_eval(u, nullptr, nullptr, &v);
      return v;
    }
  }
  return 0.0;
}

Vec Nonlinearity::grad_x_F(const Vec& x, double u) const {
  Vec g = zero_vec(static_cast<int>(x.size()));
  if (kind_ != NonlinearityKind::BumpTimesU || u == 0.0) return g;
  // Gradient of the active (maximal) bump.
  double best = 0.0;
  const Vec* active = nullptr;
  for (const auto& c : seeds_) {
    const double s = (x - c).norm();
    if (s >= r_outer_) continue;
    const double v = smooth_step((r_outer_ - s) / (r_outer_ - r_inner_));
    if (v > best) {
      best = v;
      active = &c;
    }
  }
  if (!active) return g;
  const Vec d = x - *active;
  const double s = d.norm();
  if (s <= r_inner_ || s == 0.0) return g;
  return (bump_slope(s) * u / s) * d;
}

// ---------------------------------------------------------------------------
// CoefficientMatrix

CoefficientMatrix CoefficientMatrix::identity(int dim) {
  CoefficientMatrix A;
  A.kind_ = MatrixKind::Identity;
  A.name_ = "identity";
  A.dim_ = dim;
  A.lambda_ = 1.0;
  A.constant_ = Mat::Identity(dim, dim);
  return A;
}

CoefficientMatrix CoefficientMatrix::constant_spd(int dim, std::vector<double> entries,
                                                  double lambda) {
  if (static_cast<int>(entries.size()) != dim * dim)
    throw Error(ErrorCode::InvalidArgument, "constant_spd needs n*n entries");
  CoefficientMatrix A;
  A.kind_ = MatrixKind::ConstantSpd;
  A.name_ = "constant_spd";
  A.dim_ = dim;
  A.params_ = entries;
  A.constant_.resize(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) A.constant_(i, j) = entries[i * dim + j];
  if (lambda > 0.0) {
    A.lambda_ = lambda;
  } else {
    const Mat sym = 0.5 * (A.constant_ + A.constant_.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    A.lambda_ = std::min({1.0, lo, 1.0 / hi});
  }
  A.params_.push_back(A.lambda_);
  return A;
}

CoefficientMatrix CoefficientMatrix::periodic_spd(int dim, double period, double amp, double asym,
                                                  double lambda) {
  if (!(period > 0.0)) throw Error(ErrorCode::InvalidArgument, "periodic_spd needs T > 0");
  CoefficientMatrix A;
  A.kind_ = MatrixKind::PeriodicSpd;
  A.name_ = "periodic_spd";
  A.dim_ = dim;
  A.period_ = period;
  A.amp_ = amp;
  A.asym_ = asym;
  // Gershgorin bound on the eigenvalues.
  const double spread = std::abs(amp) * (1.0 + 0.5 * (dim - 1));
  A.lambda_ = lambda > 0.0 ? lambda : std::min(1.0 - spread, 1.0 / (1.0 + spread));
  A.params_ = {period, amp, asym, A.lambda_};
  return A;
}

double CoefficientMatrix::entry(const Vec& x, int i, int j) const {
  switch (kind_) {
    case MatrixKind::Identity: return i == j ? 1.0 : 0.0;
    case MatrixKind::ConstantSpd: return constant_(i, j);
    case MatrixKind::PeriodicSpd: {
      const double w = 2.0 * kPi / *period_;
      if (i == j) return 1.0 + amp_ * std::cos(w * x[i]);
      double v = 0.5 * amp_ * std::sin(w * x[i]) * std::sin(w * x[j]);
      if (i == 0 && j == 1) v += asym_;
      return v;
    }
  }
  return 0.0;
}

Mat CoefficientMatrix::operator()(const Vec& x) const {
  if (kind_ != MatrixKind::PeriodicSpd) return constant_;
  Mat M(dim_, dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) M(i, j) = entry(x, i, j);
  return M;
}

Mat CoefficientMatrix::derivative_along(const Vec& x, const Vec& xi) const {
  if (kind_ != MatrixKind::PeriodicSpd) return Mat::Zero(dim_, dim_);
  const double norm = xi.norm();
  if (norm == 0.0) return Mat::Zero(dim_, dim_);
  const double s = 1e-5 / norm;
  return ((*this)(x + s * xi) - (*this)(x - s * xi)) / (2.0 * s);
}

// ---------------------------------------------------------------------------
// WeightField

WeightField WeightField::constant_q(double c) {
  if (!(c > 0.0)) throw Error(ErrorCode::InvalidArgument, "constant_q needs c > 0");
  WeightField q;
  q.kind_ = WeightKind::ConstantQ;
  q.name_ = "constant_q";
  q.params_ = {c};
  q.c_ = c;
  q.q_lo_ = q.q_hi_ = c;
  return q;
}

WeightField WeightField::periodic_q(double period, double c, double amp) {
  if (!(period > 0.0) || !(c > 0.0))
    throw Error(ErrorCode::InvalidArgument, "periodic_q needs T > 0 and c > 0");
  WeightField q;
  q.kind_ = WeightKind::PeriodicQ;
  q.name_ = "periodic_q";
  q.params_ = {period, c, amp};
  q.c_ = c;
  q.amp_ = amp;
  q.period_ = period;
  q.q_lo_ = c * (1.0 - std::abs(amp));
  q.q_hi_ = c * (1.0 + std::abs(amp));
  return q;
}

double WeightField::operator()(const Vec& x) const {
  if (kind_ == WeightKind::ConstantQ) return c_;
  const double w = 2.0 * kPi / *period_;
  double s = 0.0;
  for (int i = 0; i < x.size(); ++i) s += std::cos(w * x[i]);
  return c_ * (1.0 + amp_ * s / static_cast<double>(x.size()));
}

Vec WeightField::gradient(const Vec& x) const {
  Vec g = Vec::Zero(x.size());
  if (kind_ == WeightKind::ConstantQ) return g;
  const double w = 2.0 * kPi / *period_;
  for (int i = 0; i < x.size(); ++i)
    g[i] = -c_ * amp_ * w * std::sin(w * x[i]) / static_cast<double>(x.size());
  return g;
}

// ---------------------------------------------------------------------------
// ProblemSpec

namespace {
void require_nonnegative(double u) {
  if (u < 0.0 || std::isnan(u)) {
    std::ostringstream os;
    os << "u = " << u << " < 0";
    throw Error(ErrorCode::NegativeU, os.str());
  }
}
}  // namespace

double ProblemSpec::F(const Vec& x, double u) const {
  require_nonnegative(u);
  return nonlinearity.F(x, u);
}

double ProblemSpec::f(const Vec& x, double u) const {
  require_nonnegative(u);
  return nonlinearity.f(x, u);
}

double ProblemSpec::fprime(const Vec& x, double u) const {
  require_nonnegative(u);
  return nonlinearity.fprime(x, u);
}

double eval_F(const ProblemSpec& spec, const Vec& x, double u) { return spec.F(x, u); }
double eval_f(const ProblemSpec& spec, const Vec& x, double u) { return spec.f(x, u); }
double eval_fprime(const ProblemSpec& spec, const Vec& x, double u) { return spec.fprime(x, u); }

std::vector<std::string> nonlinearity_builtins() {
  return {"constant_f", "linear_f", "quadratic_F", "bump_times_u", "custom_table"};
}
std::vector<std::string> matrix_builtins() { return {"identity", "constant_spd", "periodic_spd"}; }
std::vector<std::string> weight_builtins() { return {"constant_q", "periodic_q"}; }

namespace {

double param(const std::vector<double>& p, std::size_t k, double fallback) {
  return k < p.size() ? p[k] : fallback;
}

[[noreturn]] void unknown(const std::string& what, const std::string& name,
                          const std::vector<std::string>& known) {
  std::string list;
  for (const auto& k : known) list += (list.empty() ? "" : ", ") + k;
  throw Error(ErrorCode::UnknownBuiltin, what + " '" + name + "' (known: " + list + ")");
}

}  // namespace

ProblemSpec build_problem(const ProblemConfig& cfg) {
  if (cfg.dim < 1 || cfg.dim > 3)
    throw Error(ErrorCode::InvalidArgument, "dimension must be 1, 2 or 3");
  if (!(cfg.volume > 0.0))
    throw Error(ErrorCode::NonPositiveVolumeTarget, "volume target must be positive");
  const int n = cfg.dim;
  const auto& np = cfg.nonlinearity_params;
  const auto& mp = cfg.matrix_params;
  const auto& wp = cfg.weight_params;

  ProblemSpec spec;
  spec.dim = n;
  spec.volume = cfg.volume;

  if (cfg.nonlinearity == "constant_f") {
    spec.nonlinearity = Nonlinearity::constant_f(param(np, 0, 1.0));
  } else if (cfg.nonlinearity == "linear_f") {
    spec.nonlinearity = Nonlinearity::linear_f(param(np, 0, 1.0), param(np, 1, 0.0));
  } else if (cfg.nonlinearity == "quadratic_F") {
    spec.nonlinearity = Nonlinearity::quadratic_F(param(np, 0, 1.0), param(np, 1, 0.0));
  } else if (cfg.nonlinearity == "bump_times_u") {
    if (np.size() < 1 + static_cast<std::size_t>(n) || (np.size() - 1) % n != 0)
      throw Error(ErrorCode::InvalidArgument, "bump_times_u params: m, then n coordinates per center");
    std::vector<Vec> centers;
    for (std::size_t k = 1; k < np.size(); k += n) {
      Vec c(n);
      for (int i = 0; i < n; ++i) c[i] = np[k + i];
      centers.push_back(c);
    }
    spec.nonlinearity = Nonlinearity::bump_times_u(n, np[0], std::move(centers));
  } else if (cfg.nonlinearity == "custom_table") {
    if (np.size() < 4 || np.size() % 2 != 0)
      throw Error(ErrorCode::InvalidArgument, "custom_table params: u0, F0, u1, F1, ...");
    std::vector<double> u, F;
    for (std::size_t k = 0; k < np.size(); k += 2) {
      u.push_back(np[k]);
      F.push_back(np[k + 1]);
    }
    spec.nonlinearity = Nonlinearity::custom_table(std::move(u), std::move(F));
  } else {
    unknown("nonlinearity", cfg.nonlinearity, nonlinearity_builtins());
  }

  if (cfg.matrix == "identity") {
    spec.matrix = CoefficientMatrix::identity(n);
  } else if (cfg.matrix == "constant_spd") {
    std::vector<double> entries(mp.begin(), mp.begin() + std::min<std::size_t>(mp.size(), n * n));
    spec.matrix = CoefficientMatrix::constant_spd(n, entries, param(mp, n * n, 0.0));
  } else if (cfg.matrix == "periodic_spd") {
    spec.matrix = CoefficientMatrix::periodic_spd(n, param(mp, 0, 1.0), param(mp, 1, 0.2),
                                                  param(mp, 2, 0.0), param(mp, 3, 0.0));
  } else {
    unknown("matrix", cfg.matrix, matrix_builtins());
  }

  if (cfg.weight == "constant_q") {
    spec.weight = WeightField::constant_q(param(wp, 0, 1.0));
  } else if (cfg.weight == "periodic_q") {
    spec.weight = WeightField::periodic_q(param(wp, 0, 1.0), param(wp, 1, 1.0), param(wp, 2, 0.2));
  } else {
    unknown("weight", cfg.weight, weight_builtins());
  }

  // All declared periods must agree.
  std::optional<double> period = cfg.period;
  for (const auto& p : {spec.matrix.period(), spec.weight.period()}) {
    if (!p) continue;
    if (period && std::abs(*period - *p) > 1e-12 * std::max(1.0, *p)) {
      std::ostringstream os;
      os << "declared periods " << *period << " and " << *p << " differ";
      throw Error(ErrorCode::PeriodMismatch, os.str());
    }
    period = p;
  }
  if (period && spec.nonlinearity.depends_on_x())
    throw Error(ErrorCode::PeriodMismatch, "bump_times_u is not periodic");
  spec.period = period;
  return spec;
}

}  // namespace fb
