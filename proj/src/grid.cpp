#include "fb/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fb/error.hpp"

namespace fb {

// ---------------------------------------------------------------------------
// Grid

Grid Grid::centered(int dim, double radius, double h) {
  if (!(h > 0.0) || !(radius > 0.0))
    throw Error(ErrorCode::InvalidArgument, "grid needs h > 0 and radius > 0");
  Grid g;
  g.dim = dim;
  g.h = h;
  const auto half = static_cast<std::int64_t>(std::ceil(radius / h - 1e-9));
  g.origin = Vec::Constant(dim, -static_cast<double>(half) * h);
  for (int a = 0; a < dim; ++a) g.cells[a] = 2 * half;
  return g;
}

std::size_t Grid::num_nodes() const {
  std::size_t n = 1;
  for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(cells[a] + 1);
  return n;
}

std::size_t Grid::num_cells() const {
  std::size_t n = 1;
  for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(cells[a]);
  return n;
}

Index3 Grid::node_strides() const {
  Index3 s{0, 0, 0};
  std::int64_t stride = 1;
  for (int a = dim - 1; a >= 0; --a) {
    s[a] = stride;
    stride *= cells[a] + 1;
  }
  return s;
}

std::size_t Grid::node_index(const Index3& ijk) const {
  std::size_t idx = 0;
  for (int a = 0; a < dim; ++a) idx = idx * static_cast<std::size_t>(cells[a] + 1) + ijk[a];
  return idx;
}

Index3 Grid::node_coords(std::size_t index) const {
  Index3 ijk{0, 0, 0};
  for (int a = dim - 1; a >= 0; --a) {
    const auto n = static_cast<std::size_t>(cells[a] + 1);
    ijk[a] = static_cast<std::int64_t>(index % n);
    index /= n;
  }
  return ijk;
}

Vec Grid::position(const Index3& ijk) const {
  Vec x(dim);
  for (int a = 0; a < dim; ++a) x[a] = origin[a] + static_cast<double>(ijk[a]) * h;
  return x;
}

Vec Grid::node_position(std::size_t index) const { return position(node_coords(index)); }

bool Grid::on_boundary(const Index3& ijk) const {
  for (int a = 0; a < dim; ++a)
    if (ijk[a] == 0 || ijk[a] == cells[a]) return true;
  return false;
}

std::size_t Grid::cell_index(const Index3& c) const {
  std::size_t idx = 0;
  for (int a = 0; a < dim; ++a) idx = idx * static_cast<std::size_t>(cells[a]) + c[a];
  return idx;
}

Index3 Grid::cell_coords(std::size_t index) const {
  Index3 c{0, 0, 0};
  for (int a = dim - 1; a >= 0; --a) {
    const auto n = static_cast<std::size_t>(cells[a]);
    c[a] = static_cast<std::int64_t>(index % n);
    index /= n;
  }
  return c;
}

Vec Grid::cell_center(const Index3& c) const {
  Vec x(dim);
  for (int a = 0; a < dim; ++a) x[a] = origin[a] + (static_cast<double>(c[a]) + 0.5) * h;
  return x;
}

double Grid::cell_volume() const { return std::pow(h, dim); }

bool Grid::contains(const Vec& x, double margin) const {
  for (int a = 0; a < dim; ++a)
    if (x[a] < lower(a) + margin || x[a] > upper(a) - margin) return false;
  return true;
}

double Grid::distance_to_boundary(const Vec& x) const {
  double d = std::numeric_limits<double>::infinity();
  for (int a = 0; a < dim; ++a) d = std::min({d, x[a] - lower(a), upper(a) - x[a]});
  return d;
}

bool Grid::same_as(const Grid& o) const {
  if (dim != o.dim || h != o.h) return false;
  for (int a = 0; a < dim; ++a)
    if (cells[a] != o.cells[a] || origin[a] != o.origin[a]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Fields

double ScalarField::max() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

namespace {

// Locates x: lower cell corner and fractional offsets. False outside the box.
bool locate(const Grid& g, const Vec& x, Index3& c, std::array<double, 3>& t) {
  c = {0, 0, 0};
  t = {0.0, 0.0, 0.0};
  for (int a = 0; a < g.dim; ++a) {
    const double s = (x[a] - g.origin[a]) / g.h;
    if (s < -1e-9 || s > static_cast<double>(g.cells[a]) + 1e-9) return false;
    auto k = static_cast<std::int64_t>(std::floor(s));
    k = std::clamp<std::int64_t>(k, 0, g.cells[a] - 1);
    c[a] = k;
    t[a] = std::clamp(s - static_cast<double>(k), 0.0, 1.0);
  }
  return true;
}

}  // namespace

double ScalarField::sample(const Vec& x) const {
  Index3 c;
  std::array<double, 3> t;
  if (!locate(grid, x, c, t)) return 0.0;
  const int corners = 1 << grid.dim;
  double v = 0.0;
  for (int b = 0; b < corners; ++b) {
    double w = 1.0;
    Index3 k = c;
    for (int a = 0; a < grid.dim; ++a) {
      const bool up = (b >> a) & 1;
      w *= up ? t[a] : 1.0 - t[a];
      k[a] += up;
    }
    if (w != 0.0) v += w * values[grid.node_index(k)];
  }
  return v;
}

Vec ScalarField::sample_gradient(const Vec& x) const {
  Vec g = Vec::Zero(grid.dim);
  Index3 c;
  std::array<double, 3> t;
  if (!locate(grid, x, c, t)) return g;
  const int corners = 1 << grid.dim;
  for (int b = 0; b < corners; ++b) {
    Index3 k = c;
    for (int a = 0; a < grid.dim; ++a) k[a] += (b >> a) & 1;
    const double v = values[grid.node_index(k)];
    for (int d = 0; d < grid.dim; ++d) {
      double w = 1.0;
      for (int a = 0; a < grid.dim; ++a) {
        const bool up = (b >> a) & 1;
        if (a == d)
          w *= (up ? 1.0 : -1.0) / grid.h;
        else
          w *= up ? t[a] : 1.0 - t[a];
      }
      g[d] += w * v;
    }
  }
  return g;
}

Vec VectorField::at(std::size_t cell) const {
  Vec v(grid.dim);
  for (int a = 0; a < grid.dim; ++a) v[a] = values[cell * grid.dim + a];
  return v;
}

void VectorField::set(std::size_t cell, const Vec& v) {
  for (int a = 0; a < grid.dim; ++a) values[cell * grid.dim + a] = v[a];
}

double VectorField::sup_norm() const {
  double m = 0.0;
  for (std::size_t c = 0; c < grid.num_cells(); ++c) m = std::max(m, at(c).norm());
  return m;
}

VectorField gradient_field(const ScalarField& u) {
  const Grid& g = u.grid;
  VectorField out(g);
  const Index3 s = g.node_strides();
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const std::size_t i = g.node_index(g.cell_coords(c));
    for (int a = 0; a < g.dim; ++a)
      out.values[c * g.dim + a] = (u[i + s[a]] - u[i]) / g.h;
  }
  return out;
}

std::string energy_csv_header() {
  return "dirichlet,potential,volume_term,total,vol_q_raw,smoothed,delta";
}

std::string energy_csv_row(const EnergyBreakdown& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g", e.dirichlet,
                e.potential, e.volume_term, e.total, e.vol_q_raw, e.smoothed ? 1 : 0, e.delta);
  return buf;
}

// ---------------------------------------------------------------------------
// Discretization

namespace {

// Local 2^n x 2^n stiffness of one cell with (symmetrised) coefficient A.
Eigen::MatrixXd local_stiffness(int n, const Mat& A, double h) {
  const int corners = 1 << n;
  const Mat S = 0.5 * (A + A.transpose());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(corners, corners);
  Eigen::MatrixXd G(n, corners);
  for (int k = 0; k < corners; ++k) {
    G.setZero();
    for (int a = 0; a < n; ++a) {
      const int bit = 1 << a;
      G(a, k | bit) += 1.0 / h;
      G(a, k & ~bit) -= 1.0 / h;
    }
    M += G.transpose() * S * G;
  }
  return M * (2.0 * std::pow(h, n) / corners);
}

}  // namespace

Discretization::Discretization(const ProblemSpec& spec, const Grid& grid)
    : spec_(spec), grid_(grid), hn_(grid.cell_volume()) {
  if (spec.dim != grid.dim) throw Error(ErrorCode::InvalidArgument, "grid/problem dimension mismatch");
  const int n = grid.dim;
  const int corners = 1 << n;
  const std::size_t N = grid.num_nodes();

  x_.resize(N);
  q_.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    x_[i] = grid.node_position(i);
    q_[i] = spec.weight(x_[i]);
  }

  const bool constant_A = spec.matrix.kind() != MatrixKind::PeriodicSpd;
  Eigen::MatrixXd M;
  if (constant_A) M = local_stiffness(n, spec.matrix(Vec::Zero(n)), grid.h);

  const Index3 s = grid.node_strides();
  std::vector<std::int64_t> offset(corners, 0);
  for (int b = 0; b < corners; ++b)
    for (int a = 0; a < n; ++a)
      if ((b >> a) & 1) offset[b] += s[a];
  corner_offset_ = offset;
  qc_.resize(grid.num_cells());
  cell_base_.resize(grid.num_cells());
  for (std::size_t c = 0; c < grid.num_cells(); ++c) {
    const Index3 cc = grid.cell_coords(c);
    qc_[c] = spec.weight(grid.cell_center(cc));
    cell_base_[c] = grid.node_index(cc);
  }

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(grid.num_cells() * corners * corners);
  for (std::size_t c = 0; c < grid.num_cells(); ++c) {
    const Index3 cc = grid.cell_coords(c);
    if (!constant_A) M = local_stiffness(n, spec.matrix(grid.cell_center(cc)), grid.h);
    const auto base = static_cast<std::int64_t>(grid.node_index(cc));
    for (int p = 0; p < corners; ++p)
      for (int r = 0; r < corners; ++r)
        if (M(p, r) != 0.0) trip.emplace_back(base + offset[p], base + offset[r], M(p, r));
  }
  K_.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  K_.setFromTriplets(trip.begin(), trip.end());
  K_.makeCompressed();
}

Eigen::VectorXd Discretization::stiffness_times(const std::vector<double>& u) const {
  const Eigen::Map<const Eigen::VectorXd> v(u.data(), static_cast<Eigen::Index>(u.size()));
  return K_ * v;
}

ScalarField Discretization::apply_L(const ScalarField& u) const {
  const Eigen::VectorXd Ku = stiffness_times(u.values);
  ScalarField out(grid_);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Ku[static_cast<Eigen::Index>(i)] / (2.0 * hn_);
  return out;
}

double Discretization::dirichlet(const std::vector<double>& u) const {
  const Eigen::VectorXd Ku = stiffness_times(u);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * Ku[static_cast<Eigen::Index>(i)];
  return 0.5 * s;
}

double Discretization::potential(const std::vector<double>& u) const {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (u[i] != 0.0) s += spec_.F(x_[i], u[i]);
  return -2.0 * s * hn_;
}

double Discretization::cell_mean(const std::vector<double>& u, std::size_t c) const {
  const std::size_t base = cell_base_[c];
  double s = 0.0;
  for (std::int64_t o : corner_offset_) s += u[base + static_cast<std::size_t>(o)];
  return s / static_cast<double>(corner_offset_.size());
}

double Discretization::vol_q(const std::vector<double>& u) const {
  double s = 0.0;
  for (std::size_t c = 0; c < qc_.size(); ++c)
    if (cell_mean(u, c) > 0.0) s += qc_[c];
  return s * hn_;
}

double Discretization::smoothed_vol_q(const std::vector<double>& u, double delta) const {
  double s = 0.0;
  for (std::size_t c = 0; c < qc_.size(); ++c) {
    const double m = cell_mean(u, c);
    if (m > 0.0) s += qc_[c] * std::min(m / delta, 1.0);
  }
  return s * hn_;
}

std::vector<double> Discretization::smoothed_vol_gradient(const std::vector<double>& u,
                                                          double delta) const {
  std::vector<double> g(u.size(), 0.0);
  const double w = hn_ / (delta * static_cast<double>(corner_offset_.size()));
  for (std::size_t c = 0; c < qc_.size(); ++c) {
    const double m = cell_mean(u, c);
    if (m < 0.0 || m >= delta) continue;
    for (std::int64_t o : corner_offset_) g[cell_base_[c] + static_cast<std::size_t>(o)] += qc_[c] * w;
  }
  return g;
}

EnergyBreakdown Discretization::energy(const std::vector<double>& u, double Lambda,
                                       EnergyMode mode) const {
  EnergyBreakdown e;
  e.dirichlet = dirichlet(u);
  e.potential = potential(u);
  e.vol_q_raw = vol_q(u);
  e.smoothed = mode.smoothed;
  e.delta = mode.delta;
  e.volume_term = Lambda * (mode.smoothed ? smoothed_vol_q(u, mode.delta) : e.vol_q_raw);
  e.total = e.dirichlet + e.potential + e.volume_term;
  return e;
}

std::vector<double> Discretization::node_f(const std::vector<double>& u) const {
  std::vector<double> f(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) f[i] = spec_.f(x_[i], u[i]);
  return f;
}

std::vector<double> Discretization::node_fprime(const std::vector<double>& u) const {
  std::vector<double> f(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) f[i] = spec_.fprime(x_[i], u[i]);
  return f;
}

std::vector<double> Discretization::energy_gradient(const std::vector<double>& u, double Lambda,
                                                    double delta) const {
  const Eigen::VectorXd Ku = stiffness_times(u);
  std::vector<double> g = smoothed_vol_gradient(u, delta);
  for (std::size_t i = 0; i < u.size(); ++i)
    g[i] = Ku[static_cast<Eigen::Index>(i)] - 2.0 * spec_.f(x_[i], u[i]) * hn_ + Lambda * g[i];
  return g;
}

ScalarField apply_L(const ScalarField& u, const ProblemSpec& spec) {
  return Discretization(spec, u.grid).apply_L(u);
}

namespace {

// Sum of q(cell centre) h^n over cells, weighted by the indicator of a positive
// corner mean (delta = 0) or by min(mean / delta, 1).
double cell_volume_sum(const ScalarField& u, const ProblemSpec& spec, double delta) {
  const Grid& g = u.grid;
  const int corners = 1 << g.dim;
  const Index3 st = g.node_strides();
  double s = 0.0;
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Index3 cc = g.cell_coords(c);
    const std::size_t base = g.node_index(cc);
    double m = 0.0;
    for (int b = 0; b < corners; ++b) {
      std::size_t k = base;
      for (int a = 0; a < g.dim; ++a)
        if ((b >> a) & 1) k += static_cast<std::size_t>(st[a]);
      m += u[k];
    }
    m /= corners;
    if (m > 0.0) s += spec.weight(g.cell_center(cc)) * (delta > 0.0 ? std::min(m / delta, 1.0) : 1.0);
  }
  return s * g.cell_volume();
}

}  // namespace

double vol_q(const ScalarField& u, const ProblemSpec& spec) {
  return cell_volume_sum(u, spec, 0.0);
}

double smoothed_vol_q(const ScalarField& u, const ProblemSpec& spec, double delta) {
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "smoothing width must be positive");
  return cell_volume_sum(u, spec, delta);
}

EnergyBreakdown energy(const ScalarField& u, const ProblemSpec& spec, double Lambda,
                       EnergyMode mode) {
  return Discretization(spec, u.grid).energy(u.values, Lambda, mode);
}

ScalarField energy_gradient(const ScalarField& u, const ProblemSpec& spec, double Lambda,
                            double delta) {
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "smoothing width must be positive");
  ScalarField g(u.grid);
  g.values = Discretization(spec, u.grid).energy_gradient(u.values, Lambda, delta);
  return g;
}

// ---------------------------------------------------------------------------
// First variation

double first_variation(const ScalarField& u, const VectorField& xi, const ProblemSpec& spec,
                       double Lambda) {
  const Grid& g = u.grid;
  const int n = g.dim;
  const int corners = 1 << n;
  const Index3 s = g.node_strides();

  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Index3 cc = g.cell_coords(c);
    bool near = false;
    for (int a = 0; a < n; ++a) near |= cc[a] < 2 || cc[a] >= g.cells[a] - 2;
    if (near && xi.at(c).norm() > 0.0)
      throw Error(ErrorCode::MarginViolation, "xi must vanish within two cells of the box boundary");
  }

  auto xi_at = [&](Index3 c, int a, int d) -> Vec {
    c[a] += d;
    if (c[a] < 0 || c[a] >= g.cells[a]) return Vec::Zero(n);
    return xi.at(g.cell_index(c));
  };

  double total = 0.0;
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Index3 cc = g.cell_coords(c);
    const Vec X = xi.at(c);
    Mat J(n, n);  // J(i, j) = d_j xi_i
    for (int j = 0; j < n; ++j) {
      const Vec d = (xi_at(cc, j, 1) - xi_at(cc, j, -1)) / (2.0 * g.h);
      for (int i = 0; i < n; ++i) J(i, j) = d[i];
    }
    const double div = J.trace();
    if (X.norm() == 0.0 && J.norm() == 0.0) continue;

    const std::size_t base = g.node_index(cc);
    double uc = 0.0;
    Vec G = Vec::Zero(n);
    for (int b = 0; b < corners; ++b) {
      std::size_t k = base;
      for (int a = 0; a < n; ++a)
        if ((b >> a) & 1) k += s[a];
      const double v = u[k];
      uc += v;
      for (int a = 0; a < n; ++a) G[a] += ((b >> a) & 1 ? v : -v);
    }
    uc /= corners;
    G /= (corners / 2) * g.h;

    const Vec x = g.cell_center(cc);
    const Mat A = spec.matrix(x);
    const Vec GJ = J.transpose() * G;
    double v = -2.0 * GJ.dot(A * G) + G.dot(A * G) * div +
               G.dot(spec.matrix.derivative_along(x, X) * G);
    if (uc > 0.0) {
      v -= 2.0 * spec.nonlinearity.grad_x_F(x, uc).dot(X);
      v -= 2.0 * spec.F(x, uc) * div;
    }
    if (uc > 0.0) {
      const double div_qxi = spec.weight(x) * div + spec.weight.gradient(x).dot(X);
      v += Lambda * div_qxi;
    }
    total += v;
  }
  return total * g.cell_volume();
}

// ---------------------------------------------------------------------------

Vec node_gradient(const ScalarField& u, const Index3& ijk) {
  const Grid& g = u.grid;
  auto value = [&](Index3 k, int a, int d) {
    k[a] += d;
    if (k[a] < 0 || k[a] > g.cells[a]) return 0.0;
    return u[g.node_index(k)];
  };
  Vec grad = Vec::Zero(g.dim);
  for (int a = 0; a < g.dim; ++a) {
    const double u0 = value(ijk, a, 0);
    const double up = value(ijk, a, 1), um = value(ijk, a, -1);
    if (up > 0.0 && um > 0.0)
      grad[a] = (up - um) / (2.0 * g.h);
    else if (up > 0.0)
      grad[a] = (-3.0 * u0 + 4.0 * up - value(ijk, a, 2)) / (2.0 * g.h);
    else if (um > 0.0)
      grad[a] = (3.0 * u0 - 4.0 * um + value(ijk, a, -2)) / (2.0 * g.h);
  }
  return grad;
}

}  // namespace fb
