#include "fb/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fb/error.hpp"
#include "fb/oracle.hpp"

namespace fb {
namespace {

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  const double t = pos - static_cast<double>(k);
  return k + 1 < v.size() ? (1.0 - t) * v[k] + t * v[k + 1] : v[k];
}

bool in_grid(const Grid& g, const Index3& c) {
  for (int a = 0; a < g.dim; ++a)
    if (c[a] < 0 || c[a] > g.cells[a]) return false;
  return true;
}

Index3 nearest_node(const Grid& g, const Vec& x) {
  Index3 c{0, 0, 0};
  for (int a = 0; a < g.dim; ++a) c[a] = std::llround((x[a] - g.origin[a]) / g.h);
  return c;
}

// Calls fn(index3) for every lattice point within `reach` nodes of c along each axis.
template <typename Fn>
void for_box(const Grid& g, const Index3& c, std::int64_t reach, Fn&& fn) {
  const std::int64_t r1 = g.dim > 1 ? reach : 0, r2 = g.dim > 2 ? reach : 0;
  for (std::int64_t a = -reach; a <= reach; ++a)
    for (std::int64_t b = -r1; b <= r1; ++b)
      for (std::int64_t d = -r2; d <= r2; ++d) fn(Index3{c[0] + a, c[1] + b, c[2] + d});
}

Vec cell_gradient(const ScalarField& u, const Index3& cell, bool* all_positive) {
  const Grid& g = u.grid;
  const int n = g.dim;
  const Index3 st = g.node_strides();
  const std::size_t base = g.node_index(cell);
  const int corners = 1 << n;
  Vec grad = Vec::Zero(n);
  *all_positive = true;
  for (int b = 0; b < corners; ++b) {
    std::size_t k = base;
    for (int a = 0; a < n; ++a)
      if ((b >> a) & 1) k += static_cast<std::size_t>(st[a]);
    *all_positive &= u[k] > 0.0;
    for (int a = 0; a < n; ++a) grad[a] += ((b >> a) & 1 ? 1.0 : -1.0) * u[k];
  }
  return grad / (g.h * corners / 2.0);
}

double cell_mean(const ScalarField& u, const Index3& cell) {
  const Grid& g = u.grid;
  const Index3 st = g.node_strides();
  const std::size_t base = g.node_index(cell);
  const int corners = 1 << g.dim;
  double m = 0.0;
  for (int b = 0; b < corners; ++b) {
    std::size_t k = base;
    for (int a = 0; a < g.dim; ++a)
      if ((b >> a) & 1) k += static_cast<std::size_t>(st[a]);
    m += u[k];
  }
  return m / corners;
}

}  // namespace

Vec normal_at(const ScalarField& u, const Vec& x) {
  const Grid& g = u.grid;
  const int n = g.dim;
  Index3 c0{0, 0, 0};
  for (int a = 0; a < n; ++a) c0[a] = static_cast<std::int64_t>(std::floor((x[a] - g.origin[a]) / g.h));
  Vec sum = Vec::Zero(n);
  int used = 0;
  for_box(g, c0, 2, [&](const Index3& c) {
    for (int a = 0; a < n; ++a)
      if (c[a] < 0 || c[a] >= g.cells[a]) return;
    if ((g.cell_center(c) - x).norm() > 2.5 * g.h) return;
    bool pos = false;
    const Vec grad = cell_gradient(u, c, &pos);
    if (!pos) return;
    sum += grad;
    ++used;
  });
  if (used == 0) sum = u.sample_gradient(x);
  const double len = sum.norm();
  return len > 0.0 ? Vec(-sum / len) : Vec(Vec::Zero(n));
}

BoundaryPointSet extract_free_boundary(const ScalarField& u) {
  const Grid& g = u.grid;
  BoundaryPointSet set;
  set.grid = g;
  bool any = false;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] > 0.0)) continue;
    any = true;
    const Index3 c = g.node_coords(i);
    for (int a = 0; a < g.dim; ++a)
      for (int sgn : {-1, 1}) {
        Index3 o = c;
        o[a] += sgn;
        if (!in_grid(g, o)) continue;
        const std::size_t j = g.node_index(o);
        if (u[j] > 0.0) continue;
        // Linear extrapolation from the positive side.
        double t = 0.5;
        Index3 back = c;
        back[a] -= sgn;
        if (in_grid(g, back)) {
          const double ub = u[g.node_index(back)];
          if (ub > u[i]) t = std::min(1.0, u[i] / (ub - u[i]));
        }
        BoundaryPoint p;
        p.x = g.node_position(i);
        p.x[a] += sgn * t * g.h;
        p.inside = i;
        p.outside = j;
        set.points.push_back(p);
      }
  }
  if (!any) throw Error(ErrorCode::EmptySupport, "field has empty support");
  for (BoundaryPoint& p : set.points) p.normal = normal_at(u, p.x);
  return set;
}

PdeResidual pde_residual(const ScalarField& u, const ProblemSpec& spec, int margin) {
  const Grid& g = u.grid;
  const Discretization d(spec, g);
  const ScalarField Lu = d.apply_L(u);
  PdeResidual r;
  double s2 = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double fi = spec.f(g.node_position(i), u[i]);
    r.M1 = std::max(r.M1, std::abs(fi));
    if (!(u[i] > 0.0)) continue;
    const Index3 c = g.node_coords(i);
    bool deep = true;
    for_box(g, c, margin, [&](const Index3& o) {
      if (!deep) return;
      double d2 = 0.0;
      for (int a = 0; a < g.dim; ++a) d2 += static_cast<double>((o[a] - c[a]) * (o[a] - c[a]));
      if (d2 > static_cast<double>(margin * margin)) return;
      if (!in_grid(g, o) || g.on_boundary(o) || !(u[g.node_index(o)] > 0.0)) deep = false;
    });
    if (!deep) continue;
    const double e = Lu[i] - fi;
    r.sup = std::max(r.sup, std::abs(e));
    s2 += e * e;
    ++r.nodes;
  }
  r.l2 = std::sqrt(s2 * g.cell_volume());
  r.sup_relative = r.sup / std::max(r.M1, 1e-300);
  return r;
}

NeumannReport neumann_check(const ScalarField& u, const ProblemSpec& spec, double Lambda,
                            const BoundaryPointSet& bset, double tolerance) {
  if (!(Lambda > 0.0)) throw Error(ErrorCode::LambdaNonPositive, "Neumann check needs Lambda > 0");
  if (bset.empty()) throw Error(ErrorCode::EmptySupport, "no boundary points");
  const double h = u.grid.h;
  NeumannReport rep;
  rep.tolerance = tolerance;
  const double ts[3] = {2.0 * h, 4.0 * h, 6.0 * h};
  for (const BoundaryPoint& p : bset.points) {
    double gs[3];
    for (int k = 0; k < 3; ++k) {
      const Vec y = p.x - ts[k] * p.normal;
      const Vec grad = u.sample_gradient(y);
      gs[k] = grad.dot(spec.A(y) * grad);
    }
    // Least-squares line through (t_k, g_k), evaluated at t = 0.
    const double tm = 4.0 * h, gm = (gs[0] + gs[1] + gs[2]) / 3.0;
    const double slope = ((ts[0] - tm) * (gs[0] - gm) + (ts[2] - tm) * (gs[2] - gm)) / (8.0 * h * h);
    const double g0 = gm - slope * tm;
    const double target = Lambda * spec.q(p.x);
    rep.g.push_back(g0);
    rep.target.push_back(target);
    rep.residual.push_back(std::abs(g0 - target) / target);
  }
  rep.q10 = quantile(rep.residual, 0.1);
  rep.median = quantile(rep.residual, 0.5);
  rep.q90 = quantile(rep.residual, 0.9);
  rep.max = *std::max_element(rep.residual.begin(), rep.residual.end());
  rep.fraction_within = static_cast<double>(std::count_if(rep.residual.begin(), rep.residual.end(),
                                                          [&](double r) { return r <= tolerance; })) /
                        static_cast<double>(rep.residual.size());
  return rep;
}

LipschitzReport lipschitz_and_sup(const ScalarField& u, const ProblemSpec& spec) {
  const Grid& g = u.grid;
  LipschitzReport r;
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    bool pos = false;
    r.L = std::max(r.L, cell_gradient(u, g.cell_coords(c), &pos).norm());
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    r.sup = std::max(r.sup, u[i]);
    r.M1 = std::max(r.M1, std::abs(spec.f(g.node_position(i), std::max(u[i], 0.0))));
  }
  return r;
}

std::vector<std::pair<Vec, double>> sphere_samples(const Vec& c, double r) {
  const int n = static_cast<int>(c.size());
  std::vector<std::pair<Vec, double>> out;
  if (n == 1) {
    for (double s : {-1.0, 1.0}) {
      Vec x = c;
      x[0] += s * r;
      out.emplace_back(x, 0.5);
    }
  } else if (n == 2) {
    const int K = 64;
    for (int k = 0; k < K; ++k) {
      const double t = 2.0 * kPi * k / K;
      Vec x = c;
      x[0] += r * std::cos(t);
      x[1] += r * std::sin(t);
      out.emplace_back(x, 1.0 / K);
    }
  } else {
    const int K = 16;
    double wsum = 0.0;
    for (int i = 0; i < K; ++i) {
      const double th = kPi * (i + 0.5) / K;
      for (int j = 0; j < K; ++j) {
        const double ph = 2.0 * kPi * j / K;
        Vec x = c;
        x[0] += r * std::sin(th) * std::cos(ph);
        x[1] += r * std::sin(th) * std::sin(ph);
        x[2] += r * std::cos(th);
        out.emplace_back(x, std::sin(th));
        wsum += std::sin(th);
      }
    }
    for (auto& s : out) s.second /= wsum;
  }
  return out;
}

double sphere_average(const ScalarField& u, const Vec& c, double r) {
  double s = 0.0;
  for (const auto& [x, w] : sphere_samples(c, r)) s += w * u.sample(x);
  return s;
}

NondegeneracyReport nondegeneracy_scan(const ScalarField& u, const BoundaryPointSet& bset,
                                       const std::vector<double>& radii, double kappa_floor) {
  const double h = u.grid.h;
  for (double r : radii)
    if (r < 4.0 * h * (1.0 - 1e-12) || r > 0.2 * (1.0 + 1e-12))
      throw Error(ErrorCode::RadiiOutOfRange, "radii must lie in [4h, 0.2]");
  NondegeneracyReport rep;
  rep.radii = radii;
  rep.kappa_floor = kappa_floor;
  rep.kappa0 = std::numeric_limits<double>::infinity();
  for (const BoundaryPoint& p : bset.points) {
    std::vector<double> row;
    for (double r : radii) {
      const double s = sphere_average(u, p.x, r) / r;
      row.push_back(s);
      rep.kappa0 = std::min(rep.kappa0, s);
      rep.C_upper = std::max(rep.C_upper, s);
    }
    rep.s.push_back(std::move(row));
  }
  if (rep.s.empty() || radii.empty()) rep.kappa0 = 0.0;
  rep.pass = rep.kappa0 > kappa_floor;
  return rep;
}

DensityReport density_scan(const ScalarField& u, const BoundaryPointSet& bset,
                           const std::vector<double>& radii) {
  const Grid& g = u.grid;
  DensityReport rep;
  rep.radii = radii;
  for (const BoundaryPoint& p : bset.points) {
    std::vector<double> row;
    bool flag = false;
    for (double r : radii) {
      Index3 c0{0, 0, 0};
      for (int a = 0; a < g.dim; ++a) c0[a] = static_cast<std::int64_t>(std::floor((p.x[a] - g.origin[a]) / g.h));
      const auto reach = static_cast<std::int64_t>(std::ceil(r / g.h)) + 1;
      std::size_t total = 0, pos = 0;
      for_box(g, c0, reach, [&](const Index3& c) {
        if ((g.cell_center(c) - p.x).norm() > r) return;
        ++total;
        bool inside = true;
        for (int a = 0; a < g.dim; ++a) inside &= c[a] >= 0 && c[a] < g.cells[a];
        if (inside && cell_mean(u, c) > 0.0) ++pos;
      });
      const double ratio = total ? static_cast<double>(pos) / static_cast<double>(total) : 0.0;
      row.push_back(ratio);
      rep.max = std::max(rep.max, ratio);
      flag |= ratio > 0.98;
    }
    rep.ratio.push_back(std::move(row));
    rep.non_boundary.push_back(flag);
  }
  return rep;
}

ExteriorReport exterior_measure_check(const ScalarField& u, const BoundaryPointSet& bset, double r) {
  const Grid& g = u.grid;
  ExteriorReport rep;
  rep.r = r;
  rep.inconclusive = r < 2.0 * g.h;
  rep.all_pass = !rep.inconclusive;
  const auto reach = static_cast<std::int64_t>(std::ceil(r / g.h)) + 1;
  for (const BoundaryPoint& p : bset.points) {
    std::size_t zeros = 0;
    for_box(g, nearest_node(g, p.x), reach, [&](const Index3& c) {
      if (!in_grid(g, c) || (g.position(c) - p.x).norm() > r) return;
      if (!(u[g.node_index(c)] > 0.0)) ++zeros;
    });
    rep.zero_nodes.push_back(zeros);
    if (zeros == 0) rep.all_pass = false;
  }
  return rep;
}

HarnackReport harnack_check(const ScalarField& u, double M, const std::vector<Vec>& centers,
                            const std::vector<double>& radii) {
  const Grid& g = u.grid;
  const int n = g.dim;
  HarnackReport rep;
  rep.mean_value_constant = std::pow(2.0, n);
  ProblemSpec lap;
  lap.dim = n;
  lap.nonlinearity = Nonlinearity::constant_f(0.0);
  lap.matrix = CoefficientMatrix::identity(n);
  lap.weight = WeightField::constant_q(1.0);
  const ScalarField Lu = apply_L(u, lap);
  for (const Vec& c : centers)
    for (double r : radii) {
      HarnackSample s;
      s.center = c;
      s.r = r;
      for (const auto& [x, w] : sphere_samples(c, r)) {
        const double v = u.sample(x);
        if (v < -1e-12) throw Error(ErrorCode::NegativeOnSphere, "test function is negative on the sphere");
        s.sphere_avg += w * v;
      }
      const double denom = s.sphere_avg + M * r * r;
      const auto reach = static_cast<std::int64_t>(std::ceil(r / g.h)) + 1;
      double half_max = 0.0;
      for_box(g, nearest_node(g, c), reach, [&](const Index3& k) {
        if (!in_grid(g, k)) return;
        const double dist = (g.position(k) - c).norm();
        if (dist >= r) return;
        const std::size_t i = g.node_index(k);
        if (!g.on_boundary(k)) s.L_measured = std::max(s.L_measured, std::abs(Lu[i]));
        if (dist < r / 2) half_max = std::max(half_max, u[i]);
      });
      // Central differences of the interpolant at the centre.
      Vec grad(n);
      for (int a = 0; a < n; ++a) {
        Vec e = Vec::Zero(n);
        e[a] = g.h;
        grad[a] = (u.sample(c + e) - u.sample(c - e)) / (2.0 * g.h);
      }
      s.C1 = denom > 0.0 ? half_max / denom : (half_max > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      const double gr = grad.norm() * r;
      s.C2 = denom > 0.0 ? gr / denom : (gr > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      rep.C1 = std::max(rep.C1, s.C1);
      rep.C2 = std::max(rep.C2, s.C2);
      if (s.L_measured > M * (1.0 + 1e-8) + 1e-8) rep.M_certified = false;
      rep.samples.push_back(s);
    }
  rep.pass = rep.C1 <= 4.0 * rep.mean_value_constant && rep.C2 <= 4.0 * rep.mean_value_constant;
  return rep;
}

double hausdorff_to_sphere(const BoundaryPointSet& bset, const Vec& c, double R) {
  if (bset.empty()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (const BoundaryPoint& p : bset.points) d = std::max(d, std::abs((p.x - c).norm() - R));
  const int n = static_cast<int>(c.size());
  std::vector<Vec> probes;
  if (n == 1) {
    for (auto& s : sphere_samples(c, R)) probes.push_back(s.first);
  } else if (n == 2) {
    for (int k = 0; k < 1024; ++k) {
      Vec x = c;
      x[0] += R * std::cos(2 * kPi * k / 1024);
      x[1] += R * std::sin(2 * kPi * k / 1024);
      probes.push_back(x);
    }
  } else {
    for (auto& s : sphere_samples(c, R)) probes.push_back(s.first);
  }
  for (const Vec& y : probes) {
    double best = std::numeric_limits<double>::infinity();
    for (const BoundaryPoint& p : bset.points) best = std::min(best, (p.x - y).squaredNorm());
    d = std::max(d, std::sqrt(best));
  }
  return d;
}

std::string neumann_csv(const BoundaryPointSet& bset, const NeumannReport& rep) {
  std::ostringstream s;
  s.precision(12);
  const int n = bset.grid.dim;
  for (int a = 0; a < n; ++a) s << "x" << a << ',';
  for (int a = 0; a < n; ++a) s << "nu" << a << ',';
  s << "g,target,residual\n";
  for (std::size_t k = 0; k < bset.points.size(); ++k) {
    const BoundaryPoint& p = bset.points[k];
    for (int a = 0; a < n; ++a) s << p.x[a] << ',';
    for (int a = 0; a < n; ++a) s << p.normal[a] << ',';
    if (k < rep.g.size()) s << rep.g[k] << ',' << rep.target[k] << ',' << rep.residual[k];
    s << '\n';
  }
  return s.str();
}

}  // namespace fb
