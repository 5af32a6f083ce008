#include "fb/weiss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "fb/diagnostics.hpp"
#include "fb/error.hpp"

namespace fb {
namespace {

// Cells of the blow-up grid whose centre lies in the open unit ball.
template <typename Fn>
void for_unit_ball_cells(const Grid& g, Fn&& fn) {
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const Index3 cc = g.cell_coords(c);
    const Vec x = g.cell_center(cc);
    if (x.norm() < 1.0) fn(cc, x);
  }
}

// Mean and gradient of the multilinear interpolant at a cell centre.
void cell_values(const ScalarField& v, const Index3& cell, double* mean, Vec* grad) {
  const Grid& g = v.grid;
  const int n = g.dim;
  const Index3 st = g.node_strides();
  const std::size_t base = g.node_index(cell);
  const int corners = 1 << n;
  *mean = 0.0;
  *grad = Vec::Zero(n);
  for (int b = 0; b < corners; ++b) {
    std::size_t k = base;
    for (int a = 0; a < n; ++a)
      if ((b >> a) & 1) k += static_cast<std::size_t>(st[a]);
    *mean += v[k];
    for (int a = 0; a < n; ++a) (*grad)[a] += ((b >> a) & 1 ? 1.0 : -1.0) * v[k];
  }
  *mean /= corners;
  *grad /= g.h * corners / 2.0;
}

// Zero nodes next to the support get the negative value of the linear
// extrapolation from the positive side, so the interpolant changes sign where
// the profile would rather than one cell further out. Two passes reach the
// diagonal corners of straddling cells.
std::vector<double> signed_extension(const ScalarField& v) {
  const Grid& g = v.grid;
  const int n = g.dim;
  std::vector<double> s = v.values;
  std::vector<char> known(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) known[i] = s[i] > 0.0;
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> next = s;
    std::vector<char> next_known = known;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (known[i]) continue;
      const Index3 ijk = g.node_coords(i);
      double best = 0.0;
      bool any = false;
      for (int a = 0; a < n; ++a) {
        for (int dir : {-1, 1}) {
          Index3 p1 = ijk, p2 = ijk;
          p1[a] += dir;
          p2[a] += 2 * dir;
          if (p2[a] < 0 || p2[a] > g.cells[a]) continue;
          const std::size_t k1 = g.node_index(p1), k2 = g.node_index(p2);
          if (!known[k1] || !known[k2] || (s[k1] <= 0.0 && s[k2] <= 0.0)) continue;
          const double c = std::min(0.0, 2.0 * s[k1] - s[k2]);
          best = any ? std::min(best, c) : c;
          any = true;
        }
      }
      if (any) {
        next[i] = best;
        next_known[i] = 1;
      }
    }
    s.swap(next);
    known.swap(next_known);
  }
  return s;
}

// Positive fraction of a cell of the interpolant of s: exact when all corners
// agree, else 4^n subsamples.
double positive_fraction(const Grid& g, const std::vector<double>& s, const Index3& cell) {
  const int n = g.dim;
  const Index3 st = g.node_strides();
  const std::size_t base = g.node_index(cell);
  const int corners = 1 << n;
  double c[8];
  int pos = 0;
  for (int b = 0; b < corners; ++b) {
    std::size_t k = base;
    for (int a = 0; a < n; ++a)
      if ((b >> a) & 1) k += static_cast<std::size_t>(st[a]);
    c[b] = s[k];
    pos += c[b] > 0.0;
  }
  if (pos == 0) return 0.0;
  if (pos == corners) return 1.0;
  constexpr int kSub = 4;
  int total = 1;
  for (int a = 0; a < n; ++a) total *= kSub;
  int hit = 0;
  for (int q = 0; q < total; ++q) {
    double t[3];
    int r = q;
    for (int a = 0; a < n; ++a) {
      t[a] = (r % kSub + 0.5) / kSub;
      r /= kSub;
    }
    double val = 0.0;
    for (int b = 0; b < corners; ++b) {
      double w = 1.0;
      for (int a = 0; a < n; ++a) w *= (b >> a) & 1 ? t[a] : 1.0 - t[a];
      val += w * c[b];
    }
    hit += val > 0.0;
  }
  return static_cast<double>(hit) / total;
}

}  // namespace

Mat sqrt_spd(const Mat& M) {
  if (M.rows() != M.cols() || (M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff()))
    throw Error(ErrorCode::NotSPD, "matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw Error(ErrorCode::NotSPD, "matrix is not positive definite");
  const Vec s = es.eigenvalues().cwiseSqrt();
  Mat S = es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (S + S.transpose());
}

Grid blowup_grid(int n) { return Grid::centered(n, 2.0, 4.0 / 128.0); }

ScalarField rescale(const ScalarField& u, const Vec& x0, double r, const Grid& target, const Mat& S) {
  const double reach = 2.0 * r * S.operatorNorm();
  if (u.grid.distance_to_boundary(x0) < reach * (1.0 - 1e-12))
    throw Error(ErrorCode::OutOfBox, "blow-up ball leaves the source box");
  ScalarField v(target);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec x = target.node_position(i);
    v[i] = u.sample(x0 + r * (S * x)) / r;
  }
  return v;
}

ScalarField rescale(const ScalarField& u, const Vec& x0, double r, const Grid& target) {
  return rescale(u, x0, r, target, Mat::Identity(u.grid.dim, u.grid.dim));
}

double weiss(const ScalarField& v, double Lambda, double q0) {
  const Grid& g = v.grid;
  const int n = g.dim;
  const double hn = g.cell_volume();
  double dir = 0.0, vol = 0.0;
  const std::vector<double> sext = Lambda != 0.0 ? signed_extension(v) : std::vector<double>();
  for_unit_ball_cells(g, [&](const Index3& c, const Vec&) {
    double m;
    Vec grad;
    cell_values(v, c, &m, &grad);
    dir += grad.squaredNorm() * hn;
    if (!sext.empty()) vol += hn * positive_fraction(g, sext, c);
  });
  double bnd = 0.0;
  for (const auto& [x, w] : sphere_samples(Vec::Zero(n), 1.0)) {
    const double s = v.sample(x);
    bnd += w * s * s;
  }
  bnd *= unit_sphere_area(n);
  return dir - bnd + Lambda * q0 * vol;
}

ScalarField homogeneous_extension(const ScalarField& v) {
  const Grid& g = v.grid;
  ScalarField z(g);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const Vec x = g.node_position(i);
    const double r = x.norm();
    z[i] = r > 0.0 ? r * v.sample(x / r) : 0.0;
  }
  return z;
}

double homogeneity_deviation(const ScalarField& v) {
  const int n = v.grid.dim;
  double s = 0.0;
  for (const auto& [x, w] : sphere_samples(Vec::Zero(n), 1.0)) {
    const double e = x.dot(v.sample_gradient(x)) - v.sample(x);
    s += w * e * e;
  }
  return s * unit_sphere_area(n);
}

std::string WeissTrace::csv() const {
  std::ostringstream s;
  s.precision(12);
  s << "r,W,W_hom,H,slack\n";
  for (std::size_t k = 0; k < radii.size(); ++k)
    s << radii[k] << ',' << W[k] << ',' << W_hom[k] << ',' << H[k] << ',' << slack[k] << '\n';
  return s.str();
}

WeissTrace weiss_trace(const ScalarField& u, const ProblemSpec& spec, double Lambda, const Vec& x0,
                       std::vector<double> radii) {
  const Grid& src = u.grid;
  const int n = src.dim;
  bool pos = false, zero = false;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if ((src.node_position(i) - x0).norm() > 2.0 * src.h) continue;
    (u[i] > 0.0 ? pos : zero) = true;
  }
  if (!pos || !zero) throw Error(ErrorCode::NotBoundaryPoint, "no sign change within 2h of the point");

  WeissTrace t;
  t.frame.x0 = x0;
  t.frame.S = sqrt_spd(spec.A(x0));
  t.frame.S_inv = t.frame.S.inverse();
  t.frame.Lambda = Lambda;
  t.frame.q0 = spec.q(x0);
  std::sort(radii.begin(), radii.end(), std::greater<>());
  radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
  std::erase_if(radii, [&](double r) { return r < 8.0 * src.h * (1.0 - 1e-12); });
  t.frame.radii = radii;
  t.radii = radii;

  const Grid target = blowup_grid(n);
  t.C_W = 0.0;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    const double r = radii[k];
    ScalarField v = rescale(u, x0, r, target, t.frame.S);
    const ScalarField z = homogeneous_extension(v);
    const double W = weiss(v, Lambda, t.frame.q0);
    const double Wz = weiss(z, Lambda, t.frame.q0);
    const double H = homogeneity_deviation(v);
    t.W.push_back(W);
    t.W_hom.push_back(Wz);
    t.H.push_back(H);
    t.slack.push_back(Wz - W - H / n);
    t.C_W = std::max(t.C_W, -t.slack.back() / r);
    if (k + 1 == radii.size()) t.finest = std::move(v);
  }
  t.min_derivative = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < radii.size(); ++k) {
    t.derivative.push_back((t.W[k] - t.W[k + 1]) / (radii[k] - radii[k + 1]));
    t.min_derivative = std::min(t.min_derivative, t.derivative.back());
  }
  if (t.derivative.empty()) t.min_derivative = 0.0;
  return t;
}

BlowupClass fit_halfplane(const ScalarField& v) {
  const Grid& g = v.grid;
  const int n = g.dim;
  std::vector<Vec> xs;
  std::vector<double> ys;
  Vec p = Vec::Zero(n);
  double wsum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec x = g.node_position(i);
    if (x.norm() >= 1.0) continue;
    xs.push_back(x);
    ys.push_back(v[i]);
  }
  // Initial guess: mean gradient over fully positive cells of B_1.
  for_unit_ball_cells(g, [&](const Index3& c, const Vec&) {
    double m;
    Vec grad;
    cell_values(v, c, &m, &grad);
    if (m > 0.0) {
      p += grad;
      wsum += 1.0;
    }
  });
  BlowupClass out;
  double norm2 = 0.0;
  for (double y : ys) norm2 += y * y;
  if (wsum == 0.0 || norm2 == 0.0) {
    out.nu_hat = out.nu = Vec::Zero(n);
    out.misfit = norm2 == 0.0 ? 0.0 : 1.0;
    return out;
  }
  p /= wsum;
  // Gauss-Newton on sum (y - (x . p)_+)^2.
  for (int it = 0; it < 50; ++it) {
    Mat JtJ = Mat::Zero(n, n);
    Vec Jtr = Vec::Zero(n);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const double s = xs[k].dot(p);
      if (s <= 0.0) continue;
      JtJ += xs[k] * xs[k].transpose();
      Jtr += xs[k] * (ys[k] - s);
    }
    const Vec step = JtJ.ldlt().solve(Jtr);
    p += step;
    if (step.norm() <= 1e-13 * std::max(1.0, p.norm())) break;
  }
  double res = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double e = ys[k] - std::max(0.0, xs[k].dot(p));
    res += e * e;
  }
  out.alpha = p.norm();
  out.nu_hat = out.alpha > 0.0 ? Vec(p / out.alpha) : Vec(Vec::Zero(n));
  out.nu = out.nu_hat;
  out.misfit = std::sqrt(res / norm2);
  return out;
}

BlowupClass classify_blowup(const WeissTrace& trace, double tol) {
  if (trace.finest.values.empty()) return {};
  BlowupClass c = fit_halfplane(trace.finest);
  c.nu = trace.frame.S_inv * c.nu_hat;
  const double target = std::sqrt(trace.frame.Lambda * trace.frame.q0);
  const bool alpha_ok = target > 0.0 && std::abs(c.alpha - target) <= tol * target;
  c.kind = c.misfit <= tol && alpha_ok ? BlowupKind::Regular : BlowupKind::Unresolved;
  return c;
}

}  // namespace fb
