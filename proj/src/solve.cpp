#include "fb/solve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <future>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/SparseCholesky>

#include "fb/admissibility.hpp"
#include "fb/error.hpp"

namespace fb {
namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;

double f_at_zero(const ProblemSpec& spec, const Vec& x) { return spec.f(x, 0.0); }

Vec origin(int n) { return Vec::Zero(n); }

/// Lambda of the torsion ball of volume m scaled by the source at the seeds.
double lambda_estimate(const ProblemSpec& spec) {
  const int n = spec.dim;
  double f0 = 0.0;
  for (const Vec& c : default_centers(spec)) f0 = std::max(f0, f_at_zero(spec, c));
  const double rho = ball_radius(n, spec.volume / spec.weight.q_lo());
  const double r = f0 * rho / n;
  return r * r;
}

/// Expected boundary slope sqrt(Lambda_est); sets the unit of the smoothing width.
double slope_estimate(const ProblemSpec& spec) {
  const double L = lambda_estimate(spec);
  return L > 0.0 ? std::sqrt(L) : 1.0;
}

std::vector<double> stage_deltas(const ProblemSpec& spec, const SolverConfig& cfg, double h,
                                 bool warm) {
  const double unit = h * slope_estimate(spec);
  std::vector<double> d;
  for (double c : cfg.delta_schedule)
    if (!warm || c <= 2.0) d.push_back(c * unit);
  if (d.empty()) d.push_back(cfg.delta_schedule.back() * unit);
  return d;
}

struct InnerOutcome {
  std::vector<double> u;
  bool diverged = false;
  bool converged = false;
  int steps = 0;
  double Lambda_eff = 0.0;
  double vol = 0.0;
  double F0 = 0.0;
};

class InnerSolver {
 public:
  InnerSolver(const Discretization& d, const SolverConfig& cfg, double mu, double guard)
      : d_(d), cfg_(cfg), mu_(mu), guard_(guard), m_(d.spec().volume),
        cap_(cfg.volume_cap * d.spec().volume) {
    const Grid& g = d.grid();
    fixed_.resize(g.num_nodes());
    for (std::size_t i = 0; i < fixed_.size(); ++i) fixed_[i] = g.on_boundary(g.node_coords(i));
    const auto& K = d.stiffness();
    for (double qi : d.cell_q()) max_node_volume_ = std::max(max_node_volume_, qi * d.cell_volume());
    max_node_volume_ *= static_cast<double>(1 << g.dim);
    diag_.resize(fixed_.size());
    for (std::size_t i = 0; i < fixed_.size(); ++i)
      diag_[i] = K.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
  }

  void set_mu(double mu) { mu_ = mu; }
  double mu() const { return mu_; }

  InnerOutcome run(std::vector<double> u, double Lambda, const std::vector<double>& deltas,
                   std::vector<TraceRow>* trace, int* counter) {
    InnerOutcome out;
    project(u);
    bool all_converged = true;
    for (double delta : deltas) {
      const bool ok = stage(u, Lambda, delta, trace, counter, out);
      if (out.diverged) break;
      all_converged = all_converged && ok;
    }
    out.converged = !out.diverged && all_converged;
    const double delta = deltas.back();
    out.Lambda_eff = Lambda + mu_ * (d_.smoothed_vol_q(u, delta) - m_);
    out.vol = d_.vol_q(u);
    out.F0 = d_.dirichlet(u) + d_.potential(u);
    out.u = std::move(u);
    return out;
  }

 private:
  struct Eval {
    double J = 0.0;
    double F0 = 0.0;
    double Vd = 0.0;
  };

  Eval evaluate(const std::vector<double>& u, double Lambda, double delta) const {
    Eval e;
    e.F0 = d_.dirichlet(u) + d_.potential(u);
    e.Vd = d_.smoothed_vol_q(u, delta);
    const double r = e.Vd - m_;
    e.J = e.F0 + Lambda * e.Vd + 0.5 * mu_ * r * r;
    return e;
  }

  // Clips to u >= 0 with pinned boundary nodes, then enforces the volume cap by
  // keeping the largest values.
  void project(std::vector<double>& u) const {
    for (std::size_t i = 0; i < u.size(); ++i)
      if (fixed_[i] || !(u[i] >= kClip)) u[i] = 0.0;
    if (d_.vol_q(u) <= cap_) return;
    const Grid& g = d_.grid();
    const auto& qc = d_.cell_q();
    const double hn = d_.cell_volume();
    const int corners = 1 << g.dim;
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < u.size(); ++i)
      if (u[i] > 0.0) pos.push_back(i);
    std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) { return u[a] > u[b]; });
    std::vector<char> covered(g.num_cells(), 0);
    std::vector<std::size_t> cells;
    double acc = 0.0;
    bool full = false;
    for (std::size_t i : pos) {
      if (full) {
        u[i] = 0.0;
        continue;
      }
      const Index3 p = g.node_coords(i);
      cells.clear();
      double added = 0.0;
      for (int b = 0; b < corners; ++b) {
        Index3 c = p;
        bool ok = true;
        for (int a = 0; a < g.dim; ++a) {
          c[a] -= (b >> a) & 1;
          ok = ok && c[a] >= 0 && c[a] < g.cells[a];
        }
        if (!ok) continue;
        const std::size_t ci = g.cell_index(c);
        if (!covered[ci]) {
          cells.push_back(ci);
          added += qc[ci] * hn;
        }
      }
      if (acc + added > cap_) {
        u[i] = 0.0;
        full = true;
        continue;
      }
      acc += added;
      for (std::size_t ci : cells) covered[ci] = 1;
    }
  }

  double sharp_volume(const std::vector<double>& u) const { return d_.vol_q(u); }

  bool diverging(const Eval& e) const { return !std::isfinite(e.J) || e.F0 < -guard_; }

  // One smoothing stage; returns true on convergence.
  bool stage(std::vector<double>& u, double Lambda, double delta, std::vector<TraceRow>* trace,
             int* counter, InnerOutcome& out) {
    const double hn = d_.cell_volume();
    const std::size_t N = u.size();

    Eval cur = evaluate(u, Lambda, delta);
    std::deque<double> history{cur.J};
    for (int step = 0; step < cfg_.max_inner; ++step) {
      const double Leff = Lambda + mu_ * (cur.Vd - m_);
      const std::vector<double> g = d_.energy_gradient(u, Leff, delta);

      // At the volume cap the support can only shrink.
      const bool capped = sharp_volume(u) > cap_ - max_node_volume_;
      double pg = 0.0, fmax = 0.0;
      std::vector<int> pos(N, -1);
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < N; ++i) {
        if (fixed_[i]) continue;
        const double p = u[i] > 0.0 ? g[i] : (capped ? 0.0 : std::min(g[i], 0.0));
        pg = std::max(pg, std::abs(p));
        if (u[i] > 0.0 || (g[i] < 0.0 && !capped)) {
          pos[i] = static_cast<int>(free.size());
          free.push_back(i);
        }
      }
      const std::vector<double> fv = d_.node_f(u);
      for (double v : fv) fmax = std::max(fmax, std::abs(v));
      const double scale = hn * (1.0 + 2.0 * fmax + std::abs(Leff) * d_.spec().weight.q_hi() / delta);
      if (pg <= cfg_.tol_g * scale) return true;

      std::vector<double> dir(N, 0.0);
      bool indefinite = false;
      const bool have_newton = newton_direction(u, g, free, pos, delta, dir, indefinite);

      auto try_direction = [&](const std::vector<double>& dvec, bool expand) -> bool {
        std::vector<double> trial(N);
        double t = 1.0;
        for (int k = 0; k <= cfg_.line_search_halvings; ++k, t *= 0.5) {
          for (std::size_t i = 0; i < N; ++i) trial[i] = u[i] + t * dvec[i];
          project(trial);
          const Eval e = evaluate(trial, Lambda, delta);
          if (e.J < cur.J) {
            Eval best = e;
            if (expand && k == 0 && !diverging(e)) {
              std::vector<double> next(N);
              for (int x = 0; x < 40; ++x) {
                t *= 2.0;
                for (std::size_t i = 0; i < N; ++i) next[i] = u[i] + t * dvec[i];
                project(next);
                const Eval e2 = evaluate(next, Lambda, delta);
                if (!(e2.J < best.J)) break;
                trial.swap(next);
                best = e2;
                if (diverging(e2)) break;
              }
            }
            u.swap(trial);
            cur = best;
            return true;
          }
        }
        return false;
      };

      bool moved = false;
      if (have_newton) moved = try_direction(dir, indefinite);
      if (!moved) {
        std::vector<double> sd(N, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
          if (fixed_[i]) continue;
          const double p = u[i] > 0.0 ? g[i] : (capped ? 0.0 : std::min(g[i], 0.0));
          sd[i] = -p / diag_[i];
        }
        moved = try_direction(sd, true);
      }
      if (!moved) return true;  // no descent direction left at this resolution

      ++out.steps;
      const int it = counter ? ++*counter : out.steps;
      if (trace)
        trace->push_back({it, cur.F0 + Lambda * cur.Vd, d_.vol_q(u), Lambda + mu_ * (cur.Vd - m_), delta});
      if (diverging(cur)) {
        out.diverged = true;
        return false;
      }
      history.push_back(cur.J);
      if (static_cast<int>(history.size()) > cfg_.stall_window) {
        const double drop = history.front() - history.back();
        history.pop_front();
        if (drop <= cfg_.tol_E * std::max(1.0, std::abs(cur.J))) return true;
      }
    }
    return false;
  }

  bool newton_direction(const std::vector<double>& u, const std::vector<double>& g,
                        const std::vector<std::size_t>& free, const std::vector<int>& pos,
                        double delta, std::vector<double>& dir, bool& indefinite) const {
    const std::size_t nF = free.size();
    if (nF == 0) return false;
    const auto& K = d_.stiffness();
    const double hn = d_.cell_volume();
    const std::vector<double> fp = d_.node_fprime(u);
    const std::vector<double> dV = d_.smoothed_vol_gradient(u, delta);

    Ldlt ldlt;
    auto factor = [&](bool with_fprime) -> bool {
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(nF * 9);
      for (std::size_t k = 0; k < nF; ++k) {
        const auto i = static_cast<Eigen::Index>(free[k]);
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(K, i); it; ++it) {
          const int c = pos[static_cast<std::size_t>(it.col())];
          if (c >= 0 && c <= static_cast<int>(k)) trip.emplace_back(static_cast<int>(k), c, it.value());
        }
        if (with_fprime && fp[free[k]] != 0.0)
          trip.emplace_back(static_cast<int>(k), static_cast<int>(k), -2.0 * fp[free[k]] * hn);
      }
      SpMat H(static_cast<Eigen::Index>(nF), static_cast<Eigen::Index>(nF));
      H.setFromTriplets(trip.begin(), trip.end());
      ldlt.compute(H);
      return ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0;
    };

    bool has_fprime = false;
    for (std::size_t i : free) has_fprime |= fp[i] != 0.0;
    indefinite = false;
    if (!factor(has_fprime)) {
      if (!has_fprime || !factor(false)) return false;
      indefinite = true;
    }

    Eigen::VectorXd gF(static_cast<Eigen::Index>(nF)), w(static_cast<Eigen::Index>(nF));
    for (std::size_t k = 0; k < nF; ++k) {
      const std::size_t i = free[k];
      gF[static_cast<Eigen::Index>(k)] = g[i];
      w[static_cast<Eigen::Index>(k)] = dV[i];
    }
    Eigen::VectorXd y = ldlt.solve(gF);
    if (mu_ > 0.0 && w.squaredNorm() > 0.0) {
      const Eigen::VectorXd z = ldlt.solve(w);
      y -= z * (mu_ * w.dot(y) / (1.0 + mu_ * w.dot(z)));
    }
    if (!y.allFinite() || !(gF.dot(y) > 0.0)) return false;
    for (std::size_t k = 0; k < nF; ++k) dir[free[k]] = -y[static_cast<Eigen::Index>(k)];
    return true;
  }

  const Discretization& d_;
  const SolverConfig& cfg_;
  double mu_;
  double guard_;
  double m_;
  double cap_;
  double max_node_volume_ = 0.0;
  std::vector<char> fixed_;
  std::vector<double> diag_;
};

// Minimises F0 over fields supported on the current positive set: the sharp
// energy for the support found by the smoothed solve. Volume is unchanged.
std::vector<double> polish_on_support(const Discretization& d, std::vector<double> u) {
  const auto& K = d.stiffness();
  const double hn = d.cell_volume();
  std::vector<int> pos(u.size(), -1);
  std::vector<std::size_t> S;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (u[i] > 0.0) {
      pos[i] = static_cast<int>(S.size());
      S.push_back(i);
    }
  if (S.empty()) return u;
  const auto nS = static_cast<Eigen::Index>(S.size());
  auto F0 = [&](const std::vector<double>& v) { return d.dirichlet(v) + d.potential(v); };
  double E = F0(u);
  for (int it = 0; it < 30; ++it) {
    const Eigen::VectorXd Ku = d.stiffness_times(u);
    const std::vector<double> f = d.node_f(u);
    const std::vector<double> fp = d.node_fprime(u);
    Eigen::VectorXd g(nS);
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t k = 0; k < S.size(); ++k) {
      const std::size_t i = S[k];
      g[static_cast<Eigen::Index>(k)] = Ku[static_cast<Eigen::Index>(i)] - 2.0 * f[i] * hn;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator c(K, static_cast<Eigen::Index>(i)); c; ++c) {
        const int j = pos[static_cast<std::size_t>(c.col())];
        if (j >= 0 && j <= static_cast<int>(k)) trip.emplace_back(static_cast<int>(k), j, c.value());
      }
      if (fp[i] != 0.0) trip.emplace_back(static_cast<int>(k), static_cast<int>(k), -2.0 * fp[i] * hn);
    }
    SpMat H(nS, nS);
    H.setFromTriplets(trip.begin(), trip.end());
    Ldlt ldlt(H);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) break;
    const Eigen::VectorXd step = ldlt.solve(g);
    if (!step.allFinite()) break;
    bool moved = false;
    std::vector<double> trial(u.size());
    for (double t = 1.0; t > 1e-6; t *= 0.5) {
      trial = u;
      for (std::size_t k = 0; k < S.size(); ++k)
        trial[S[k]] = std::max(0.0, u[S[k]] - t * step[static_cast<Eigen::Index>(k)]);
      const double Et = F0(trial);
      if (Et < E) {
        moved = true;
        const double drop = E - Et;
        u.swap(trial);
        E = Et;
        if (drop <= 1e-14 * std::max(1.0, std::abs(E))) it = 30;
        break;
      }
    }
    if (!moved) break;
  }
  for (double& v : u)
    if (v < kClip) v = 0.0;
  return u;
}

double default_guard(const ProblemSpec& spec, const SolverConfig& cfg) {
  if (cfg.energy_guard > 0.0) return cfg.energy_guard;
  SampleBudget b;
  b.samples = 1024;
  b.seed = cfg.seed;
  const AdmissibilityReport r = check_admissibility(spec, b);
  return energy_guard(r.N, spec.volume, spec.weight.q_lo());
}

double base_mu(const ProblemSpec& spec, const SolverConfig& cfg) {
  return cfg.volume_stiffness * 8.0 * lambda_estimate(spec) / spec.volume;
}

ScalarField resample(const ScalarField& u, const Grid& g) {
  ScalarField v(g);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (g.on_boundary(g.node_coords(i))) continue;
    const double s = u.sample(g.node_position(i));
    v[i] = s >= kClip ? s : 0.0;
  }
  return v;
}

bool support_touches_box(const ScalarField& u, int cells) {
  const Grid& g = u.grid;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] > 0.0)) continue;
    const Index3 c = g.node_coords(i);
    for (int a = 0; a < g.dim; ++a)
      if (c[a] <= cells || c[a] >= g.cells[a] - cells) return true;
  }
  return false;
}

struct LevelOutcome {
  InnerOutcome best;
  double Lambda = 0.0;
  double mu = 0.0;
  bool at_boundary = false;
  bool bracket_failure = false;
};

class LevelSolver {
 public:
  LevelSolver(const Discretization& d, const SolverConfig& cfg, double mu, double guard,
              RunResult& run)
      : d_(d), cfg_(cfg), inner_(d, cfg, mu, guard), run_(run), m_(d.spec().volume) {}

  /// coarse: bracket by doubling from `guess`; otherwise by factors of 1.2 around it.
  LevelOutcome solve(const std::vector<double>& start, double guess, bool coarse, bool finest) {
    const double step = coarse ? 2.0 : 1.2;
    deltas_ = stage_deltas(d_.spec(), cfg_, d_.grid().h, !coarse);
    // One node flips up to 2^n cells; coarser levels only seed the next bracket.
    const double jump = 2.0 * (1 << d_.grid().dim) * d_.spec().weight.q_hi() * d_.cell_volume() / m_;
    tol_ = finest ? cfg_.tol_vol : std::max(4.0 * cfg_.tol_vol, jump);
    LevelOutcome lo_out;
    for (int attempt = 0; attempt < 4; ++attempt) {
      lo_out = attempt_solve(start, guess, step);
      if (lo_out.best.diverged || lo_out.at_boundary || !lo_out.bracket_failure) break;
      // vol(Lambda) jumps across m: stiffen the volume term and retry.
      inner_.set_mu(std::max(4.0 * inner_.mu(), 1e-3));
      guess = lo_out.Lambda;
      ++run_.state.restarts;
    }
    lo_out.mu = inner_.mu();
    return lo_out;
  }

 private:
  struct Sample {
    double L = 0.0;
    InnerOutcome r;
  };

  Sample eval(double L, const std::vector<double>& start) {
    Sample s;
    s.L = L;
    s.r = inner_.run(start, L, deltas_, &run_.trace, &run_.state.iterations);
    ++run_.state.inner_solves;
    run_.state.energy_trace.push_back(s.r.F0);
    run_.state.volume_trace.push_back(s.r.vol);
    return s;
  }

  bool within(const Sample& s) const { return std::abs(s.r.vol - m_) <= tol_ * m_; }

  LevelOutcome finish(const Sample& s, bool boundary, bool failure) {
    LevelOutcome o;
    o.best = s.r;
    o.Lambda = s.L;
    o.at_boundary = boundary;
    o.bracket_failure = failure;
    return o;
  }

  LevelOutcome attempt_solve(const std::vector<double>& start, double guess, double step) {
    Sample s = eval(guess, start);
    if (s.r.diverged) return finish(s, false, false);
    if (within(s)) return finish(s, false, false);

    Sample lo, hi;
    if (s.r.vol > m_) {
      lo = s;
      double L = guess > 0.0 ? guess : 1.0;
      for (int k = 0;; ++k) {
        if (k > 60) throw Error(ErrorCode::BracketFailure, "volume stays above m for all Lambda tried");
        L *= step;
        Sample t = eval(L, lo.r.u);
        if (t.r.diverged) return finish(t, false, false);
        if (within(t)) return finish(t, false, false);
        if (t.r.vol < m_) {
          hi = t;
          break;
        }
        lo = t;
      }
    } else {
      hi = s;
      double L = guess;
      for (int k = 0;; ++k) {
        L = (k > 40 || L < 1e-10) ? 0.0 : L / step;
        Sample t = eval(L, hi.r.u);
        if (t.r.diverged) return finish(t, false, false);
        if (within(t)) return finish(t, false, false);
        if (t.r.vol > m_) {
          lo = t;
          break;
        }
        if (L == 0.0) return finish(t, true, false);  // volume below m even without a multiplier
        hi = t;
      }
    }
    run_.state.Lambda_lo = lo.L;
    run_.state.Lambda_hi = hi.L;

    // Illinois false position on vol(Lambda) - m.
    double glo = lo.r.vol - m_, ghi = hi.r.vol - m_;
    int side = 0;
    Sample best = std::abs(glo) < std::abs(ghi) ? lo : hi;
    for (int it = 0; it < cfg_.max_bisection; ++it) {
      double L = (lo.L * ghi - hi.L * glo) / (ghi - glo);
      if (!(L > lo.L && L < hi.L)) L = 0.5 * (lo.L + hi.L);
      const std::vector<double>& from = (L - lo.L < hi.L - L) ? lo.r.u : hi.r.u;
      Sample t = eval(L, from);
      if (t.r.diverged) return finish(t, false, false);
      const double gt = t.r.vol - m_;
      if (std::abs(gt) < std::abs(best.r.vol - m_)) best = t;
      if (within(t)) return finish(t, false, false);
      if (gt > 0.0) {
        lo = t;
        glo = gt;
        if (side == 1) ghi *= 0.5;
        side = 1;
      } else {
        hi = t;
        ghi = gt;
        if (side == -1) glo *= 0.5;
        side = -1;
      }
      run_.state.Lambda_lo = lo.L;
      run_.state.Lambda_hi = hi.L;
      if (hi.L - lo.L <= 1e-9 * std::max(hi.L, 1e-12)) break;
    }
    return finish(best, false, true);
  }

  const Discretization& d_;
  const SolverConfig& cfg_;
  InnerSolver inner_;
  RunResult& run_;
  double m_;
  double tol_ = 0.0;
  std::vector<double> deltas_;
};

std::vector<double> level_sizes(double h, double coarse_h) {
  std::vector<double> hs{h};
  while (hs.back() * 2.0 <= coarse_h * (1.0 + 1e-12)) hs.push_back(hs.back() * 2.0);
  std::reverse(hs.begin(), hs.end());
  return hs;
}

void harmonic_sweep(ScalarField& u, const ProblemSpec& spec, double Lambda, const SolverConfig& cfg,
                    double M2, RunResult& run) {
  const Grid& g = u.grid;
  const double r = harmonic_replacement_radius(spec, M2);
  if (cfg.hr_balls <= 0 || r < 2.0 * g.h) return;
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (u[i] > 0.0) support.push_back(i);
  if (support.empty()) return;
  const double vmax = std::max(spec.volume, vol_q(u, spec));
  double E = energy(u, spec, Lambda, EnergyMode::sharp()).total;
  for (int k = 0; k < cfg.hr_balls; ++k) {
    const std::size_t idx = support[support.size() * static_cast<std::size_t>(k) /
                                    static_cast<std::size_t>(cfg.hr_balls)];
    const Vec c = g.node_position(idx);
    if (g.distance_to_boundary(c) < r + 2.0 * g.h) continue;
    ScalarField w = harmonic_replacement(u, spec, c, r);
    if (vol_q(w, spec) > vmax) continue;
    const double Ew = energy(w, spec, Lambda, EnergyMode::sharp()).total;
    if (Ew < E - 1e-12 * std::max(1.0, std::abs(E))) {
      u = std::move(w);
      E = Ew;
      ++run.hr_accepted;
    }
  }
}

RunResult solve_replica(const ProblemSpec& spec, const SolverConfig& cfg,
                        const std::vector<Vec>& centers, double guard, double M2) {
  const int n = spec.dim;
  RunResult run;
  run.seed = cfg.seed;
  run.h = cfg.h;

  const double Rm = ball_radius(n, spec.volume / spec.weight.q_lo());
  const std::vector<double> hs = level_sizes(cfg.h, std::min(cfg.coarse_h, Rm / 16.0));
  const double h0 = hs.front();
  double R = cfg.box_radius;
  if (R <= 0.0) {
    R = 2.0 * Rm;
    for (const Vec& c : centers) R = std::max(R, c.norm() + 1.5 * Rm);
  }
  R = std::ceil(R / h0 - 1e-9) * h0;
  const double cap = cfg.box_cap > 0.0 ? cfg.box_cap : 4.0 * R;

  double mu = base_mu(spec, cfg);
  double guess = cfg.lambda_hint > 0.0 ? cfg.lambda_hint : lambda_estimate(spec);

  ScalarField u;
  LevelOutcome out;
  for (std::size_t level = 0; level < hs.size(); ++level) {
    for (;;) {
      const Grid g = Grid::centered(n, R, hs[level]);
      const ScalarField start = u.values.empty() ? initial_field(spec, g, centers) : resample(u, g);
      const Discretization d(spec, g);
      LevelSolver solver(d, cfg, mu, guard, run);
      out = solver.solve(start.values, guess, level == 0, level + 1 == hs.size());
      u = ScalarField(g);
      u.values = out.best.u;
      if (out.best.diverged) break;
      if (!support_touches_box(u, 3)) break;
      R = std::ceil(1.5 * R / h0 - 1e-9) * h0;
      if (R > cap) throw Error(ErrorCode::BoxOverflow, "support reaches the box boundary beyond the box cap");
      run.message += "box enlarged; ";
    }
    if (out.best.diverged) break;
    guess = out.Lambda > 0.0 ? out.Lambda : guess;
    mu = out.mu;
  }

  if (!out.best.diverged) u.values = polish_on_support(Discretization(spec, u.grid), std::move(u.values));

  run.box_radius = R;
  run.state.box_radius = R;
  run.diverged = out.best.diverged;
  run.bracket_failure = out.bracket_failure;
  run.multiplier_at_boundary = out.at_boundary;
  run.Lambda_bisect = out.Lambda;
  run.Lambda_smoothed = out.best.Lambda_eff;
  run.Lambda = run.diverged ? 0.0 : multiplier_estimate(u, spec);
  run.state.Lambda = run.Lambda;
  run.state.delta = cfg.delta_schedule.back() * cfg.h;
  if (!run.diverged) harmonic_sweep(u, spec, run.Lambda, cfg, M2, run);
  run.u = std::move(u);
  run.energy = energy(run.u, spec, run.Lambda, EnergyMode::sharp());
  run.F0 = run.energy.dirichlet + run.energy.potential;
  run.vol_q = run.energy.vol_q_raw;
  run.lambda_positive = run.Lambda >= 1e-6 || run.vol_q == 0.0;
  run.converged = !run.diverged && std::abs(run.vol_q - spec.volume) <= cfg.tol_vol * spec.volume &&
                  !run.bracket_failure;
  if (run.diverged) run.message += "energy below -guard: diverged";
  else if (run.multiplier_at_boundary) run.message += "multiplier at boundary (Lambda = 0)";
  else if (run.bracket_failure) run.message += "bracket collapsed before reaching the volume tolerance";
  return run;
}

int thread_budget() {
  if (const char* s = std::getenv("FB_THREADS")) {
    const int t = std::atoi(s);
    if (t > 0) return t;
  }
  return 1;
}

}  // namespace

std::vector<Vec> default_centers(const ProblemSpec& spec) {
  std::vector<Vec> c = spec.nonlinearity.seed_points();
  if (c.empty()) c.push_back(origin(spec.dim));
  return c;
}

ScalarField initial_field(const ProblemSpec& spec, const Grid& grid, const std::vector<Vec>& centers) {
  const int n = spec.dim;
  const std::size_t K = std::max<std::size_t>(centers.size(), 1);
  ScalarField u(grid);
  for (const Vec& c : centers) {
    const double rho = ball_radius(n, spec.volume / (static_cast<double>(K) * spec.q(c)));
    const double f0 = f_at_zero(spec, c);
    const double a = f0 > 0.0 ? f0 : 1.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (grid.on_boundary(grid.node_coords(i))) continue;
      const double r2 = (grid.node_position(i) - c).squaredNorm();
      const double v = a * (rho * rho - r2) / (2.0 * n);
      if (v > u[i]) u[i] = v;
    }
  }
  for (double& v : u.values)
    if (v < kClip) v = 0.0;
  return u;
}

ScalarField minimize_penalized(const ProblemSpec& spec, double Lambda, const ScalarField& init,
                               const SolverConfig& cfg) {
  const Discretization d(spec, init.grid);
  InnerSolver inner(d, cfg, base_mu(spec, cfg), default_guard(spec, cfg));
  const InnerOutcome r = inner.run(init.values, Lambda, stage_deltas(spec, cfg, init.grid.h, false), nullptr, nullptr);
  if (r.diverged) throw Error(ErrorCode::Diverged, "penalized energy fell below -guard");
  for (double v : r.u)
    if (!std::isfinite(v)) throw Error(ErrorCode::NoProgress, "non-finite iterate");
  ScalarField u(init.grid);
  u.values = r.u;
  return u;
}

double harmonic_replacement_radius(const ProblemSpec& spec, double M2) {
  const double lam = spec.matrix.lambda();
  const double s = M2 > 0.0 ? std::sqrt(lam / (2.0 * M2)) : 1.0;
  return 0.25 * std::min(1.0, s);
}

ScalarField harmonic_replacement(const ScalarField& u, const ProblemSpec& spec, const Vec& center,
                                 double radius) {
  const Grid& g = u.grid;
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be positive");
  if (g.distance_to_boundary(center) < radius + 2.0 * g.h)
    throw Error(ErrorCode::OutOfBox, "replacement ball is within two cells of the box boundary");
  const Discretization d(spec, g);
  const auto& K = d.stiffness();
  const double hn = d.cell_volume();

  std::vector<int> pos(u.size(), -1);
  std::vector<std::size_t> ball;
  for (std::size_t i = 0; i < u.size(); ++i)
    if ((g.node_position(i) - center).norm() < radius) {
      pos[i] = static_cast<int>(ball.size());
      ball.push_back(i);
    }
  if (ball.empty()) return u;

  const std::vector<double> f = d.node_f(u.values);
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(ball.size()));
  for (std::size_t k = 0; k < ball.size(); ++k) {
    const std::size_t i = ball[k];
    double b = 2.0 * f[i] * hn;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(K, static_cast<Eigen::Index>(i)); it; ++it) {
      const int c = pos[static_cast<std::size_t>(it.col())];
      if (c >= 0) {
        if (c <= static_cast<int>(k)) trip.emplace_back(static_cast<int>(k), c, it.value());
      } else {
        b -= it.value() * u[static_cast<std::size_t>(it.col())];
      }
    }
    rhs[static_cast<Eigen::Index>(k)] = b;
  }
  SpMat H(static_cast<Eigen::Index>(ball.size()), static_cast<Eigen::Index>(ball.size()));
  H.setFromTriplets(trip.begin(), trip.end());
  Ldlt ldlt(H);
  if (ldlt.info() != Eigen::Success) throw Error(ErrorCode::LinearSolveFailure, "ball system factorisation failed");
  const Eigen::VectorXd w = ldlt.solve(rhs);
  if (!w.allFinite()) throw Error(ErrorCode::LinearSolveFailure, "ball system solve failed");
  ScalarField out = u;
  for (std::size_t k = 0; k < ball.size(); ++k) {
    const double v = w[static_cast<Eigen::Index>(k)];
    out[ball[k]] = v >= kClip ? v : 0.0;
  }
  return out;
}

RunResult solve_constrained(const ProblemSpec& spec, const SolverConfig& cfg) {
  if (!(cfg.h > 0.0)) throw Error(ErrorCode::InvalidArgument, "h must be positive");
  SampleBudget budget;
  budget.seed = cfg.seed;
  const AdmissibilityReport adm = check_admissibility(spec, budget);
  if (!cfg.force && !adm.all_pass()) {
    std::string failed;
    for (const auto& r : adm.results)
      if (r.verdict == Verdict::Fail) failed += " " + r.name;
    throw Error(ErrorCode::InvalidArgument, "spec fails admissibility:" + failed + " (set force to run anyway)");
  }
  const double guard = cfg.energy_guard > 0.0 ? cfg.energy_guard
                                              : energy_guard(adm.N, spec.volume, spec.weight.q_lo());

  const int K = std::max(cfg.multistart, 1);
  const std::vector<Vec> base = default_centers(spec);
  const double jitter = 0.5 * ball_radius(spec.dim, spec.volume / (K * spec.weight.q_lo()));

  auto replica = [&](int r) {
    SolverConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(r);
    std::vector<Vec> centers = base;
    if (r > 0) {
      std::mt19937_64 rng(c.seed);
      std::uniform_real_distribution<double> U(-1.0, 1.0);
      for (Vec& x : centers)
        for (int a = 0; a < spec.dim; ++a) x[a] += jitter * U(rng);
    }
    RunResult res = solve_replica(spec, c, centers, guard, adm.M2);
    res.replica = r;
    return res;
  };

  std::vector<RunResult> results(static_cast<std::size_t>(K));
  const int threads = std::min(thread_budget(), K);
  for (int first = 0; first < K; first += threads) {
    std::vector<std::future<RunResult>> jobs;
    for (int r = first; r < std::min(K, first + threads); ++r)
      jobs.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred, replica, r));
    for (std::size_t j = 0; j < jobs.size(); ++j) results[static_cast<std::size_t>(first) + j] = jobs[j].get();
  }

  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r) {
    const auto& a = results[r];
    const auto& b = results[best];
    if (b.diverged && !a.diverged) best = r;
    else if (a.diverged == b.diverged && a.F0 < b.F0) best = r;
  }
  RunResult out = std::move(results[best]);
  for (const auto& r : results) out.replica_F0.push_back(r.F0);
  if (out.replica_F0.size() == 1) out.replica_F0[0] = out.F0;
  return out;
}

Boundedness detect_unbounded(const std::vector<double>& trace, double guard) {
  for (double e : trace)
    if (!std::isfinite(e) || e < -guard) return Boundedness::Diverged;
  return Boundedness::Bounded;
}

double energy_guard(double N, double m, double q_lo) { return 10.0 * (2.0 * N * m / q_lo + 1.0); }

double multiplier_estimate(const ScalarField& u, const ProblemSpec& spec) {
  const Grid& g = u.grid;
  const int n = g.dim;
  Vec c = Vec::Zero(n);
  double count = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (u[i] > 0.0) {
      c += g.node_position(i);
      count += 1.0;
    }
  if (count == 0.0) return 0.0;
  c /= count;
  VectorField xi(g);
  for (std::size_t k = 0; k < g.num_cells(); ++k) {
    const Index3 cc = g.cell_coords(k);
    bool margin = false;
    for (int a = 0; a < n; ++a) margin |= cc[a] < 2 || cc[a] >= g.cells[a] - 2;
    if (!margin) xi.set(k, g.cell_center(cc) - c);
  }
  const double a = first_variation(u, xi, spec, 0.0);
  const double b = first_variation(u, xi, spec, 1.0) - a;
  if (!(std::abs(b) > 0.0)) return 0.0;
  return -a / b;
}

double stationarity_residual(const ScalarField& u, const ProblemSpec& spec, double Lambda,
                             int n_fields, std::uint64_t seed) {
  const Grid& g = u.grid;
  const int n = g.dim;
  Vec lo = Vec::Constant(n, std::numeric_limits<double>::infinity());
  Vec hi = -lo;
  bool any = false;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (u[i] > 0.0) {
      const Vec x = g.node_position(i);
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
      any = true;
    }
  if (!any) throw Error(ErrorCode::EmptySupport, "field has empty support");
  const double extent = (hi - lo).maxCoeff() + 2.0 * g.h;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> Z(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < n_fields; ++k) {
    Vec dir(n);
    for (int a = 0; a < n; ++a) dir[a] = Z(rng);
    if (dir.norm() == 0.0) dir[0] = 1.0;
    dir.normalize();
    Vec c(n);
    for (int a = 0; a < n; ++a) c[a] = lo[a] + (hi[a] - lo[a]) * U(rng);
    double w = extent * (0.25 + 0.75 * U(rng));
    for (int a = 0; a < n; ++a) w = std::min({w, c[a] - g.lower(a) - 3.0 * g.h, g.upper(a) - 3.0 * g.h - c[a]});
    if (w < 4.0 * g.h) continue;

    VectorField xi(g);
    double sup = 0.0;
    for (std::size_t cell = 0; cell < g.num_cells(); ++cell) {
      const Vec x = g.cell_center(g.cell_coords(cell));
      double p = 1.0;
      for (int a = 0; a < n && p > 0.0; ++a) {
        const double s = (x[a] - c[a]) / w;
        p *= std::abs(s) < 1.0 ? std::pow(1.0 - s * s, 3) : 0.0;
      }
      if (p > 0.0) xi.set(cell, p * dir);
      sup = std::max(sup, p);
    }
    if (sup == 0.0) continue;
    for (double& v : xi.values) v /= sup;
    worst = std::max(worst, std::abs(first_variation(u, xi, spec, Lambda)));
  }
  return worst;
}

}  // namespace fb
