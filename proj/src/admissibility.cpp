#include "fb/admissibility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "fb/error.hpp"
#include "fb/oracle.hpp"

namespace fb {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::NotApplicable: return "n/a";
  }
  return "?";
}

const HypothesisResult& AdmissibilityReport::get(const std::string& name) const {
  for (const auto& r : results)
    if (r.name == name) return r;
  throw Error(ErrorCode::InvalidArgument, "no hypothesis named " + name);
}

bool AdmissibilityReport::all_pass() const {
  return std::none_of(results.begin(), results.end(),
                      [](const HypothesisResult& r) { return r.verdict == Verdict::Fail; });
}

Witness witness_negative_energy(const ProblemSpec& spec) {
  const int n = spec.dim;
  Vec center = Vec::Zero(n);
  if (!spec.nonlinearity.seed_points().empty()) center = spec.nonlinearity.seed_points().front();

  const double eps = std::min(0.25, 0.5 * ball_radius(n, spec.volume / spec.weight.q_hi()));
  Grid grid = Grid::centered(n, 1.25 * eps, eps / 16.0);
  grid.origin += center;
  const Discretization disc(spec, grid);
  ScalarField phi(grid);
  for (std::size_t i = 0; i < phi.size(); ++i)
    phi[i] = eigenfunction_ball(n, eps, (grid.node_position(i) - center).norm());
  for (double& v : phi.values)
    if (v < kClip) v = 0.0;

  for (int k = 0; k <= 20; ++k) {
    const double tau = std::ldexp(1.0, -k);
    ScalarField u = phi;
    for (double& v : u.values) v *= tau;
    const EnergyBreakdown e = disc.energy(u.values, 0.0, EnergyMode::sharp());
    if (e.total < 0.0 && e.vol_q_raw <= spec.volume) {
      Witness w;
      w.field = std::move(u);
      w.energy = e.total;
      w.tau = tau;
      w.center = center;
      w.radius = eps;
      return w;
    }
  }
  throw Error(ErrorCode::NoWitnessFound, "no tau = 2^-k (k <= 20) gives negative energy");
}

namespace {

HypothesisResult verdict(const std::string& name, bool ok, double measured, double threshold,
                         std::string note = {}) {
  return {name, ok ? Verdict::Pass : Verdict::Fail, measured, threshold, std::move(note)};
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

AdmissibilityReport check_admissibility(const ProblemSpec& spec, const SampleBudget& budget) {
  const int n = spec.dim;
  const double m = spec.volume;
  AdmissibilityReport rep;
  rep.u_max = budget.u_max > 0.0 ? budget.u_max : 10.0 * (1.0 + std::pow(m, 2.0 / n));
  rep.lambda1 = lambda1_ball(n, m);

  double box = budget.box_radius;
  if (box <= 0.0) {
    const double base = 2.0 * ball_radius(n, m / spec.weight.q_lo()) + 1.0;
    box = base;
    for (const auto& c : spec.nonlinearity.seed_points()) box = std::max(box, c.norm() + base);
  }

  std::mt19937_64 rng(budget.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t S = std::max<std::size_t>(budget.samples, 1000);

  std::vector<Vec> xs(S);
  std::vector<double> us(S), Fs(S), fs(S);
  bool all_finite = true;
  double hf1_mismatch = 0.0, hf2 = 0.0, f_min = std::numeric_limits<double>::infinity();
  double b_hat = 0.0, n_prime = 0.0, m2 = 0.0;
  double asym = 0.0, dA = 0.0, grad_q = 0.0, per = 0.0;
  double eig_lo = std::numeric_limits<double>::infinity(), eig_hi = 0.0;
  double q_lo = std::numeric_limits<double>::infinity(), q_hi = 0.0;

  for (std::size_t k = 0; k < S; ++k) {
    Vec x(n);
    for (int a = 0; a < n; ++a) x[a] = box * (2.0 * unit(rng) - 1.0);
    const double u = rep.u_max * unit(rng);
    const double u_hi = rep.u_max * (0.5 + 0.5 * unit(rng));
    xs[k] = x;
    us[k] = u;

    const auto& nl = spec.nonlinearity;
    const double F = nl.F(x, u), f = nl.f(x, u), fp = nl.fprime(x, u);
    Fs[k] = F;
    fs[k] = f;
    all_finite = all_finite && finite(F) && finite(f) && finite(fp) && finite(nl.grad_x_F(x, u).norm());

    const double du = 1e-6 * std::max(1.0, u);
    if (u > du) {
      const double fd = (nl.F(x, u + du) - nl.F(x, u - du)) / (2.0 * du);
      hf1_mismatch = std::max(hf1_mismatch, std::abs(fd - f) / (1.0 + std::abs(f)));
    }
    hf2 = std::max(hf2, std::abs(nl.F(x, 0.0)));
    f_min = std::min(f_min, f);
    n_prime = std::max(n_prime, nl.f(x, 0.0));
    m2 = std::max(m2, fp);
    b_hat = std::max(b_hat, nl.F(x, u_hi) / (u_hi * u_hi));

    const Mat A = spec.matrix(x);
    asym = std::max(asym, (A - A.transpose()).cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
    eig_lo = std::min(eig_lo, es.eigenvalues().minCoeff());
    eig_hi = std::max(eig_hi, es.eigenvalues().maxCoeff());
    for (int a = 0; a < n; ++a) {
      Vec e = Vec::Zero(n);
      e[a] = 1.0;
      dA = std::max(dA, spec.matrix.derivative_along(x, e).norm());
    }

    const double q = spec.weight(x);
    q_lo = std::min(q_lo, q);
    q_hi = std::max(q_hi, q);
    grad_q = std::max(grad_q, spec.weight.gradient(x).norm());

    if (spec.period) {
      for (int a = 0; a < n; ++a) {
        Vec y = x;
        y[a] += *spec.period;
        per = std::max(per, (spec.matrix(y) - A).cwiseAbs().maxCoeff());
        per = std::max(per, std::abs(spec.weight(y) - q));
        per = std::max(per, std::abs(nl.F(y, u) - F));
      }
    }
  }

  double N_hat = 0.0, M_hat = 0.0;
  for (std::size_t k = 0; k < S; ++k) {
    N_hat = std::max(N_hat, Fs[k] - b_hat * us[k] * us[k]);
    if (us[k] > 0.0) M_hat = std::max(M_hat, (fs[k] - n_prime) / us[k]);
  }

  rep.N = N_hat;
  rep.b = b_hat;
  rep.N_prime = n_prime;
  rep.M_prime = M_hat;
  rep.M2 = std::max(0.0, m2);
  rep.lambda_min_eig = eig_lo;
  rep.lambda_max_eig = eig_hi;
  rep.q_min = q_lo;
  rep.q_max = q_hi;

  const double lam = spec.matrix.lambda();
  const double b_threshold = lam * rep.lambda1 / 2.0;

  auto& R = rep.results;
  R.push_back(verdict("HF1", all_finite && hf1_mismatch <= 1e-5, hf1_mismatch, 1e-5,
                      "sampled; max relative |dF/du - f|"));
  R.push_back(verdict("HF2", hf2 == 0.0, hf2, 0.0, "sampled; max |F(x, 0)|"));
  R.push_back(verdict("HF3", f_min >= 0.0, f_min, 0.0, "sampled; min f"));
  R.push_back(verdict("HF4", b_hat < b_threshold, b_hat, b_threshold,
                      "sampled; b fitted on u in [u_max/2, u_max], threshold lambda*lambda_1(B^m)/2"));
  R.push_back(verdict("HF5", all_finite && finite(M_hat) && finite(m2), M_hat, 0.0,
                      "sampled; measured M' (N' and M2 in the report)"));
  try {
    rep.witness = witness_negative_energy(spec);
    R.push_back(verdict("HF6", true, rep.witness->energy, 0.0, "witness tau phi_1 found"));
  } catch (const Error& e) {
    R.push_back(verdict("HF6", false, 0.0, 0.0, e.what()));
  }
  R.push_back(verdict("HA1", finite(dA), dA, 0.0, "sampled; max |dA/dx_a|"));
  R.push_back(verdict("HA2", asym <= 1e-12, asym, 1e-12, "sampled; max |A - A^T|"));
  const bool ha3 = lam > 0.0 && lam <= 1.0 && eig_lo >= lam - 1e-12 && eig_hi <= 1.0 / lam + 1e-12;
  R.push_back(verdict("HA3", ha3, eig_lo, lam, "sampled; min eigenvalue vs declared lambda"));
  R.push_back(verdict("Hq1", finite(grad_q), grad_q, 0.0, "sampled; max |grad q|"));
  const bool hq2 = spec.weight.q_lo() > 0.0 && q_lo >= spec.weight.q_lo() - 1e-12 &&
                   q_hi <= spec.weight.q_hi() + 1e-12;
  R.push_back(verdict("Hq2", hq2, q_lo, spec.weight.q_lo(), "sampled; min q vs declared q_lo"));
  if (spec.period)
    R.push_back(verdict("HPer", per <= 1e-12, per, 1e-12, "sampled; max periodicity residual"));
  else
    R.push_back({"HPer", Verdict::NotApplicable, 0.0, 0.0, "no period declared"});
  return rep;
}

}  // namespace fb
