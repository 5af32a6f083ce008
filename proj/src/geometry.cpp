#include "fb/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "fb/error.hpp"

namespace fb {
namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

// Nodes of the support with a face neighbour outside it (or on the box boundary).
bool is_rim(const Grid& g, const std::vector<char>& in, std::size_t i) {
  const Index3 c = g.node_coords(i);
  if (g.on_boundary(c)) return true;
  const Index3 s = g.node_strides();
  for (int a = 0; a < g.dim; ++a)
    if (!in[i - static_cast<std::size_t>(s[a])] || !in[i + static_cast<std::size_t>(s[a])]) return true;
  return false;
}

double cross(const Vec& o, const Vec& a, const Vec& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

std::vector<Vec> hull_2d(std::vector<Vec> p) {
  std::sort(p.begin(), p.end(), [](const Vec& a, const Vec& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  if (p.size() < 3) return p;
  std::vector<Vec> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  return h;
}

std::vector<std::vector<std::size_t>> nodes_by_component(const ComponentDecomposition& dec) {
  std::vector<std::vector<std::size_t>> out(dec.components.size());
  for (std::size_t i = 0; i < dec.labels.size(); ++i)
    if (dec.labels[i] >= 0) out[static_cast<std::size_t>(dec.labels[i])].push_back(i);
  return out;
}

}  // namespace

SupportMask SupportMask::of(const ScalarField& u) {
  SupportMask m;
  m.grid = u.grid;
  m.mask.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) m.mask[i] = u[i] > 0.0;
  return m;
}

std::size_t SupportMask::count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

double node_set_diameter(const Grid& g, const std::vector<std::size_t>& nodes) {
  if (nodes.size() < 2) return 0.0;
  // A hull vertex is extreme along every grid line through it.
  std::vector<std::unordered_map<std::int64_t, std::pair<std::size_t, std::size_t>>> ext(
      static_cast<std::size_t>(g.dim));
  const Index3 st = g.node_strides();
  for (std::size_t i : nodes) {
    const Index3 c = g.node_coords(i);
    for (int a = 0; a < g.dim; ++a) {
      const std::int64_t line = static_cast<std::int64_t>(i) - c[a] * st[a];
      auto [it, fresh] = ext[static_cast<std::size_t>(a)].try_emplace(line, i, i);
      if (!fresh) {
        it->second.first = std::min(it->second.first, i);
        it->second.second = std::max(it->second.second, i);
      }
    }
  }
  std::vector<std::size_t> cand;
  for (const auto& m : ext)
    for (const auto& [line, ab] : m) {
      cand.push_back(ab.first);
      cand.push_back(ab.second);
    }
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  std::vector<Vec> pts;
  pts.reserve(cand.size());
  for (std::size_t i : cand) pts.push_back(g.node_position(i));
  if (g.dim == 2) pts = hull_2d(std::move(pts));
  double d2 = 0.0;
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b) d2 = std::max(d2, (pts[a] - pts[b]).squaredNorm());
  return std::sqrt(d2);
}

ComponentDecomposition connected_components(const SupportMask& mask) {
  const Grid& g = mask.grid;
  ComponentDecomposition dec;
  dec.grid = g;
  dec.labels.assign(mask.mask.size(), -1);
  const Index3 st = g.node_strides();
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < mask.mask.size(); ++seed) {
    if (!mask.mask[seed] || dec.labels[seed] >= 0) continue;
    const int id = static_cast<int>(dec.components.size());
    Component comp;
    comp.lo = comp.hi = g.node_coords(seed);
    dec.labels[seed] = id;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++comp.size;
      const Index3 c = g.node_coords(i);
      for (int a = 0; a < g.dim; ++a) {
        comp.lo[a] = std::min(comp.lo[a], c[a]);
        comp.hi[a] = std::max(comp.hi[a], c[a]);
        const auto s = static_cast<std::size_t>(st[a]);
        if (c[a] > 0 && mask.mask[i - s] && dec.labels[i - s] < 0) {
          dec.labels[i - s] = id;
          stack.push_back(i - s);
        }
        if (c[a] < g.cells[a] && mask.mask[i + s] && dec.labels[i + s] < 0) {
          dec.labels[i + s] = id;
          stack.push_back(i + s);
        }
      }
    }
    dec.components.push_back(comp);
  }
  const auto nodes = nodes_by_component(dec);
  for (std::size_t k = 0; k < dec.components.size(); ++k) {
    dec.components[k].diameter = node_set_diameter(g, nodes[k]);
    dec.components[k].ecc = static_cast<int>(k);
    dec.eccs.push_back({static_cast<int>(k)});
    dec.ecc_diameters.push_back(dec.components[k].diameter);
  }
  return dec;
}

ComponentDecomposition enlarge_components(ComponentDecomposition dec, double merge_distance) {
  const Grid& g = dec.grid;
  const int K = dec.N_cc();
  dec.merge_distance = merge_distance;
  UnionFind uf(K);

  // Rim nodes hashed into buckets of side merge_distance.
  std::vector<char> in(dec.labels.size());
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = dec.labels[i] >= 0;
  const double side = std::max(merge_distance, g.h);
  auto key_of = [&](const Vec& x) {
    Index3 k{0, 0, 0};
    for (int a = 0; a < g.dim; ++a) k[a] = static_cast<std::int64_t>(std::floor((x[a] - g.origin[a]) / side));
    return k;
  };
  auto pack = [](const Index3& k) {
    return (k[0] * 1000003LL + k[1]) * 1000003LL + k[2];
  };
  std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets;
  std::vector<std::size_t> rim;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (in[i] && is_rim(g, in, i)) {
      rim.push_back(i);
      buckets[pack(key_of(g.node_position(i)))].push_back(i);
    }
  const double d2max = merge_distance * merge_distance * (1.0 + 1e-12);
  for (std::size_t i : rim) {
    const Vec x = g.node_position(i);
    const Index3 k = key_of(x);
    const int li = dec.labels[i];
    Index3 o{0, 0, 0};
    const int span = g.dim == 3 ? 27 : (g.dim == 2 ? 9 : 3);
    for (int t = 0; t < span; ++t) {
      int r = t;
      for (int a = 0; a < g.dim; ++a) {
        o[a] = k[a] + (r % 3) - 1;
        r /= 3;
      }
      const auto it = buckets.find(pack(o));
      if (it == buckets.end()) continue;
      for (std::size_t j : it->second) {
        const int lj = dec.labels[j];
        if (lj == li || uf.find(li) == uf.find(lj)) continue;
        if ((g.node_position(j) - x).squaredNorm() <= d2max) uf.unite(li, lj);
      }
    }
  }

  dec.eccs.clear();
  dec.ecc_diameters.clear();
  std::vector<int> ecc_of_root(static_cast<std::size_t>(K), -1);
  for (int k = 0; k < K; ++k) {
    const int r = uf.find(k);
    if (ecc_of_root[static_cast<std::size_t>(r)] < 0) {
      ecc_of_root[static_cast<std::size_t>(r)] = static_cast<int>(dec.eccs.size());
      dec.eccs.emplace_back();
    }
    const int e = ecc_of_root[static_cast<std::size_t>(r)];
    dec.eccs[static_cast<std::size_t>(e)].push_back(k);
    dec.components[static_cast<std::size_t>(k)].ecc = e;
  }
  const auto nodes = nodes_by_component(dec);
  for (const auto& members : dec.eccs) {
    if (members.size() == 1) {
      dec.ecc_diameters.push_back(dec.components[static_cast<std::size_t>(members[0])].diameter);
      continue;
    }
    std::vector<std::size_t> all;
    for (int k : members) all.insert(all.end(), nodes[static_cast<std::size_t>(k)].begin(), nodes[static_cast<std::size_t>(k)].end());
    dec.ecc_diameters.push_back(node_set_diameter(g, all));
  }
  return dec;
}

DiameterReport diameter_report(const ComponentDecomposition& dec, int N_max, double D_max) {
  DiameterReport r;
  r.N_ecc = dec.N_ecc();
  r.ecc_diameters = dec.ecc_diameters;
  r.N_max = N_max;
  r.D_max = D_max;
  for (double d : dec.ecc_diameters) r.max_ecc_diameter = std::max(r.max_ecc_diameter, d);
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < dec.labels.size(); ++i)
    if (dec.labels[i] >= 0) all.push_back(i);
  r.support_diameter = node_set_diameter(dec.grid, all);
  r.count_pass = r.N_ecc <= N_max;
  r.diameter_pass = r.max_ecc_diameter <= D_max;
  return r;
}

CorkscrewReport corkscrew_check(const ScalarField& u, const std::vector<Vec>& points,
                                const std::vector<double>& rho_grid, double window) {
  const Grid& g = u.grid;
  const int n = g.dim;
  CorkscrewReport rep;
  rep.window = window;
  rep.min_rho = points.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  const auto reach = static_cast<std::int64_t>(std::ceil(2.0 * window / g.h)) + 1;

  for (const Vec& y : points) {
    Index3 c0{0, 0, 0};
    for (int a = 0; a < n; ++a) c0[a] = static_cast<std::int64_t>(std::llround((y[a] - g.origin[a]) / g.h));
    // Zero nodes (including virtual nodes beyond the box) within 2 window of y.
    std::vector<Vec> zeros;
    std::vector<std::pair<Vec, double>> cands;
    Index3 lo{0, 0, 0}, span{1, 1, 1};
    for (int a = 0; a < n; ++a) {
      lo[a] = c0[a] - reach;
      span[a] = 2 * reach + 1;
    }
    for (std::int64_t t0 = 0; t0 < span[0]; ++t0)
      for (std::int64_t t1 = 0; t1 < span[1]; ++t1)
        for (std::int64_t t2 = 0; t2 < span[2]; ++t2) {
          Index3 c{lo[0] + t0, n > 1 ? lo[1] + t1 : 0, n > 2 ? lo[2] + t2 : 0};
          const Vec x = g.position(c);
          const double dy = (x - y).norm();
          if (dy > 2.0 * window + g.h) continue;
          bool inside = true;
          for (int a = 0; a < n; ++a) inside &= c[a] >= 0 && c[a] <= g.cells[a];
          const bool pos = inside && u[g.node_index(c)] > 0.0;
          if (!pos) zeros.push_back(x);
          else if (dy < window) cands.emplace_back(x, dy);
        }
    double best = 0.0;
    Vec best_z = y;
    for (const auto& [z, dy] : cands) {
      double dz = window - dy;
      for (const Vec& w : zeros) dz = std::min(dz, (w - z).norm());
      if (dz > best) {
        best = dz;
        best_z = z;
      }
    }
    double quant = best;
    if (!rho_grid.empty()) {
      quant = 0.0;
      for (double r : rho_grid)
        if (r <= best) quant = std::max(quant, r);
    }
    rep.exact_rho.push_back(best);
    rep.best_rho.push_back(quant);
    rep.centers.push_back(best_z);
    rep.degenerate.push_back(best <= g.h * (1.0 + 1e-9));
    rep.min_rho = std::min(rep.min_rho, quant);
  }
  return rep;
}

std::string CompactionPlan::to_string() const {
  std::ostringstream s;
  s << "period=" << period << " cell_side=" << cell_side << " feasible=" << (feasible ? 1 : 0);
  for (std::size_t j = 0; j < translations.size(); ++j) {
    s << " v" << j << "=(";
    for (std::size_t a = 0; a < translations[j].size(); ++a) s << (a ? "," : "") << translations[j][a];
    s << ")";
  }
  return s.str();
}

std::pair<ScalarField, CompactionPlan> compact_periodic(const ScalarField& u, const ProblemSpec& spec,
                                                        const std::optional<CompactionPlan>& given) {
  if (!spec.period) throw Error(ErrorCode::NotPeriodic, "spec has no period");
  const Grid& g = u.grid;
  const int n = g.dim;
  const double T = *spec.period;
  const double steps = T / g.h;
  const auto shift = static_cast<std::int64_t>(std::llround(steps));
  if (shift <= 0 || std::abs(steps - static_cast<double>(shift)) > 1e-9 * steps)
    throw Error(ErrorCode::NotPeriodic, "period is not a multiple of h");

  const ComponentDecomposition dec = enlarge_components(connected_components(SupportMask::of(u)));
  const auto comp_nodes = nodes_by_component(dec);
  const int K = dec.N_ecc();

  // ECCs in lexicographic order of their bounding-box lower corner.
  std::vector<Index3> ecc_lo(static_cast<std::size_t>(K)), ecc_hi(static_cast<std::size_t>(K));
  for (int e = 0; e < K; ++e) {
    Index3 lo{std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::max(),
              std::numeric_limits<std::int64_t>::max()};
    Index3 hi{std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::min(),
              std::numeric_limits<std::int64_t>::min()};
    for (int k : dec.eccs[static_cast<std::size_t>(e)]) {
      const Component& c = dec.components[static_cast<std::size_t>(k)];
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], c.lo[a]);
        hi[a] = std::max(hi[a], c.hi[a]);
      }
    }
    ecc_lo[static_cast<std::size_t>(e)] = lo;
    ecc_hi[static_cast<std::size_t>(e)] = hi;
  }
  std::vector<int> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return ecc_lo[static_cast<std::size_t>(a)] < ecc_lo[static_cast<std::size_t>(b)];
  });

  CompactionPlan plan;
  plan.period = T;
  if (given) {
    plan = *given;
    if (static_cast<int>(plan.translations.size()) != K)
      throw Error(ErrorCode::InfeasiblePlan, "plan does not match the number of enlarged components");
  } else {
    double D = 0.0;
    for (double d : dec.ecc_diameters) D = std::max(D, d);
    const double Dhat = std::max(T, std::ceil(D / T - 1e-12) * T);
    plan.cell_side = 2.0 * Dhat;
    plan.translations.assign(static_cast<std::size_t>(K), std::vector<std::int64_t>(static_cast<std::size_t>(n), 0));
    plan.targets.assign(static_cast<std::size_t>(K), Vec::Zero(n));
    for (int j = 0; j < K; ++j) {
      const int e = order[static_cast<std::size_t>(j)];
      Vec target = Vec::Zero(n);
      target[0] = (2.0 * j - (K - 1)) * Dhat;
      plan.targets[static_cast<std::size_t>(e)] = target;
      const Vec lo = g.position(ecc_lo[static_cast<std::size_t>(e)]);
      const Vec hi = g.position(ecc_hi[static_cast<std::size_t>(e)]);
      bool inside = true;
      for (int a = 0; a < n; ++a) inside &= lo[a] >= target[a] - Dhat && hi[a] <= target[a] + Dhat;
      if (inside) continue;
      const Vec mid = 0.5 * (lo + hi);
      for (int a = 0; a < n; ++a)
        plan.translations[static_cast<std::size_t>(e)][static_cast<std::size_t>(a)] =
            std::llround((target[a] - mid[a]) / T);
    }
  }

  ScalarField out(g);
  std::vector<int> owner(u.size(), -1);
  const Index3 st = g.node_strides();
  plan.feasible = true;
  for (int e = 0; e < K && plan.feasible; ++e) {
    const auto& v = plan.translations[static_cast<std::size_t>(e)];
    for (int k : dec.eccs[static_cast<std::size_t>(e)])
      for (std::size_t i : comp_nodes[static_cast<std::size_t>(k)]) {
        Index3 c = g.node_coords(i);
        for (int a = 0; a < n; ++a) c[a] += v[static_cast<std::size_t>(a)] * shift;
        bool ok = true;
        for (int a = 0; a < n; ++a) ok &= c[a] > 0 && c[a] < g.cells[a];
        if (!ok) {
          plan.feasible = false;
          break;
        }
        const std::size_t j = g.node_index(c);
        // Translated ECCs may not share a cell.
        for (int t = 0; t < (1 << (2 * n)) && ok; ++t) {
          std::int64_t off = 0;
          int r = t;
          for (int a = 0; a < n; ++a) {
            off += ((r % 4 == 1) ? 1 : (r % 4 == 2) ? -1 : 0) * st[a];
            r /= 4;
          }
          const int o = owner[static_cast<std::size_t>(static_cast<std::int64_t>(j) + off)];
          if (o >= 0 && o != e) ok = false;
        }
        if (!ok) {
          plan.feasible = false;
          break;
        }
        owner[j] = e;
        out[j] = u[i];
      }
  }
  if (!plan.feasible) throw Error(ErrorCode::InfeasiblePlan, "translated components overlap or leave the box");
  return {std::move(out), std::move(plan)};
}

std::string components_csv(const ComponentDecomposition& dec) {
  std::ostringstream s;
  s.precision(17);
  s << "id,size,diameter,ecc\n";
  for (std::size_t k = 0; k < dec.components.size(); ++k) {
    const Component& c = dec.components[k];
    s << k << ',' << c.size << ',' << c.diameter << ',' << c.ecc << '\n';
  }
  return s.str();
}

}  // namespace fb
