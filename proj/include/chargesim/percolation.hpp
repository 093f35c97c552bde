#ifndef CHARGESIM_PERCOLATION_HPP
#define CHARGESIM_PERCOLATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chargesim/circuit.hpp"
#include "chargesim/rng.hpp"

namespace chargesim {

/// Per-link sharpness flags on the circuit graph. Links live on layers
/// t in [0, gateLayers]; link (t, i) sits between gate layers t-1 and t at
/// site i. The measurement layer following gate layer g marks links at layer
/// g+1.
struct SharpLattice {
  int L = 0;
  int gateLayers = 0;
  std::vector<std::uint8_t> sharp; // (gateLayers+1) * L

  std::size_t idx(int t, int i) const { return std::size_t(t) * L + i; }
  int linkLayers() const { return gateLayers + 1; }
  std::size_t numLinks() const { return sharp.size(); }
  std::size_t sharpCount() const {
    return std::accumulate(sharp.begin(), sharp.end(), std::size_t{0});
  }
};

/// Sharp set = measured links only (the "red links").
inline SharpLattice measuredLinks(const CircuitRealization& r) {
  SharpLattice s;
  s.L = r.spec.L;
  s.gateLayers = r.spec.gateLayers();
  s.sharp.assign(std::size_t(s.linkLayers()) * s.L, 0);
  for (int g = 0; g < s.gateLayers; ++g)
    for (int site : r.measuredSites[g])
      s.sharp[s.idx(g + 1, site)] = 1;
  return s;
}

namespace detail {

/// The four legs of the gate at layer g on bond (i, j), as link indices with
/// unwrapped site coordinates (the wrap bond's second site gets coordinate L).
struct GateLegs {
  std::size_t link[4];
  int coord[4];
};

inline GateLegs gateLegs(const SharpLattice& s, int g, const Bond& b) {
  const int xj = (b.j == 0) ? s.L : b.j; // unwrapped coordinate of second site
  GateLegs legs;
  legs.link[0] = s.idx(g, b.i);
  legs.coord[0] = b.i;
  legs.link[1] = s.idx(g, b.j);
  legs.coord[1] = xj;
  legs.link[2] = s.idx(g + 1, b.i);
  legs.coord[2] = b.i;
  legs.link[3] = s.idx(g + 1, b.j);
  legs.coord[3] = xj;
  return legs;
}

/// Index of the gate bond containing site i in layer g.
inline int bondOfSite(int L, int g, int i) {
  return (g % 2 == 0) ? i / 2 : ((i + L - 1) % L) / 2;
}

/// 3-of-4 deduction at one gate. Returns the index of a newly sharpened leg,
/// or -1.
inline int deduce(SharpLattice& s, const GateLegs& legs) {
  int nSharp = 0, missing = -1;
  for (int k = 0; k < 4; ++k) {
    if (s.sharp[legs.link[k]])
      ++nSharp;
    else
      missing = k;
  }
  if (nSharp == 3) {
    s.sharp[legs.link[missing]] = 1;
    return missing;
  }
  return -1;
}

} // namespace detail

/// Fixed point of the 3-of-4 charge-conservation deduction rule, starting
/// from the measured links. Worklist-driven; the fixed point is the monotone
/// closure and is independent of processing order.
inline SharpLattice propagateSharpness(const CircuitRealization& r) {
  SharpLattice s = measuredLinks(r);
  const int L = r.spec.L;
  // queue of gates to recheck, as (layer, bond index)
  std::vector<std::pair<int, int>> queue;
  queue.reserve(1024);
  for (int g = 0; g < s.gateLayers; ++g)
    for (int b = 0; b < L / 2; ++b)
      queue.emplace_back(g, b);
  while (!queue.empty()) {
    auto [g, bIdx] = queue.back();
    queue.pop_back();
    const Bond& b = r.gateBonds[g][bIdx];
    const auto legs = detail::gateLegs(s, g, b);
    const int newLeg = detail::deduce(s, legs);
    if (newLeg < 0)
      continue;
    // the newly sharp link touches one other gate (above or below)
    const int site = (newLeg % 2 == 0) ? b.i : b.j;
    const int otherLayer = (newLeg < 2) ? g - 1 : g + 1;
    if (otherLayer >= 0 && otherLayer < s.gateLayers)
      queue.emplace_back(otherLayer, detail::bondOfSite(L, otherLayer, site));
    queue.emplace_back(g, bIdx); // may deduce again (4th leg now known)
  }
  return s;
}

/// Sweep-based propagation (forward/backward full passes until no change).
/// Same fixed point as the worklist version; used to verify order
/// independence.
inline SharpLattice propagateSharpnessSweep(const CircuitRealization& r,
                                            bool reverse) {
  SharpLattice s = measuredLinks(r);
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < s.gateLayers; ++pass) {
      const int g = reverse ? s.gateLayers - 1 - pass : pass;
      for (const Bond& b : r.gateBonds[g])
        if (detail::deduce(s, detail::gateLegs(s, g, b)) >= 0)
          changed = true;
    }
  }
  return s;
}

/// Hidden classical charge trajectory of one projective realization, as link
/// values on layers t in [0, gateLayers]. In the large-qudit limit each gate
/// swaps its pair of charges with probability 1/2; sampling a hidden
/// trajectory and reading it off at the measured links reproduces the Born
/// distribution of outcomes exactly (ancestral sampling of the hidden Markov
/// chain that the filter tracks).
inline std::vector<std::uint8_t> sampleHiddenLinks(const CircuitRealization& r,
                                                   CounterRng& rng) {
  const int L = r.spec.L;
  const int T = r.spec.gateLayers();
  std::vector<std::uint8_t> c(std::size_t(T + 1) * L);
  for (int i = 0; i < L; ++i)
    c[i] = rng.bernoulli(0.5);
  for (int g = 0; g < T; ++g) {
    std::copy_n(c.begin() + std::size_t(g) * L, L,
                c.begin() + std::size_t(g + 1) * L);
    for (const Bond& b : r.gateBonds[g])
      if (rng.bernoulli(0.5))
        std::swap(c[std::size_t(g + 1) * L + b.i],
                  c[std::size_t(g + 1) * L + b.j]);
  }
  return c;
}

namespace detail {

/// Strongly connected component labels of a directed graph given as parallel
/// arc lists. Iterative Tarjan.
inline std::vector<int> sccLabels(int nNodes, const std::vector<int>& from,
                                  const std::vector<int>& to) {
  std::vector<int> head(nNodes, -1), next(from.size());
  for (std::size_t a = 0; a < from.size(); ++a) {
    next[a] = head[from[a]];
    head[from[a]] = int(a);
  }
  std::vector<int> comp(nNodes, -1), low(nNodes), num(nNodes, -1);
  std::vector<int> stk, frame, arcIt;
  std::vector<std::uint8_t> onStk(nNodes, 0);
  int idx = 0, nComp = 0;
  for (int s0 = 0; s0 < nNodes; ++s0) {
    if (num[s0] >= 0)
      continue;
    num[s0] = low[s0] = idx++;
    stk.push_back(s0);
    onStk[s0] = 1;
    frame.push_back(s0);
    arcIt.push_back(head[s0]);
    while (!frame.empty()) {
      const int v = frame.back();
      int& a = arcIt.back();
      if (a != -1) {
        const int w = to[a];
        a = next[a];
        if (num[w] < 0) {
          num[w] = low[w] = idx++;
          stk.push_back(w);
          onStk[w] = 1;
          frame.push_back(w);
          arcIt.push_back(head[w]);
        } else if (onStk[w] && num[w] < low[v]) {
          low[v] = num[w];
        }
      } else {
        frame.pop_back();
        arcIt.pop_back();
        if (!frame.empty() && low[v] < low[frame.back()])
          low[frame.back()] = low[v];
        if (low[v] == num[v]) {
          while (true) {
            const int w = stk.back();
            stk.pop_back();
            onStk[w] = 0;
            comp[w] = nComp;
            if (w == v)
              break;
          }
          ++nComp;
        }
      }
    }
  }
  return comp;
}

} // namespace detail

/// Outcome-resolved sharpness: a link is sharp iff every charge history
/// consistent with all measurement outcomes agrees on its value. Consistent
/// histories are exactly the 0/1 flows on the circuit graph whose nodes are
/// the gates (charge-conserving) plus one reservoir for the free initial and
/// final layers, with the measured links pinned to their outcomes. The hidden
/// trajectory is one such flow, and two feasible flows differ by a circulation
/// in the residual graph, so a link's value is ambiguous iff its residual arc
/// lies on a directed cycle, i.e. both its endpoints fall in the same
/// strongly connected component. Subsumes the 3-of-4 rule and its
/// outcome-dependent relatives (e.g. two equal measured charges entering one
/// gate determine both outputs).
inline SharpLattice informationSharpness(const CircuitRealization& r,
                                         const std::vector<std::uint8_t>& hidden) {
  const int L = r.spec.L;
  const int T = r.spec.gateLayers();
  const int H = L / 2;
  SharpLattice s;
  s.L = L;
  s.gateLayers = T;
  s.sharp.assign(std::size_t(T + 1) * L, 0);
  if (hidden.size() != s.numLinks())
    throw std::invalid_argument("informationSharpness: hidden size mismatch");
  for (int g = 0; g < T; ++g)
    for (int site : r.measuredSites[g])
      s.sharp[s.idx(g + 1, site)] = 1;
  const int reservoir = T * H;
  // residual arc per unmeasured link, oriented lower->upper gate if the link
  // can gain a charge (hidden value 0) and upper->lower if it can lose one
  std::vector<int> from, to, linkOf;
  from.reserve(s.numLinks());
  to.reserve(s.numLinks());
  linkOf.reserve(s.numLinks());
  for (int t = 0; t <= T; ++t) {
    for (int i = 0; i < L; ++i) {
      const std::size_t e = s.idx(t, i);
      if (s.sharp[e])
        continue;
      const int lo = (t == 0) ? reservoir
                              : (t - 1) * H + detail::bondOfSite(L, t - 1, i);
      const int hi = (t == T) ? reservoir : t * H + detail::bondOfSite(L, t, i);
      from.push_back(hidden[e] ? hi : lo);
      to.push_back(hidden[e] ? lo : hi);
      linkOf.push_back(int(e));
    }
  }
  const auto comp = detail::sccLabels(reservoir + 1, from, to);
  for (std::size_t a = 0; a < from.size(); ++a)
    if (comp[from[a]] != comp[to[a]])
      s.sharp[linkOf[a]] = 1;
  return s;
}

/// Union-find over sharp links with per-node horizontal displacement tags.
/// Two sharp links are adjacent iff they touch the same gate. A spatial wrap
/// is detected when uniting two nodes already in one cluster whose recorded
/// displacement difference disagrees with the local one (standard winding
/// criterion: accumulated displacement nonzero modulo L).
class ClusterForest {
public:
  explicit ClusterForest(std::size_t n)
      : parent_(n), rank_(n, 0), disp_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  /// Root of x; disp receives the displacement of x relative to the root.
  std::size_t find(std::size_t x, long& disp) {
    // first pass: find root
    std::size_t root = x;
    long d = 0;
    while (parent_[root] != root) {
      d += disp_[root];
      root = parent_[root];
    }
    // second pass: path compression with displacement folding
    std::size_t cur = x;
    long dCur = d;
    while (parent_[cur] != root) {
      const std::size_t next = parent_[cur];
      const long dNext = dCur - disp_[cur];
      parent_[cur] = root;
      disp_[cur] = dCur;
      cur = next;
      dCur = dNext;
    }
    disp = d;
    return root;
  }

  /// Connect a and b with pos(b) - pos(a) = delta. Returns true if a merge
  /// happened; records a wrap when the pair was already connected with an
  /// inconsistent displacement.
  bool unite(std::size_t a, std::size_t b, long delta) {
    long da = 0, db = 0;
    const std::size_t ra = find(a, da);
    const std::size_t rb = find(b, db);
    if (ra == rb) {
      if (db - da != delta)
        wrapped_ = true;
      return false;
    }
    // pos(x) = disp(x) + pos(root(x)); want pos(rb) in ra frame:
    // pos(b) = pos(a) + delta => pos(rb) = pos(ra) + da + delta - db
    if (rank_[ra] < rank_[rb]) {
      parent_[ra] = rb;
      disp_[ra] = -(da + delta - db);
    } else {
      parent_[rb] = ra;
      disp_[rb] = da + delta - db;
      if (rank_[ra] == rank_[rb])
        ++rank_[ra];
    }
    ++merges_;
    return true;
  }

  bool wrapped() const { return wrapped_; }
  std::size_t merges() const { return merges_; }

private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
  std::vector<long> disp_;
  bool wrapped_ = false;
  std::size_t merges_ = 0;
};

struct ClusterResult {
  bool wrapped = false;
  std::size_t clusters = 0;
  std::size_t merges = 0;
  std::size_t sharpLinks = 0;
};

/// Cluster the sharp links of a lattice and detect spatial wrapping.
inline ClusterResult clusterSharpLinks(const SharpLattice& s,
                                       const CircuitRealization& r) {
  ClusterForest forest(s.numLinks());
  for (int g = 0; g < s.gateLayers; ++g) {
    for (const Bond& b : r.gateBonds[g]) {
      const auto legs = detail::gateLegs(s, g, b);
      int anchor = -1;
      for (int k = 0; k < 4; ++k) {
        if (!s.sharp[legs.link[k]])
          continue;
        if (anchor < 0) {
          anchor = k;
          continue;
        }
        forest.unite(legs.link[anchor], legs.link[k],
                     legs.coord[k] - legs.coord[anchor]);
      }
    }
  }
  ClusterResult out;
  out.wrapped = forest.wrapped();
  out.merges = forest.merges();
  out.sharpLinks = s.sharpCount();
  out.clusters = out.sharpLinks - out.merges;
  return out;
}

enum class SharpRule { propagated, measuredOnly, information };

inline std::string toString(SharpRule rule) {
  switch (rule) {
  case SharpRule::propagated:
    return "propagated";
  case SharpRule::measuredOnly:
    return "measured";
  case SharpRule::information:
    return "information";
  }
  return "";
}

struct WrapPoint {
  double p = 0.0;
  int L = 0;
  int depth = 0;
  double pWrap = 0.0;
  double stderrWrap = 0.0;
  int nRealizations = 0;
};

inline std::uint64_t deriveSeed(std::uint64_t master, std::uint64_t index) {
  return mix64(master + kGolden * (index + 1));
}

/// Fraction of disorder realizations whose sharp-link clusters wrap around
/// the periodic spatial direction.
inline WrapPoint wrapProbability(double p, int L, int depth, int nRealizations,
                                 std::uint64_t seed, SharpRule rule,
                                 std::uint64_t salt = 0) {
  if (depth < L)
    throw std::invalid_argument("wrapProbability: depth must be >= L");
  int wraps = 0;
  for (int k = 0; k < nRealizations; ++k) {
    CircuitSpec spec;
    spec.L = L;
    spec.depth = depth;
    spec.p = p;
    spec.seed = deriveSeed(seed, streamId(stream::kPercolation, k, salt));
    const CircuitRealization r = realize(spec);
    SharpLattice s;
    if (rule == SharpRule::propagated) {
      s = propagateSharpness(r);
    } else if (rule == SharpRule::measuredOnly) {
      s = measuredLinks(r);
    } else {
      CounterRng rng(spec.seed, streamId(stream::kOutcome, 0));
      s = informationSharpness(r, sampleHiddenLinks(r, rng));
    }
    if (clusterSharpLinks(s, r).wrapped)
      ++wraps;
  }
  WrapPoint pt;
  pt.p = p;
  pt.L = L;
  pt.depth = depth;
  pt.nRealizations = nRealizations;
  pt.pWrap = double(wraps) / nRealizations;
  pt.stderrWrap =
      std::sqrt(std::max(pt.pWrap * (1.0 - pt.pWrap), 1e-12) / nRealizations);
  return pt;
}

inline WrapPoint measuredLinkPercolation(double p, int L, int depth,
                                         int nRealizations, std::uint64_t seed,
                                         std::uint64_t salt = 0) {
  return wrapProbability(p, L, depth, nRealizations, seed,
                         SharpRule::measuredOnly, salt);
}

/// One wrapping-probability curve P_wrap(p) at fixed L.
struct WrapCurve {
  int L = 0;
  std::vector<double> p;
  std::vector<double> pWrap;
};

/// Linear-interpolated crossing of two curves sharing a p grid. Exact ties
/// (both curves saturated at 0 or 1) are skipped: a crossing needs a strict
/// sign change of the difference. Throws if the sign never changes.
inline double curveCrossing(const WrapCurve& a, const WrapCurve& b) {
  if (a.p != b.p || a.p.size() < 2)
    throw std::invalid_argument("curveCrossing: incompatible grids");
  std::size_t prev = a.p.size();
  for (std::size_t k = 0; k < a.p.size(); ++k) {
    const double d = a.pWrap[k] - b.pWrap[k];
    if (d == 0.0)
      continue;
    if (prev < k) {
      const double d0 = a.pWrap[prev] - b.pWrap[prev];
      if (d0 * d < 0.0) {
        if (k - prev > 1) // the curves touch on the ties in between
          return 0.5 * (a.p[prev + 1] + a.p[k - 1]);
        return a.p[prev] + (a.p[k] - a.p[prev]) * d0 / (d0 - d);
      }
    }
    prev = k;
  }
  throw std::runtime_error("curveCrossing: no crossing in range");
}

struct CollapseResult {
  double pc = 0.0;
  double nu = 0.0;
  double score = 0.0;
  std::vector<double> pcGrid;
  std::vector<double> nuGrid;
  std::vector<double> scoreSurface; // [pcGrid.size() * nuGrid.size()]
};

namespace detail {

inline double collapseScore(const std::vector<WrapCurve>& curves, double pc,
                            double nu, double yMin, double yMax) {
  // rescale abscissa to u = (p - pc) L^{1/nu}; score = summed squared
  // deviation of each point from the other curves' interpolants. Points on
  // the saturated tails match any interpolant trivially and would only
  // dilute the score, so references outside [yMin, yMax] are skipped.
  double score = 0.0;
  std::size_t nPairs = 0;
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto& ref = curves[c];
    const double sc = std::pow(double(ref.L), 1.0 / nu);
    for (std::size_t k = 0; k < ref.p.size(); ++k) {
      if (ref.pWrap[k] < yMin || ref.pWrap[k] > yMax)
        continue;
      const double u = (ref.p[k] - pc) * sc;
      for (std::size_t o = 0; o < curves.size(); ++o) {
        if (o == c)
          continue;
        const auto& other = curves[o];
        const double so = std::pow(double(other.L), 1.0 / nu);
        const double uLo = (other.p.front() - pc) * so;
        const double uHi = (other.p.back() - pc) * so;
        if (u < uLo || u > uHi)
          continue;
        // linear interpolation of the other curve at u
        std::size_t m = 1;
        while (m + 1 < other.p.size() && (other.p[m] - pc) * so < u)
          ++m;
        const double u0 = (other.p[m - 1] - pc) * so;
        const double u1 = (other.p[m] - pc) * so;
        const double f = (u1 == u0) ? 0.0 : (u - u0) / (u1 - u0);
        const double y = other.pWrap[m - 1] +
                         f * (other.pWrap[m] - other.pWrap[m - 1]);
        score += (ref.pWrap[k] - y) * (ref.pWrap[k] - y);
        ++nPairs;
      }
    }
  }
  return nPairs > 0 ? score / double(nPairs)
                    : std::numeric_limits<double>::infinity();
}

} // namespace detail

/// Grid search for the (p_c, nu) minimizing the collapse score of rescaled
/// wrapping-probability curves.
inline CollapseResult scalingCollapse(const std::vector<WrapCurve>& curves,
                                      std::vector<double> pcGrid,
                                      std::vector<double> nuGrid,
                                      double yMin = 0.02,
                                      double yMax = 0.98) {
  if (curves.size() < 3)
    throw std::invalid_argument("scalingCollapse: need >= 3 system sizes");
  CollapseResult out;
  out.pcGrid = std::move(pcGrid);
  out.nuGrid = std::move(nuGrid);
  out.scoreSurface.resize(out.pcGrid.size() * out.nuGrid.size());
  out.score = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < out.pcGrid.size(); ++a) {
    for (std::size_t b = 0; b < out.nuGrid.size(); ++b) {
      const double s = detail::collapseScore(curves, out.pcGrid[a],
                                             out.nuGrid[b], yMin, yMax);
      out.scoreSurface[a * out.nuGrid.size() + b] = s;
      if (s < out.score) {
        out.score = s;
        out.pc = out.pcGrid[a];
        out.nu = out.nuGrid[b];
      }
    }
  }
  return out;
}

} // namespace chargesim

#endif // CHARGESIM_PERCOLATION_HPP
