#ifndef CHARGESIM_ORACLE_HPP
#define CHARGESIM_ORACLE_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "chargesim/circuit.hpp"
#include "chargesim/distribution.hpp"

namespace chargesim {

/// Exact depth-first enumeration of all measurement-outcome histories of a
/// projective realization, with exact Born weights. onLeaf(weight, finalDist)
/// is invoked once per history; weights sum to 1. Branches whose Born
/// probability is exactly zero are not taken. Refuses to explore more than
/// maxLeaves histories.
class TrajectoryEnumerator {
public:
  explicit TrajectoryEnumerator(const CircuitRealization& r,
                                std::size_t maxLeaves = std::size_t{1} << 20)
      : r_(r), maxLeaves_(maxLeaves) {
    if (r.spec.mode != MeasureMode::projective)
      throw std::invalid_argument("enumerateTrajectories: projective only");
  }

  using Leaf = std::function<void(double, const ChargeDistribution&)>;

  void run(const ChargeDistribution& initial, const Leaf& onLeaf) {
    leaves_ = 0;
    descend(initial, 1.0, 0, 0, onLeaf);
  }

  std::size_t leafCount() const { return leaves_; }

private:
  void descend(ChargeDistribution dist, double weight, int gateLayer,
               std::size_t measIdx, const Leaf& onLeaf) {
    const int layers = r_.spec.gateLayers();
    while (gateLayer < layers) {
      if (measIdx == 0)
        for (const Bond& b : r_.gateBonds[gateLayer])
          dist.applyGate(b.i, b.j);
      const auto& sites = r_.measuredSites[gateLayer];
      while (measIdx < sites.size()) {
        const int site = sites[measIdx];
        const double pUp = dist.siteMarginalUp(site);
        ++measIdx;
        // branches below the roundoff floor are deterministic in exact
        // arithmetic; taking them can leave an empty complementary sector
        constexpr double eps = 1e-12;
        if (pUp > eps && pUp < 1.0 - eps) {
          // branch: copy for +1, continue in place with -1
          ChargeDistribution up = dist;
          up.forceProjective(site, +1);
          descend(std::move(up), weight * pUp, gateLayer, measIdx, onLeaf);
          dist.forceProjective(site, -1);
          weight *= (1.0 - pUp);
        } else {
          dist.forceProjective(site, pUp >= 0.5 ? +1 : -1);
        }
      }
      ++gateLayer;
      measIdx = 0;
    }
    if (++leaves_ > maxLeaves_)
      throw std::length_error("enumerateTrajectories: branch count exceeds cap");
    onLeaf(weight, dist);
  }

  const CircuitRealization& r_;
  std::size_t maxLeaves_;
  std::size_t leaves_ = 0;
};

/// Trajectory-ensemble moments of sigma^z-diagonal observables from exact
/// enumeration: E[<A>] and E[<A><B>] for single sites and site pairs.
struct EnumeratedMoments {
  double eSigma0 = 0.0;       // E[<sigma_a>]
  double eSigma01 = 0.0;      // E[<sigma_a sigma_b>]
  double eProdSigma = 0.0;    // E[<sigma_a><sigma_b>]
  double eSigma01Sq = 0.0;    // E[<sigma_a sigma_b>^2]
  double totalWeight = 0.0;
};

inline EnumeratedMoments enumerateMoments(const CircuitRealization& r, int a,
                                          int b,
                                          std::size_t maxLeaves = std::size_t{1}
                                                                  << 20) {
  EnumeratedMoments m;
  TrajectoryEnumerator en(r, maxLeaves);
  en.run(ChargeDistribution::uniform(r.spec.L),
         [&](double w, const ChargeDistribution& d) {
           const double sa = d.expectSigma(a);
           const double sb = d.expectSigma(b);
           const double sab = d.expectSigmaPair(a, b);
           m.eSigma0 += w * sa;
           m.eSigma01 += w * sab;
           m.eProdSigma += w * sa * sb;
           m.eSigma01Sq += w * sab * sab;
           m.totalWeight += w;
         });
  return m;
}

/// Joint distribution over Q replicas of the charge configuration, evolved by
/// the replicated kernels applied literally: per-replica triplet averaging for
/// gates, and measurements forcing all replicas to the same outcome. Used as a
/// cross-check oracle for small systems.
class ReplicaOracleState {
public:
  ReplicaOracleState(int L, int Q) : L_(L), Q_(Q) {
    if (L < 1 || L > 8)
      throw std::invalid_argument("ReplicaOracleState: L out of range [1,8]");
    if (Q != 1 && Q != 2 && Q != 3)
      throw std::invalid_argument("ReplicaOracleState: Q must be 1, 2 or 3");
    const std::size_t n = std::size_t{1} << (std::size_t(L) * Q);
    w_.assign(n, 1.0 / double(n));
  }

  int numSites() const { return L_; }
  int replicas() const { return Q_; }
  std::span<const double> weights() const { return w_; }

  std::size_t bitIndex(int replica, int site) const {
    return std::size_t(replica) * L_ + site;
  }

  /// Per-replica gate-averaged kernel on bond (i, j).
  void applyGate(int i, int j) {
    for (int a = 0; a < Q_; ++a) {
      const std::size_t mi = std::size_t{1} << bitIndex(a, i);
      const std::size_t mj = std::size_t{1} << bitIndex(a, j);
      const std::size_t both = mi | mj;
      for (std::size_t n = 0; n < w_.size(); ++n) {
        if ((n & both) == mi) {
          const std::size_t partner = n ^ both;
          const double avg = 0.5 * (w_[n] + w_[partner]);
          w_[n] = avg;
          w_[partner] = avg;
        }
      }
    }
  }

  /// Force sigma^z_{a,site} = outcomeSign in every replica; renormalize.
  /// Returns the Born weight of the outcome, i.e. the Q-th root of the joint
  /// probability that all replicas agree at the outcome (for replicated
  /// product states this equals the single-replica Born probability).
  double forceMeasure(int site, int outcomeSign) {
    const bool keepSet = outcomeSign > 0;
    double sector = 0.0, total = 0.0;
    for (std::size_t n = 0; n < w_.size(); ++n) {
      total += w_[n];
      bool keep = true;
      for (int a = 0; a < Q_; ++a)
        if (static_cast<bool>(n >> bitIndex(a, site) & 1) != keepSet)
          keep = false;
      if (!keep)
        w_[n] = 0.0;
      else
        sector += w_[n];
    }
    if (!(sector > 0.0))
      return 0.0;
    const double inv = 1.0 / sector;
    for (double& v : w_)
      v *= inv;
    return std::pow(sector / total, 1.0 / Q_);
  }

  /// Expectation of a product of sigma^z over (replica, site) pairs.
  double expect(std::span<const std::pair<int, int>> ops) const {
    double s = 0.0;
    for (std::size_t n = 0; n < w_.size(); ++n) {
      double sign = 1.0;
      for (auto [a, i] : ops)
        if (!(n >> bitIndex(a, i) & 1))
          sign = -sign;
      s += sign * w_[n];
    }
    return s;
  }

private:
  int L_;
  int Q_;
  std::vector<double> w_;
};

/// One gate layer plus its measurement layer of the replicated transfer
/// matrix, with forced outcomes (caller supplies one outcome per measured
/// site, in realization order). Returns the product of Born weights.
inline double replicaTransferStep(ReplicaOracleState& state,
                                  const CircuitRealization& r, int gateLayer,
                                  std::span<const int> outcomes) {
  for (const Bond& b : r.gateBonds[gateLayer])
    state.applyGate(b.i, b.j);
  const auto& sites = r.measuredSites[gateLayer];
  if (outcomes.size() != sites.size())
    throw std::invalid_argument("replicaTransferStep: outcome count mismatch");
  double w = 1.0;
  for (std::size_t k = 0; k < sites.size(); ++k)
    w *= state.forceMeasure(sites[k], outcomes[k]);
  return w;
}

/// Born-weighted enumeration over outcome histories in the replicated
/// representation. onLeaf(weight, state) per history.
inline void
replicaEnumerate(const CircuitRealization& r, int Q,
                 const std::function<void(double, const ReplicaOracleState&)>&
                     onLeaf) {
  struct Walker {
    const CircuitRealization& r;
    const std::function<void(double, const ReplicaOracleState&)>& onLeaf;
    void descend(ReplicaOracleState state, double weight, int gateLayer,
                 std::size_t measIdx) {
      const int layers = r.spec.gateLayers();
      while (gateLayer < layers) {
        if (measIdx == 0)
          for (const Bond& b : r.gateBonds[gateLayer])
            state.applyGate(b.i, b.j);
        const auto& sites = r.measuredSites[gateLayer];
        while (measIdx < sites.size()) {
          const int site = sites[measIdx];
          ++measIdx;
          ReplicaOracleState up = state;
          const double wUp = up.forceMeasure(site, +1);
          constexpr double eps = 1e-12;
          if (wUp > eps && wUp < 1.0 - eps) {
            descend(std::move(up), weight * wUp, gateLayer, measIdx);
            const double wDn = state.forceMeasure(site, -1);
            weight *= wDn;
          } else if (wUp >= 0.5) {
            state = std::move(up);
          } else {
            state.forceMeasure(site, -1);
          }
        }
        ++gateLayer;
        measIdx = 0;
      }
      onLeaf(weight, state);
    }
  };
  Walker w{r, onLeaf};
  w.descend(ReplicaOracleState(r.spec.L, Q), 1.0, 0, 0);
}

/// Exact Bayesian variance decrement for the two-sector toy model: the total
/// charge is N with probability pMix and N+1 otherwise, and a measured site is
/// occupied with probability N/L resp. (N+1)/L. Returns
/// initialVar - E_outcome[posteriorVar] for one measurement.
inline double varianceDecrementOracle(int L, int N, double pMix) {
  if (L < 1 || N < 0 || N >= L)
    throw std::invalid_argument("varianceDecrementOracle: need 0 <= N < L");
  if (!(pMix >= 0.0 && pMix <= 1.0))
    throw std::invalid_argument("varianceDecrementOracle: pMix out of [0,1]");
  const double q1 = double(N) / L;       // occupied prob given charge N
  const double q2 = double(N + 1) / L;   // occupied prob given charge N+1
  const double pOcc = pMix * q1 + (1.0 - pMix) * q2;
  const double pEmp = 1.0 - pOcc;
  const double priorVar = pMix * (1.0 - pMix);
  double posterior = 0.0;
  if (pOcc > 0.0) {
    const double p1 = pMix * q1 / pOcc;
    posterior += pOcc * p1 * (1.0 - p1);
  }
  if (pEmp > 0.0) {
    const double p0 = pMix * (1.0 - q1) / pEmp;
    posterior += pEmp * p0 * (1.0 - p0);
  }
  return priorVar - posterior;
}

} // namespace chargesim

#endif // CHARGESIM_ORACLE_HPP
