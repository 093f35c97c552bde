#ifndef CHARGESIM_DISTRIBUTION_HPP
#define CHARGESIM_DISTRIBUTION_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "chargesim/circuit.hpp"
#include "chargesim/rng.hpp"

namespace chargesim {

/// One measurement event. In projective mode outcome is +-1; in weak mode it
/// is the Gaussian-sampled real m.
struct MeasurementRecord {
  int layer = 0;
  int site = 0;
  double outcome = 0.0;
};

/// The trajectory's conditional probability distribution over the 2^L charge
/// basis configurations. Configuration bits encode sigma^z: bit set = +1.
/// Kept normalized; the accumulated log of normalization factors (the Born
/// weight bookkeeping) lives in logNorm().
class ChargeDistribution {
public:
  explicit ChargeDistribution(int L)
      : L_(L), w_(std::size_t{1} << L, 1.0 / double(std::size_t{1} << L)) {
    if (L < 1 || L > 26)
      throw std::invalid_argument("ChargeDistribution: L out of range [1,26]");
  }

  static ChargeDistribution uniform(int L) { return ChargeDistribution(L); }

  static ChargeDistribution delta(int L, std::uint32_t config) {
    ChargeDistribution d(L);
    std::fill(d.w_.begin(), d.w_.end(), 0.0);
    d.w_.at(config) = 1.0;
    return d;
  }

  /// Mixture of two uniform total-charge sectors: nUp1 up-spins with
  /// probability pMix, nUp2 with probability 1-pMix.
  static ChargeDistribution twoSector(int L, int nUp1, int nUp2, double pMix) {
    if (nUp1 < 0 || nUp1 > L || nUp2 < 0 || nUp2 > L)
      throw std::invalid_argument("twoSector: sector out of range");
    if (!(pMix >= 0.0 && pMix <= 1.0))
      throw std::invalid_argument("twoSector: pMix out of range");
    ChargeDistribution d(L);
    std::fill(d.w_.begin(), d.w_.end(), 0.0);
    std::size_t c1 = 0, c2 = 0;
    for (std::size_t n = 0; n < d.w_.size(); ++n) {
      const int k = std::popcount(n);
      if (k == nUp1)
        ++c1;
      if (k == nUp2)
        ++c2;
    }
    for (std::size_t n = 0; n < d.w_.size(); ++n) {
      const int k = std::popcount(n);
      if (k == nUp1)
        d.w_[n] += pMix / double(c1);
      if (k == nUp2)
        d.w_[n] += (1.0 - pMix) / double(c2);
    }
    return d;
  }

  int numSites() const { return L_; }
  std::size_t size() const { return w_.size(); }
  double logNorm() const { return logNorm_; }
  std::span<const double> weights() const { return w_; }
  std::span<double> weights() { return w_; }
  double operator[](std::size_t n) const { return w_[n]; }

  double totalWeight() const {
    double s = 0.0;
    for (double v : w_)
      s += v;
    return s;
  }

  /// Divide by the current total weight, accumulating its log.
  void normalize() {
    const double s = totalWeight();
    if (!(s > 0.0))
      throw std::runtime_error("ChargeDistribution: degenerate state, total "
                               "weight not positive");
    const double inv = 1.0 / s;
    for (double& v : w_)
      v *= inv;
    logNorm_ += std::log(s);
  }

  /// P(sigma^z_site = +1).
  double siteMarginalUp(int site) const {
    const std::size_t mask = std::size_t{1} << site;
    double s = 0.0;
    for (std::size_t n = 0; n < w_.size(); ++n)
      if (n & mask)
        s += w_[n];
    return s;
  }

  double expectSigma(int site) const { return 2.0 * siteMarginalUp(site) - 1.0; }

  double expectSigmaPair(int i, int j) const {
    const std::size_t mi = std::size_t{1} << i;
    const std::size_t mj = std::size_t{1} << j;
    double s = 0.0;
    for (std::size_t n = 0; n < w_.size(); ++n) {
      const bool bi = n & mi, bj = n & mj;
      s += (bi == bj) ? w_[n] : -w_[n];
    }
    return s;
  }

  /// Total charge Q = sum_i sigma^z_i moments.
  double totalChargeMean() const {
    double s = 0.0;
    for (std::size_t n = 0; n < w_.size(); ++n)
      s += w_[n] * (2 * std::popcount(n) - L_);
    return s;
  }

  double totalChargeVariance() const {
    double m = 0.0, m2 = 0.0;
    for (std::size_t n = 0; n < w_.size(); ++n) {
      const double q = 2 * std::popcount(n) - L_;
      m += w_[n] * q;
      m2 += w_[n] * q * q;
    }
    return m2 - m * m;
  }

  /// Gate-averaged charge-conserving kernel on bond (i, j): every
  /// configuration pair related by swapping the two charges has both weights
  /// replaced by their average. Exactly weight-preserving and total-charge
  /// conserving per sector.
  void applyGate(int i, int j) {
    const std::size_t mi = std::size_t{1} << i;
    const std::size_t mj = std::size_t{1} << j;
    const std::size_t both = mi | mj;
    for (std::size_t n = 0; n < w_.size(); ++n) {
      if ((n & both) == mi) { // bit i set, bit j clear: visit each pair once
        const std::size_t partner = n ^ both;
        const double avg = 0.5 * (w_[n] + w_[partner]);
        w_[n] = avg;
        w_[partner] = avg;
      }
    }
  }

  /// Collapse onto sigma^z_site = outcomeSign (+1/-1) and renormalize.
  /// Returns the Born probability of that branch.
  double forceProjective(int site, int outcomeSign) {
    const std::size_t mask = std::size_t{1} << site;
    const bool keepSet = outcomeSign > 0;
    double branch = 0.0;
    for (std::size_t n = 0; n < w_.size(); ++n) {
      if (static_cast<bool>(n & mask) != keepSet)
        w_[n] = 0.0;
      else
        branch += w_[n];
    }
    if (branch < 1e-300)
      throw std::runtime_error(
          "measureProjective: branch probability degenerate");
    const double inv = 1.0 / branch;
    for (double& v : w_)
      v *= inv;
    logNorm_ += std::log(branch);
    return branch;
  }

  /// Born-sampled projective measurement: outcome +1 with probability
  /// P(sigma^z_site = +1) under the current state.
  MeasurementRecord measureProjective(int layer, int site, CounterRng& rng) {
    const double pUp = siteMarginalUp(site);
    const int outcome = rng.uniform() < pUp ? +1 : -1;
    forceProjective(site, outcome);
    return {layer, site, double(outcome)};
  }

  /// Reweight by the Gaussian measurement kernel exp[-(g/2)(sigma - m)^2]
  /// with g = gamma*dt, then renormalize. g = 0 leaves the state unchanged.
  void applyWeak(int site, double gammaDt, double m) {
    if (!std::isfinite(m))
      throw std::runtime_error("measureWeak: non-finite outcome");
    if (gammaDt <= 0.0)
      return;
    const std::size_t mask = std::size_t{1} << site;
    // Common factor divided out for stability; it only shifts logNorm and is
    // restored below.
    const double eUp = -0.5 * gammaDt * (1.0 - m) * (1.0 - m);
    const double eDn = -0.5 * gammaDt * (-1.0 - m) * (-1.0 - m);
    const double eMax = std::max(eUp, eDn);
    const double fUp = std::exp(eUp - eMax);
    const double fDn = std::exp(eDn - eMax);
    for (std::size_t n = 0; n < w_.size(); ++n)
      w_[n] *= (n & mask) ? fUp : fDn;
    normalize();
    logNorm_ += eMax;
  }

  /// Weak measurement: outcome m drawn from the exact marginal mixture
  /// sum_n P(n) N(m; sigma_site(n), 1/(gamma*dt)).
  MeasurementRecord measureWeak(int layer, int site, double gammaDt,
                                CounterRng& rng) {
    double m;
    if (gammaDt > 0.0) {
      const double pUp = siteMarginalUp(site);
      const double center = rng.uniform() < pUp ? 1.0 : -1.0;
      m = center + rng.normal() / std::sqrt(gammaDt);
    } else {
      m = rng.normal(); // pure noise convention at gamma*dt = 0
    }
    applyWeak(site, gammaDt, m);
    return {layer, site, m};
  }

private:
  int L_;
  std::vector<double> w_;
  double logNorm_ = 0.0;
};

/// One gate layer followed by its measurement layer, in realization order.
inline void step(ChargeDistribution& dist, const CircuitRealization& r,
                 int gateLayer, CounterRng& rng,
                 std::vector<MeasurementRecord>* records = nullptr) {
  for (const Bond& b : r.gateBonds[gateLayer])
    dist.applyGate(b.i, b.j);
  const double gammaDt = r.spec.gamma * r.spec.dt;
  for (int site : r.measuredSites[gateLayer]) {
    MeasurementRecord rec =
        r.spec.mode == MeasureMode::projective
            ? dist.measureProjective(gateLayer, site, rng)
            : dist.measureWeak(gateLayer, site, gammaDt, rng);
    if (records)
      records->push_back(rec);
  }
}

/// Snapshot schedule in full time steps: snapshots at
/// burnIn + every, burnIn + 2*every, ... (count of them).
struct SnapshotSchedule {
  int burnIn = 0;
  int every = 1;
  int count = 0;

  int requiredDepth() const { return burnIn + every * count; }
  bool due(int stepsDone) const {
    return count > 0 && stepsDone > burnIn && (stepsDone - burnIn) % every == 0 &&
           (stepsDone - burnIn) / every <= count;
  }
};

/// Run one trajectory from the given initial state, invoking
/// onStep(fullStepsDone, dist) after every full time step. Returns the final
/// state.
template <class F>
ChargeDistribution runTrajectorySteps(const CircuitRealization& r,
                                      CounterRng& rng,
                                      ChargeDistribution dist, F&& onStep,
                                      std::vector<MeasurementRecord>* records =
                                          nullptr) {
  for (int t = 0; t < r.spec.depth; ++t) {
    step(dist, r, 2 * t, rng, records);
    step(dist, r, 2 * t + 1, rng, records);
    onStep(t + 1, const_cast<const ChargeDistribution&>(dist));
  }
  return dist;
}

/// Run one trajectory from the uniform (maximally mixed diagonal) initial
/// state, invoking onSnapshot(snapshotIndex, dist) per schedule.
template <class F>
ChargeDistribution runTrajectory(const CircuitRealization& r,
                                 std::uint64_t trajectoryStream,
                                 const SnapshotSchedule& schedule,
                                 F&& onSnapshot,
                                 std::vector<MeasurementRecord>* records =
                                     nullptr) {
  if (r.spec.depth < schedule.requiredDepth())
    throw std::invalid_argument("runTrajectory: depth shorter than schedule");
  CounterRng rng(r.spec.seed, streamId(stream::kOutcome, trajectoryStream));
  return runTrajectorySteps(
      r, rng, ChargeDistribution::uniform(r.spec.L),
      [&](int stepsDone, const ChargeDistribution& d) {
        if (schedule.due(stepsDone))
          onSnapshot((stepsDone - schedule.burnIn) / schedule.every - 1, d);
      },
      records);
}

} // namespace chargesim

#endif // CHARGESIM_DISTRIBUTION_HPP
