#ifndef CHARGESIM_OBSERVABLES_HPP
#define CHARGESIM_OBSERVABLES_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "chargesim/distribution.hpp"

namespace chargesim {

/// Streaming sums of one batch (one circuit realization).
struct BatchStats {
  double sum = 0.0;
  double sumSq = 0.0;
  std::int64_t n = 0;
};

/// Per-index (separation or interval length) streaming statistics, grouped by
/// batch id so that merges are map unions: commutative, associative, and
/// bit-exact regardless of merge order. Each batch id must be owned by exactly
/// one producer. Standard errors come from the scatter of batch means, i.e.
/// errors are batched over circuit realizations.
class ObservableAccumulator {
public:
  ObservableAccumulator() = default;
  ObservableAccumulator(std::string label, std::size_t nIndex)
      : label_(std::move(label)), nIndex_(nIndex) {}

  const std::string& label() const { return label_; }
  std::size_t numIndices() const { return nIndex_; }
  std::size_t numBatches() const { return batches_.size(); }

  void add(std::int64_t batchId, std::size_t idx, double value) {
    auto& row = batches_[batchId];
    if (row.empty())
      row.resize(nIndex_);
    BatchStats& s = row.at(idx);
    s.sum += value;
    s.sumSq += value * value;
    s.n += 1;
  }

  void merge(const ObservableAccumulator& other) {
    if (other.nIndex_ != nIndex_ || other.label_ != label_)
      throw std::invalid_argument("ObservableAccumulator::merge: mismatched");
    for (const auto& [id, row] : other.batches_) {
      auto [it, inserted] = batches_.emplace(id, row);
      if (!inserted)
        throw std::invalid_argument(
            "ObservableAccumulator::merge: duplicate batch id");
    }
  }

  std::int64_t count(std::size_t idx) const {
    std::int64_t c = 0;
    for (const auto& [id, row] : batches_)
      c += row.at(idx).n;
    return c;
  }

  /// Per-batch means for index idx, in batch-id order.
  std::vector<double> batchMeans(std::size_t idx) const {
    std::vector<double> m;
    m.reserve(batches_.size());
    for (const auto& [id, row] : batches_) {
      const BatchStats& s = row.at(idx);
      if (s.n > 0)
        m.push_back(s.sum / double(s.n));
    }
    return m;
  }

  double mean(std::size_t idx) const {
    double s = 0.0;
    std::int64_t n = 0;
    for (const auto& [id, row] : batches_) {
      s += row.at(idx).sum;
      n += row.at(idx).n;
    }
    if (n == 0)
      throw std::runtime_error("ObservableAccumulator: empty");
    return s / double(n);
  }

  /// Standard error of the mean from batch-to-batch scatter.
  double stderrOfMean(std::size_t idx) const {
    const auto m = batchMeans(idx);
    if (m.size() < 2)
      return std::numeric_limits<double>::infinity();
    double mu = 0.0;
    for (double v : m)
      mu += v;
    mu /= double(m.size());
    double var = 0.0;
    for (double v : m)
      var += (v - mu) * (v - mu);
    var /= double(m.size() - 1);
    return std::sqrt(var / double(m.size()));
  }

private:
  std::string label_;
  std::size_t nIndex_ = 0;
  std::map<std::int64_t, std::vector<BatchStats>> batches_;
};

/// First and second sigma^z moments of one snapshot: m[i] = <sigma_i> and
/// C[i*L+j] = <sigma_i sigma_j>.
struct SnapshotMoments {
  int L = 0;
  std::vector<double> m;
  std::vector<double> C;
};

inline SnapshotMoments computeMoments(const ChargeDistribution& dist) {
  const int L = dist.numSites();
  SnapshotMoments out;
  out.L = L;
  std::vector<double> b(L, 0.0);          // sum w * bit_i
  std::vector<double> bb(L * L, 0.0);     // sum w * bit_i bit_j, i < j
  const auto w = dist.weights();
  int bits[32];
  for (std::size_t n = 0; n < w.size(); ++n) {
    const double wn = w[n];
    if (wn == 0.0)
      continue;
    int k = 0;
    for (std::size_t rest = n; rest; rest &= rest - 1)
      bits[k++] = std::countr_zero(rest);
    for (int a = 0; a < k; ++a) {
      b[bits[a]] += wn;
      for (int c = a + 1; c < k; ++c)
        bb[bits[a] * L + bits[c]] += wn;
    }
  }
  out.m.resize(L);
  for (int i = 0; i < L; ++i)
    out.m[i] = 2.0 * b[i] - 1.0;
  out.C.assign(L * L, 0.0);
  for (int i = 0; i < L; ++i) {
    out.C[i * L + i] = 1.0;
    for (int j = i + 1; j < L; ++j) {
      const double v = 4.0 * bb[i * L + j] - 2.0 * b[i] - 2.0 * b[j] + 1.0;
      out.C[i * L + j] = v;
      out.C[j * L + i] = v;
    }
  }
  return out;
}

struct TwoPointValue {
  double zz = 0.0; // <sigma_x sigma_0>
  double zx = 0.0; // <sigma_x>
  double z0 = 0.0; // <sigma_0>
};

/// Translation-averaged two-point function at separation x (periodic).
inline TwoPointValue twoPoint(const SnapshotMoments& mom, int x) {
  const int L = mom.L;
  if (x < 0 || x >= L)
    throw std::invalid_argument("twoPoint: separation out of range");
  TwoPointValue v;
  for (int i = 0; i < L; ++i) {
    const int j = (i + x) % L;
    v.zz += mom.C[i * L + j];
    v.zx += mom.m[j];
    v.z0 += mom.m[i];
  }
  v.zz /= L;
  v.zx /= L;
  v.z0 /= L;
  return v;
}

inline TwoPointValue twoPoint(const ChargeDistribution& dist, int x) {
  return twoPoint(computeMoments(dist), x);
}

/// Translation-averaged connected correlator
/// avg_i [<sigma_{i+x} sigma_i> - <sigma_{i+x}><sigma_i>].
inline double connectedTwoPoint(const SnapshotMoments& mom, int x) {
  const int L = mom.L;
  double s = 0.0;
  for (int i = 0; i < L; ++i) {
    const int j = (i + x) % L;
    s += mom.C[i * L + j] - mom.m[i] * mom.m[j];
  }
  return s / L;
}

/// Per-base-site string expectations <W_{[i, i+x]}> = <prod_{0<k<x}
/// sigma_{i+k}>, for all L base sites. x >= 1; x = 1 has no interior sites
/// (W = 1).
inline std::vector<double> stringOpPerBase(const ChargeDistribution& dist,
                                           int x) {
  const int L = dist.numSites();
  if (x < 1 || x > L)
    throw std::invalid_argument("stringOp: interval length out of range");
  std::vector<double> out(L, 0.0);
  const auto w = dist.weights();
  for (std::size_t n = 0; n < w.size(); ++n) {
    const double wn = w[n];
    if (wn == 0.0)
      continue;
    for (int i = 0; i < L; ++i) {
      double prod = 1.0;
      for (int k = 1; k < x; ++k)
        if (!(n >> ((i + k) % L) & 1))
          prod = -prod;
      out[i] += wn * prod;
    }
  }
  return out;
}

/// Translation-averaged <W_{[0,x]}>.
inline double stringOp(const ChargeDistribution& dist, int x) {
  const auto per = stringOpPerBase(dist, x);
  double s = 0.0;
  for (double v : per)
    s += v;
  return s / double(per.size());
}

/// Variance of the charge in an interval of ell consecutive sites, under the
/// trajectory state, translation-averaged over base sites.
inline double intervalVariance(const SnapshotMoments& mom, int ell) {
  const int L = mom.L;
  if (ell < 1 || ell > L)
    throw std::invalid_argument("intervalVariance: length out of range");
  double s = 0.0;
  for (int base = 0; base < L; ++base) {
    double v = 0.0;
    for (int a = 0; a < ell; ++a) {
      const int i = (base + a) % L;
      for (int b = 0; b < ell; ++b) {
        const int j = (base + b) % L;
        v += mom.C[i * L + j] - mom.m[i] * mom.m[j];
      }
    }
    s += v;
  }
  return s / L;
}

inline double intervalVariance(const ChargeDistribution& dist, int ell) {
  return intervalVariance(computeMoments(dist), ell);
}

/// Correlator estimates with standard errors, indexed by separation (Cz, CW)
/// or interval length (VarQ). Index k of cz holds separation x = k; index k of
/// cw and varq holds x = k+1 resp. ell = k+1.
struct CorrelatorSet {
  int L = 0;
  ObservableAccumulator cz;   // E[<s_x s_0> - <s_x><s_0>], x in [0, L/2]
  ObservableAccumulator cw;   // E[<W_{[0,x]}>^2], x in [1, L/2]
  ObservableAccumulator varq; // Var_q(ell), ell in [1, L/2]

  explicit CorrelatorSet(int L_ = 0)
      : L(L_), cz("Cz", L_ / 2 + 1), cw("CW", L_ / 2), varq("VarQ", L_ / 2) {}

  /// Fold one snapshot of one trajectory into the batch batchId.
  void accumulate(std::int64_t batchId, const ChargeDistribution& dist) {
    const SnapshotMoments mom = computeMoments(dist);
    for (int x = 0; x <= L / 2; ++x)
      cz.add(batchId, x, connectedTwoPoint(mom, x));
    for (int x = 1; x <= L / 2; ++x) {
      const auto per = stringOpPerBase(dist, x);
      double sq = 0.0;
      for (double v : per)
        sq += v * v;
      cw.add(batchId, x - 1, sq / double(per.size()));
    }
    for (int ell = 1; ell <= L / 2; ++ell)
      varq.add(batchId, ell - 1, intervalVariance(mom, ell));
  }

  void merge(const CorrelatorSet& other) {
    cz.merge(other.cz);
    cw.merge(other.cw);
    varq.merge(other.varq);
  }
};

/// Per-step total-charge variance of one trajectory started from a two-sector
/// mixture, and the derived sharpening time (first step with variance below
/// threshold; -1 if never sharp).
struct SharpeningSeries {
  std::vector<double> varQ; // index = full steps done - 1
  int sharpeningTime = -1;
};

inline SharpeningSeries sharpeningDiagnostics(const CircuitRealization& r,
                                              std::uint64_t trajectoryStream,
                                              int nUp1, int nUp2, double pMix,
                                              double threshold = 0.01) {
  SharpeningSeries out;
  CounterRng rng(r.spec.seed, streamId(stream::kOutcome, trajectoryStream));
  runTrajectorySteps(
      r, rng, ChargeDistribution::twoSector(r.spec.L, nUp1, nUp2, pMix),
      [&](int stepsDone, const ChargeDistribution& d) {
        const double v = d.totalChargeVariance();
        out.varQ.push_back(v);
        if (out.sharpeningTime < 0 && v < threshold)
          out.sharpeningTime = stepsDone;
      });
  return out;
}

} // namespace chargesim

#endif // CHARGESIM_OBSERVABLES_HPP
