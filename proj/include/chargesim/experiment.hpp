#ifndef CHARGESIM_EXPERIMENT_HPP
#define CHARGESIM_EXPERIMENT_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "chargesim/analysis.hpp"
#include "chargesim/circuit.hpp"
#include "chargesim/distribution.hpp"
#include "chargesim/io.hpp"
#include "chargesim/observables.hpp"
#include "chargesim/oracle.hpp"
#include "chargesim/parallel.hpp"
#include "chargesim/percolation.hpp"

namespace chargesim {

// ---------------------------------------------------------------------------
// Steady-state correlator sweep at one (p, L) point.

struct SteadyStateConfig {
  int L = 0;
  double p = 0.0;
  std::uint64_t seed = 0;
  int nRealizations = 1;
  int trajectoriesPerRealization = 1;
  int burnIn = -1;       // full steps; default 4L
  int snapshotEvery = -1; // default L
  int nSnapshots = 10;
  int workers = 1;
  MeasureMode mode = MeasureMode::projective;
  double gamma = 0.0;
  double dt = 0.0;

  SnapshotSchedule schedule() const {
    SnapshotSchedule s;
    s.burnIn = burnIn >= 0 ? burnIn : 4 * L;
    s.every = snapshotEvery >= 1 ? snapshotEvery : L;
    s.count = nSnapshots;
    return s;
  }

  CircuitSpec specFor(int realization) const {
    CircuitSpec spec;
    spec.L = L;
    spec.p = p;
    spec.depth = schedule().requiredDepth();
    spec.mode = mode;
    spec.gamma = gamma;
    spec.dt = dt;
    spec.seed = deriveSeed(seed, realization);
    return spec;
  }
};

/// Steady-state protocol: discard burn-in, then snapshot every L steps.
/// Realizations are independent work units; batch id = realization index, so
/// the merged result is identical for any worker count.
inline CorrelatorSet runSteadyStatePoint(const SteadyStateConfig& cfg) {
  const SnapshotSchedule schedule = cfg.schedule();
  std::vector<CorrelatorSet> partial(cfg.nRealizations);
  parallelFor(cfg.workers, cfg.nRealizations, [&](std::int64_t k) {
    const CircuitRealization r = realize(cfg.specFor(int(k)));
    CorrelatorSet local(cfg.L);
    for (int traj = 0; traj < cfg.trajectoriesPerRealization; ++traj) {
      runTrajectory(r, traj, schedule,
                    [&](int, const ChargeDistribution& d) {
                      local.accumulate(k, d);
                    });
    }
    partial[k] = std::move(local);
  });
  CorrelatorSet out(cfg.L);
  for (const auto& part : partial)
    out.merge(part);
  return out;
}

inline std::string steadyStateConfigText(const SteadyStateConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << cfg.specFor(0).toConfig();
  os << "nRealizations = " << cfg.nRealizations << "\n"
     << "trajectoriesPerRealization = " << cfg.trajectoriesPerRealization
     << "\n"
     << "burnIn = " << cfg.schedule().burnIn << "\n"
     << "snapshotEvery = " << cfg.schedule().every << "\n"
     << "nSnapshots = " << cfg.nSnapshots << "\n"
     << "masterSeed = " << cfg.seed << "\n";
  return os.str();
}

/// One row per (observable, x-or-ell): estimate, stderr, nSamples.
inline void writeCorrelatorCsv(const std::filesystem::path& path,
                               const SteadyStateConfig& cfg,
                               const CorrelatorSet& set) {
  CsvWriter csv;
  csv.comment("chargesim correlators v" + std::to_string(kCsvSchemaVersion));
  csv.comment(steadyStateConfigText(cfg));
  csv.header({"observable", "x", "estimate", "stderr", "nSamples"});
  auto emit = [&](const ObservableAccumulator& acc, int xOffset) {
    for (std::size_t k = 0; k < acc.numIndices(); ++k)
      csv.row({acc.label(), std::to_string(int(k) + xOffset),
               formatDouble(acc.mean(k)), formatDouble(acc.stderrOfMean(k)),
               std::to_string(acc.count(k))});
  };
  emit(set.cz, 0);
  emit(set.cw, 1);
  emit(set.varq, 1);
  csv.writeFile(path);
}

/// Companion file with per-realization batch means, consumed by the fit
/// command for bootstrap resampling.
inline void writeBatchCsv(const std::filesystem::path& path,
                          const SteadyStateConfig& cfg,
                          const CorrelatorSet& set) {
  CsvWriter csv;
  csv.comment("chargesim correlator batches v" +
              std::to_string(kCsvSchemaVersion));
  csv.comment(steadyStateConfigText(cfg));
  csv.header({"observable", "x", "batch", "mean"});
  auto emit = [&](const ObservableAccumulator& acc, int xOffset) {
    for (std::size_t k = 0; k < acc.numIndices(); ++k) {
      const auto means = acc.batchMeans(k);
      for (std::size_t b = 0; b < means.size(); ++b)
        csv.row({acc.label(), std::to_string(int(k) + xOffset),
                 std::to_string(b), formatDouble(means[b])});
    }
  };
  emit(set.cz, 0);
  emit(set.cw, 1);
  emit(set.varq, 1);
  csv.writeFile(path);
}

/// Estimates for one observable read back from the CSV pair.
struct SeriesData {
  std::vector<double> xs;
  std::vector<double> means;
  std::vector<double> stderrs;
  BatchSeries batches; // empty when no batch file was given
};

inline SeriesData extractSeries(const CsvTable& table,
                                const std::string& observable) {
  SeriesData out;
  const int cObs = table.columnIndex("observable");
  const int cX = table.columnIndex("x");
  const int cEst = table.columnIndex("estimate");
  const int cErr = table.columnIndex("stderr");
  for (const auto& row : table.rows) {
    if (row.at(cObs) != observable)
      continue;
    out.xs.push_back(std::stod(row.at(cX)));
    out.means.push_back(std::stod(row.at(cEst)));
    out.stderrs.push_back(std::stod(row.at(cErr)));
  }
  if (out.xs.empty())
    throw std::runtime_error("extractSeries: no rows for " + observable);
  return out;
}

inline BatchSeries extractBatches(const CsvTable& table,
                                  const std::string& observable,
                                  const std::vector<double>& xs) {
  const int cObs = table.columnIndex("observable");
  const int cX = table.columnIndex("x");
  const int cB = table.columnIndex("batch");
  const int cM = table.columnIndex("mean");
  std::map<long, std::vector<double>> rows;
  for (const auto& row : table.rows) {
    if (row.at(cObs) != observable)
      continue;
    const double x = std::stod(row.at(cX));
    std::size_t xi = xs.size();
    for (std::size_t k = 0; k < xs.size(); ++k)
      if (xs[k] == x)
        xi = k;
    if (xi == xs.size())
      continue;
    auto& r = rows[std::stol(row.at(cB))];
    r.resize(xs.size(), 0.0);
    r[xi] = std::stod(row.at(cM));
  }
  BatchSeries out;
  out.reserve(rows.size());
  for (auto& [b, r] : rows)
    out.push_back(std::move(r));
  return out;
}

// ---------------------------------------------------------------------------
// Stiffness extraction from one correlator set.

struct SeriesForFits {
  SeriesData cz, cw, varq;

  static SeriesForFits fromCorrelatorSet(const CorrelatorSet& set) {
    SeriesForFits s;
    auto fill = [](const ObservableAccumulator& acc, int xOffset) {
      SeriesData d;
      for (std::size_t k = 0; k < acc.numIndices(); ++k) {
        d.xs.push_back(double(int(k) + xOffset));
        d.means.push_back(acc.mean(k));
        d.stderrs.push_back(acc.stderrOfMean(k));
      }
      const std::size_t nB =
          acc.numIndices() ? acc.batchMeans(0).size() : 0;
      d.batches.assign(nB, std::vector<double>(acc.numIndices()));
      for (std::size_t k = 0; k < acc.numIndices(); ++k) {
        const auto bm = acc.batchMeans(k);
        for (std::size_t b = 0; b < bm.size(); ++b)
          d.batches[b][k] = bm[b];
      }
      return d;
    };
    s.cz = fill(set.cz, 0);
    s.cw = fill(set.cw, 1);
    s.varq = fill(set.varq, 1);
    return s;
  }
};

struct StiffnessPoint {
  double p = 0.0;
  FitResult alphaFit;       // |Cz| power law
  FitResult alphaFitWide;   // sensitivity window
  FitResult varqFit;        // Var_q vs log ell
  FitResult cwFit;          // log CW vs log x
  StiffnessEstimate fromVarQ;
  StiffnessEstimate fromCW;
};

/// Default fit window x in [2, L/4]; a wider window is fitted alongside for
/// sensitivity reporting.
inline StiffnessPoint analyzePoint(double p, int L, const SeriesForFits& s) {
  StiffnessPoint out;
  out.p = p;
  const double xMax = std::max(4.0, L / 4.0);
  out.alphaFit = powerLawFit(s.cz.xs, s.cz.means, 2.0, xMax, s.cz.batches);
  out.alphaFitWide =
      powerLawFit(s.cz.xs, s.cz.means, 2.0, xMax + 1.0, s.cz.batches);
  out.varqFit = logFit(s.varq.xs, s.varq.means, 2.0, xMax, s.varq.batches);
  out.cwFit = powerLawFit(s.cw.xs, s.cw.means, 2.0, xMax, s.cw.batches);
  out.fromVarQ = stiffnessFromVarQ(out.varqFit);
  out.fromCW = stiffnessFromCW(out.cwFit);
  return out;
}

// ---------------------------------------------------------------------------
// Oracle comparison: exact enumeration vs Monte Carlo on one realization.

struct OracleComparison {
  EnumeratedMoments exact;
  double mcSigma0 = 0.0, mcSigma0Err = 0.0;
  double mcSigma01 = 0.0, mcSigma01Err = 0.0;
  double mcProd = 0.0, mcProdErr = 0.0;
  double mcConnected = 0.0, mcConnectedErr = 0.0;
  double exactConnected = 0.0;
  std::size_t leaves = 0;
  long trajectories = 0;

  double maxSigmaDeviation() const {
    auto dev = [](double mc, double err, double ex) {
      return err > 0.0 ? std::abs(mc - ex) / err : 0.0;
    };
    double d = dev(mcSigma0, mcSigma0Err, exact.eSigma0);
    d = std::max(d, dev(mcSigma01, mcSigma01Err, exact.eSigma01));
    d = std::max(d, dev(mcConnected, mcConnectedErr, exactConnected));
    return d;
  }
};

inline OracleComparison runOracleComparison(const CircuitSpec& spec, int siteA,
                                            int siteB, long nTrajectories,
                                            int workers = 1) {
  const CircuitRealization r = realize(spec);
  OracleComparison out;
  TrajectoryEnumerator en(r);
  EnumeratedMoments exact;
  en.run(ChargeDistribution::uniform(spec.L),
         [&](double w, const ChargeDistribution& d) {
           const double sa = d.expectSigma(siteA);
           const double sb = d.expectSigma(siteB);
           const double sab = d.expectSigmaPair(siteA, siteB);
           exact.eSigma0 += w * sa;
           exact.eSigma01 += w * sab;
           exact.eProdSigma += w * sa * sb;
           exact.eSigma01Sq += w * sab * sab;
           exact.totalWeight += w;
         });
  out.exact = exact;
  out.exactConnected = exact.eSigma01 - exact.eProdSigma;
  out.leaves = en.leafCount();
  out.trajectories = nTrajectories;

  struct Sums {
    double s0 = 0, s0sq = 0, s01 = 0, s01sq = 0, prod = 0, prodsq = 0,
           conn = 0, connsq = 0;
  };
  const int chunks = std::max(workers, 1);
  const long perChunk = (nTrajectories + chunks - 1) / chunks;
  std::vector<Sums> part(chunks);
  parallelFor(workers, chunks, [&](std::int64_t c) {
    Sums s;
    const long lo = c * perChunk;
    const long hi = std::min(nTrajectories, lo + perChunk);
    for (long t = lo; t < hi; ++t) {
      const ChargeDistribution d =
          runTrajectory(r, std::uint64_t(t), SnapshotSchedule{},
                        [](int, const ChargeDistribution&) {});
      const double sa = d.expectSigma(siteA);
      const double sb = d.expectSigma(siteB);
      const double sab = d.expectSigmaPair(siteA, siteB);
      const double pr = sa * sb;
      s.s0 += sa;
      s.s0sq += sa * sa;
      s.s01 += sab;
      s.s01sq += sab * sab;
      s.prod += pr;
      s.prodsq += pr * pr;
      s.conn += sab - pr;
      s.connsq += (sab - pr) * (sab - pr);
    }
    part[c] = s;
  });
  Sums tot;
  for (const Sums& s : part) {
    tot.s0 += s.s0;
    tot.s0sq += s.s0sq;
    tot.s01 += s.s01;
    tot.s01sq += s.s01sq;
    tot.prod += s.prod;
    tot.prodsq += s.prodsq;
    tot.conn += s.conn;
    tot.connsq += s.connsq;
  }
  const double n = double(nTrajectories);
  auto finish = [n](double sum, double sumsq, double& mean, double& err) {
    mean = sum / n;
    const double var = std::max(sumsq / n - mean * mean, 0.0);
    err = std::sqrt(var / n);
  };
  finish(tot.s0, tot.s0sq, out.mcSigma0, out.mcSigma0Err);
  finish(tot.s01, tot.s01sq, out.mcSigma01, out.mcSigma01Err);
  finish(tot.prod, tot.prodsq, out.mcProd, out.mcProdErr);
  finish(tot.conn, tot.connsq, out.mcConnected, out.mcConnectedErr);
  return out;
}

// ---------------------------------------------------------------------------
// Percolation sweep.

struct PercolationSweepConfig {
  std::vector<int> Ls;
  std::vector<double> pGrid;
  int depthFactor = 2; // depth = depthFactor * L
  int nRealizations = 2000;
  std::uint64_t seed = 0;
  SharpRule rule = SharpRule::propagated;
  int workers = 1;
};

inline std::vector<WrapCurve>
percolationSweep(const PercolationSweepConfig& cfg) {
  const std::size_t nPoints = cfg.Ls.size() * cfg.pGrid.size();
  std::vector<WrapPoint> points(nPoints);
  parallelFor(cfg.workers, std::int64_t(nPoints), [&](std::int64_t idx) {
    const int L = cfg.Ls[idx / cfg.pGrid.size()];
    const double p = cfg.pGrid[idx % cfg.pGrid.size()];
    points[idx] = wrapProbability(p, L, cfg.depthFactor * L,
                                  cfg.nRealizations, cfg.seed, cfg.rule,
                                  std::uint64_t(idx));
  });
  std::vector<WrapCurve> curves;
  for (std::size_t a = 0; a < cfg.Ls.size(); ++a) {
    WrapCurve c;
    c.L = cfg.Ls[a];
    for (std::size_t b = 0; b < cfg.pGrid.size(); ++b) {
      c.p.push_back(cfg.pGrid[b]);
      c.pWrap.push_back(points[a * cfg.pGrid.size() + b].pWrap);
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

inline void writePercolationCsv(const std::filesystem::path& path,
                                const PercolationSweepConfig& cfg,
                                const std::vector<WrapCurve>& curves) {
  CsvWriter csv;
  csv.comment("chargesim percolation v" + std::to_string(kCsvSchemaVersion));
  csv.comment("rule = " + toString(cfg.rule));
  csv.comment("seed = " + std::to_string(cfg.seed));
  csv.header({"p", "L", "depth", "P_wrap", "stderr", "nRealizations"});
  for (const auto& c : curves)
    for (std::size_t k = 0; k < c.p.size(); ++k) {
      const double pw = c.pWrap[k];
      const double se = std::sqrt(
          std::max(pw * (1.0 - pw), 1e-12) / cfg.nRealizations);
      csv.row({formatDouble(c.p[k]), std::to_string(c.L),
               std::to_string(cfg.depthFactor * c.L), formatDouble(pw),
               formatDouble(se), std::to_string(cfg.nRealizations)});
    }
  csv.writeFile(path);
}

/// All pairwise crossings of consecutive-size curves.
inline std::vector<double>
consecutiveCrossings(const std::vector<WrapCurve>& curves) {
  std::vector<double> out;
  for (std::size_t k = 0; k + 1 < curves.size(); ++k)
    out.push_back(curveCrossing(curves[k], curves[k + 1]));
  return out;
}

} // namespace chargesim

#endif // CHARGESIM_EXPERIMENT_HPP
