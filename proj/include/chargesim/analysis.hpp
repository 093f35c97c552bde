#ifndef CHARGESIM_ANALYSIS_HPP
#define CHARGESIM_ANALYSIS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "chargesim/rng.hpp"

namespace chargesim {

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double slopeStderr = 0.0; // bootstrap over batches when available
  double xMin = 0.0;
  double xMax = 0.0;
  double chi2red = 0.0;
};

namespace detail {

struct LineFit {
  double slope, intercept;
};

inline LineFit leastSquares(const std::vector<double>& x,
                            const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  if (det == 0.0)
    throw std::runtime_error("leastSquares: degenerate abscissa");
  return {(n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det};
}

} // namespace detail

/// Per-batch y-series: batchY[b][k] is the batch-b mean of point k. Used for
/// bootstrap resampling over circuit-realization batches (1000 resamples).
using BatchSeries = std::vector<std::vector<double>>;

namespace detail {

/// Fit after an optional transform of (x, mean-y); bootstrap over batches.
template <class TransformX, class TransformY>
FitResult windowedFit(const std::vector<double>& xs,
                      const std::vector<double>& ys, double xMin, double xMax,
                      const BatchSeries& batches, TransformX&& tx,
                      TransformY&& ty, int nResamples = 1000,
                      std::uint64_t bootSeed = 20240901) {
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < xs.size(); ++k)
    if (xs[k] >= xMin && xs[k] <= xMax)
      keep.push_back(k);
  if (keep.size() < 3)
    throw std::invalid_argument("fit: window holds fewer than 3 points");
  auto buildXY = [&](const std::vector<double>& yRow, std::vector<double>& X,
                     std::vector<double>& Y) {
    X.clear();
    Y.clear();
    for (std::size_t k : keep) {
      const double yv = ty(yRow[k]);
      if (!std::isfinite(yv))
        throw std::invalid_argument(
            "fit: non-positive or non-finite value in window");
      X.push_back(tx(xs[k]));
      Y.push_back(yv);
    }
  };
  std::vector<double> X, Y;
  buildXY(ys, X, Y);
  const auto base = leastSquares(X, Y);
  FitResult out;
  out.slope = base.slope;
  out.intercept = base.intercept;
  out.xMin = xMin;
  out.xMax = xMax;
  // residual-based reduced chi^2 (unit weights)
  double ss = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double r = Y[i] - (base.slope * X[i] + base.intercept);
    ss += r * r;
  }
  out.chi2red = X.size() > 2 ? ss / double(X.size() - 2) : 0.0;
  if (batches.size() >= 2) {
    CounterRng rng(bootSeed, streamId(stream::kBootstrap));
    const std::size_t nB = batches.size();
    std::vector<double> slopes;
    slopes.reserve(nResamples);
    std::vector<double> yMean(xs.size());
    for (int rIdx = 0; rIdx < nResamples; ++rIdx) {
      std::fill(yMean.begin(), yMean.end(), 0.0);
      for (std::size_t b = 0; b < nB; ++b) {
        const auto& row = batches[rng.below(nB)];
        for (std::size_t k = 0; k < yMean.size(); ++k)
          yMean[k] += row[k];
      }
      for (double& v : yMean)
        v /= double(nB);
      try {
        buildXY(yMean, X, Y);
        slopes.push_back(leastSquares(X, Y).slope);
      } catch (const std::invalid_argument&) {
        // resample produced a non-positive value inside the window; skip
      }
    }
    if (slopes.size() >= 2) {
      double mu = 0.0;
      for (double v : slopes)
        mu += v;
      mu /= double(slopes.size());
      double var = 0.0;
      for (double v : slopes)
        var += (v - mu) * (v - mu);
      out.slopeStderr = std::sqrt(var / double(slopes.size() - 1));
    }
  }
  return out;
}

} // namespace detail

/// Least squares on (log x, log |y|) over the window. All y in the window
/// must be nonzero; the sign convention is handled upstream (|Cz| is fitted,
/// the sign recorded separately).
inline FitResult powerLawFit(const std::vector<double>& xs,
                             const std::vector<double>& ys, double xMin,
                             double xMax, const BatchSeries& batches = {}) {
  return detail::windowedFit(
      xs, ys, xMin, xMax, batches, [](double x) { return std::log(x); },
      [](double y) {
        const double a = std::abs(y);
        return a > 0.0 ? std::log(a) : std::numeric_limits<double>::quiet_NaN();
      });
}

/// Least squares on (log x, y): slope s of Var_q ~ s log(ell).
inline FitResult logFit(const std::vector<double>& xs,
                        const std::vector<double>& ys, double xMin,
                        double xMax, const BatchSeries& batches = {}) {
  return detail::windowedFit(
      xs, ys, xMin, xMax, batches, [](double x) { return std::log(x); },
      [](double y) { return y; });
}

enum class StiffnessMethod { fromVarQ, fromCW };

struct StiffnessEstimate {
  double rhoS = 0.0;
  double stderrRhoS = 0.0;
  StiffnessMethod method = StiffnessMethod::fromVarQ;
};

/// rho_s from the Var_q log slope: Var_q(ell) ~ (8 rho_s / pi) log ell.
inline StiffnessEstimate stiffnessFromVarQ(const FitResult& fit) {
  StiffnessEstimate e;
  e.method = StiffnessMethod::fromVarQ;
  e.rhoS = std::numbers::pi * fit.slope / 8.0;
  e.stderrRhoS = std::numbers::pi * fit.slopeStderr / 8.0;
  return e;
}

/// rho_s from the string-correlator decay: C_W(x) ~ x^{-2 pi rho_s}.
inline StiffnessEstimate stiffnessFromCW(const FitResult& fit) {
  StiffnessEstimate e;
  e.method = StiffnessMethod::fromCW;
  e.rhoS = -fit.slope / (2.0 * std::numbers::pi);
  e.stderrRhoS = fit.slopeStderr / (2.0 * std::numbers::pi);
  return e;
}

struct ThresholdEstimate {
  double pSharp = 0.0;
  double stderrP = 0.0;
};

/// Linear-interpolated crossing of rho_s(p) with the critical value 1/pi.
/// Requires rho_s monotone decreasing over the scanned range and an actual
/// crossing; refuses to extrapolate. The error is propagated by Gaussian
/// resampling of the rho_s values.
inline ThresholdEstimate locateThreshold(const std::vector<double>& ps,
                                         const std::vector<double>& rhoS,
                                         const std::vector<double>& rhoStderr =
                                             {},
                                         int nResamples = 1000,
                                         std::uint64_t bootSeed = 20240902) {
  if (ps.size() != rhoS.size() || ps.size() < 2)
    throw std::invalid_argument("locateThreshold: need >= 2 points");
  for (std::size_t k = 0; k + 1 < rhoS.size(); ++k)
    if (rhoS[k + 1] >= rhoS[k])
      throw std::runtime_error(
          "locateThreshold: rho_s(p) not monotone decreasing");
  const double target = 1.0 / std::numbers::pi;
  auto crossing = [&](const std::vector<double>& r) -> double {
    for (std::size_t k = 0; k + 1 < r.size(); ++k) {
      if (r[k] >= target && r[k + 1] < target) {
        const double f = (r[k] - target) / (r[k] - r[k + 1]);
        return ps[k] + f * (ps[k + 1] - ps[k]);
      }
    }
    throw std::runtime_error("locateThreshold: no crossing of 1/pi in range");
  };
  ThresholdEstimate out;
  out.pSharp = crossing(rhoS);
  if (!rhoStderr.empty()) {
    if (rhoStderr.size() != rhoS.size())
      throw std::invalid_argument("locateThreshold: stderr size mismatch");
    CounterRng rng(bootSeed, streamId(stream::kBootstrap, 1));
    std::vector<double> sample(rhoS.size());
    std::vector<double> hits;
    hits.reserve(nResamples);
    for (int i = 0; i < nResamples; ++i) {
      for (std::size_t k = 0; k < rhoS.size(); ++k)
        sample[k] = rhoS[k] + rhoStderr[k] * rng.normal();
      try {
        hits.push_back(crossing(sample));
      } catch (const std::runtime_error&) {
        // perturbed curve missed the crossing; skip
      }
    }
    if (hits.size() >= 2) {
      double mu = 0.0;
      for (double v : hits)
        mu += v;
      mu /= double(hits.size());
      double var = 0.0;
      for (double v : hits)
        var += (v - mu) * (v - mu);
      out.stderrP = std::sqrt(var / double(hits.size() - 1));
    }
  }
  return out;
}

} // namespace chargesim

#endif // CHARGESIM_ANALYSIS_HPP
