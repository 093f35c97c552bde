#ifndef CHARGESIM_HYDRO_HPP
#define CHARGESIM_HYDRO_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

namespace chargesim {

/// Parameters of the structure-factor relaxation
///   dC/dt = B k^2 - kappa p C^2 - D k^2 C,
/// one independent scalar ODE per wavevector k.
struct HydroParams {
  double B = 1.0;     // noise coefficient
  double D = 1.0;     // diffusion constant
  double kappa = 1.0; // sharpening-rate coefficient
  double p = 0.0;     // measurement rate
  std::vector<double> kGrid;

  void validate() const {
    if (!(B > 0.0))
      throw std::invalid_argument("HydroParams.B: must be > 0");
    if (!(D > 0.0))
      throw std::invalid_argument("HydroParams.D: must be > 0");
    if (!(kappa > 0.0))
      throw std::invalid_argument("HydroParams.kappa: must be > 0");
    if (!(p >= 0.0))
      throw std::invalid_argument("HydroParams.p: must be >= 0");
    for (std::size_t i = 0; i < kGrid.size(); ++i) {
      if (!(kGrid[i] > 0.0))
        throw std::invalid_argument("HydroParams.kGrid: entries must be > 0");
      if (i > 0 && kGrid[i] <= kGrid[i - 1])
        throw std::invalid_argument("HydroParams.kGrid: must be sorted "
                                    "ascending");
    }
  }
};

/// Closed-form steady state: positive root of
/// kappa p C^2 + D k^2 C - B k^2 = 0; reduces to B/D at p = 0.
inline double steadyState(const HydroParams& params, double k) {
  const double kp = params.kappa * params.p;
  const double dk2 = params.D * k * k;
  if (kp == 0.0)
    return params.B / params.D;
  const double disc = dk2 * dk2 + 4.0 * kp * params.B * k * k;
  return (-dk2 + std::sqrt(disc)) / (2.0 * kp);
}

inline std::vector<double> steadyState(const HydroParams& params) {
  params.validate();
  std::vector<double> out;
  out.reserve(params.kGrid.size());
  for (double k : params.kGrid)
    out.push_back(steadyState(params, k));
  return out;
}

/// Classic fourth-order Runge-Kutta integration of each k mode from C0 for
/// time t with step dt. Guards against instability blow-up.
inline std::vector<double> evolve(const HydroParams& params,
                                  const std::vector<double>& c0, double t,
                                  double dt) {
  params.validate();
  if (c0.size() != params.kGrid.size())
    throw std::invalid_argument("evolve: C0 size mismatch");
  if (!(dt > 0.0) || !(t >= 0.0))
    throw std::invalid_argument("evolve: need dt > 0 and t >= 0");
  std::vector<double> c = c0;
  const long nSteps = std::lround(std::ceil(t / dt));
  for (std::size_t m = 0; m < c.size(); ++m) {
    const double k2 = params.kGrid[m] * params.kGrid[m];
    const double kp = params.kappa * params.p;
    auto f = [&](double x) {
      return params.B * k2 - kp * x * x - params.D * k2 * x;
    };
    const double bound = 10.0 * (std::abs(c0[m]) + steadyState(params,
                                                              params.kGrid[m]));
    double x = c[m];
    for (long s = 0; s < nSteps; ++s) {
      const double k1 = f(x);
      const double k2v = f(x + 0.5 * dt * k1);
      const double k3 = f(x + 0.5 * dt * k2v);
      const double k4 = f(x + dt * k3);
      x += dt / 6.0 * (k1 + 2.0 * k2v + 2.0 * k3 + k4);
      if (!std::isfinite(x) || std::abs(x) > bound)
        throw std::runtime_error("evolve: instability detected (reduce dt)");
    }
    c[m] = x;
  }
  return c;
}

} // namespace chargesim

#endif // CHARGESIM_HYDRO_HPP
