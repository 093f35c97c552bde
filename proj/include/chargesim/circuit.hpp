#ifndef CHARGESIM_CIRCUIT_HPP
#define CHARGESIM_CIRCUIT_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "chargesim/rng.hpp"

namespace chargesim {

enum class MeasureMode { projective, weak };

inline std::string toString(MeasureMode m) {
  return m == MeasureMode::projective ? "projective" : "weak";
}

/// Brick-wall circuit parameters. One full time step is: even gate layer,
/// measurement layer, odd gate layer, measurement layer. Spatial boundary is
/// periodic.
struct CircuitSpec {
  int L = 0;      // site count, even
  int depth = 0;  // full time steps
  double p = 0.0; // per-site, per-measurement-layer measurement probability
  MeasureMode mode = MeasureMode::projective;
  double gamma = 0.0; // weak-measurement strength (weak mode)
  double dt = 0.0;    // Trotter step (weak mode)
  std::uint64_t seed = 0;

  void validate() const {
    if (L < 2 || L % 2 != 0)
      throw std::invalid_argument("CircuitSpec.L: must be even and >= 2");
    if (depth < 1)
      throw std::invalid_argument("CircuitSpec.depth: must be >= 1");
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("CircuitSpec.p: must be in [0,1]");
    if (mode == MeasureMode::weak) {
      if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw std::invalid_argument(
            "CircuitSpec.gamma: must be finite and positive in weak mode");
      if (!(dt > 0.0) || !std::isfinite(dt))
        throw std::invalid_argument(
            "CircuitSpec.dt: must be finite and positive in weak mode");
    }
  }

  int gateLayers() const { return 2 * depth; }

  /// Human-readable key=value form, echoed into output file headers.
  std::string toConfig() const {
    std::ostringstream os;
    os.precision(17);
    os << "L = " << L << "\n"
       << "depth = " << depth << "\n"
       << "p = " << p << "\n"
       << "mode = " << toString(mode) << "\n"
       << "gamma = " << gamma << "\n"
       << "dt = " << dt << "\n"
       << "seed = " << seed << "\n"
       << "boundary = periodic\n";
    return os.str();
  }

  static CircuitSpec fromConfig(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos)
        continue;
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        auto e = s.find_last_not_of(" \t\r");
        s.erase(e == std::string::npos ? 0 : e + 1);
        return s;
      };
      kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    CircuitSpec spec;
    spec.L = std::stoi(kv.at("L"));
    spec.depth = std::stoi(kv.at("depth"));
    spec.p = std::stod(kv.at("p"));
    spec.mode = kv.at("mode") == "weak" ? MeasureMode::weak
                                        : MeasureMode::projective;
    spec.gamma = std::stod(kv.at("gamma"));
    spec.dt = std::stod(kv.at("dt"));
    spec.seed = std::stoull(kv.at("seed"));
    return spec;
  }
};

struct Bond {
  int i = 0;
  int j = 0; // j = (i+1) mod L
  bool operator==(const Bond&) const = default;
};

/// Fully seed-determined layout of one disorder realization: gate bonds per
/// layer and the sites measured after each gate layer. Immutable after
/// construction; safe to share read-only across workers.
struct CircuitRealization {
  CircuitSpec spec;
  std::vector<std::vector<Bond>> gateBonds;     // [gateLayers()][L/2]
  std::vector<std::vector<int>> measuredSites;  // [gateLayers()][...]
};

inline std::vector<Bond> layerBonds(int L, int layer) {
  std::vector<Bond> bonds;
  bonds.reserve(L / 2);
  const int start = layer % 2; // even layers pair (0,1),(2,3),...; odd wrap
  for (int i = start; i < L + start; i += 2)
    bonds.push_back({i % L, (i + 1) % L});
  return bonds;
}

/// Deterministic function of spec.seed. Measurement placements for layer g
/// come from the stream (seed, placement:g) so realizations are reproducible
/// independent of evaluation order.
inline CircuitRealization realize(const CircuitSpec& spec) {
  spec.validate();
  CircuitRealization r;
  r.spec = spec;
  const int layers = spec.gateLayers();
  r.gateBonds.reserve(layers);
  r.measuredSites.reserve(layers);
  for (int g = 0; g < layers; ++g) {
    r.gateBonds.push_back(layerBonds(spec.L, g));
    CounterRng rng(spec.seed, streamId(stream::kPlacement, g));
    std::vector<int> sites;
    for (int i = 0; i < spec.L; ++i)
      if (rng.bernoulli(spec.p))
        sites.push_back(i);
    r.measuredSites.push_back(std::move(sites));
  }
  return r;
}

} // namespace chargesim

#endif // CHARGESIM_CIRCUIT_HPP
