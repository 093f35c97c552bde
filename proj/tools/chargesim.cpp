// Command-line front end: run / percolation / hydro / fit / oracle.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "chargesim/experiment.hpp"
#include "chargesim/hydro.hpp"

using nlohmann::json;
using namespace chargesim;

namespace {

json fitToJson(const FitResult& f) {
  return json{{"slope", f.slope},
              {"intercept", f.intercept},
              {"slopeStderr", f.slopeStderr},
              {"xMin", f.xMin},
              {"xMax", f.xMax},
              {"chi2red", f.chi2red}};
}

json stiffnessToJson(const StiffnessEstimate& e) {
  return json{{"rhoS", e.rhoS},
              {"stderr", e.stderrRhoS},
              {"method", e.method == StiffnessMethod::fromVarQ ? "VarQ"
                                                               : "CW"}};
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

std::filesystem::path batchPathFor(const std::filesystem::path& out) {
  std::filesystem::path p = out;
  p.replace_extension();
  return p.string() + "_batches.csv";
}

std::vector<WrapCurve> curvesFromCsv(const std::filesystem::path& path) {
  const CsvTable t = readCsv(path);
  const int cP = t.columnIndex("p");
  const int cL = t.columnIndex("L");
  const int cW = t.columnIndex("P_wrap");
  std::map<int, WrapCurve> byL;
  for (const auto& row : t.rows) {
    const int L = std::stoi(row.at(cL));
    auto& c = byL[L];
    c.L = L;
    c.p.push_back(std::stod(row.at(cP)));
    c.pWrap.push_back(std::stod(row.at(cW)));
  }
  std::vector<WrapCurve> out;
  for (auto& [L, c] : byL)
    out.push_back(std::move(c));
  return out;
}

int runCommand(const SteadyStateConfig& cfg, const std::string& outFile,
               bool force, bool doFit) {
  const std::filesystem::path out = outFile;
  const std::filesystem::path batches = batchPathFor(out);
  if (!force && isCompleteResult(out) && isCompleteResult(batches)) {
    json j{{"command", "run"}, {"skipped", true}, {"out", out.string()}};
    if (doFit) {
      const CsvTable table = readCsv(out);
      const CsvTable batchTable = readCsv(batches);
      SeriesForFits s;
      s.cz = extractSeries(table, "Cz");
      s.cw = extractSeries(table, "CW");
      s.varq = extractSeries(table, "VarQ");
      s.cz.batches = extractBatches(batchTable, "Cz", s.cz.xs);
      s.cw.batches = extractBatches(batchTable, "CW", s.cw.xs);
      s.varq.batches = extractBatches(batchTable, "VarQ", s.varq.xs);
      const StiffnessPoint pt = analyzePoint(cfg.p, cfg.L, s);
      j["fit"] = {{"alpha", fitToJson(pt.alphaFit)},
                  {"alphaWide", fitToJson(pt.alphaFitWide)},
                  {"varq", fitToJson(pt.varqFit)},
                  {"cw", fitToJson(pt.cwFit)},
                  {"rhoSFromVarQ", stiffnessToJson(pt.fromVarQ)},
                  {"rhoSFromCW", stiffnessToJson(pt.fromCW)}};
    }
    emit(j);
    return 0;
  }
  const CorrelatorSet set = runSteadyStatePoint(cfg);
  writeCorrelatorCsv(out, cfg, set);
  writeBatchCsv(batches, cfg, set);
  json j{{"command", "run"},
         {"L", cfg.L},
         {"p", cfg.p},
         {"realizations", cfg.nRealizations},
         {"snapshots", cfg.nSnapshots},
         {"out", out.string()},
         {"batchesOut", batches.string()}};
  if (doFit) {
    const StiffnessPoint pt =
        analyzePoint(cfg.p, cfg.L, SeriesForFits::fromCorrelatorSet(set));
    j["fit"] = {{"alpha", fitToJson(pt.alphaFit)},
                {"alphaWide", fitToJson(pt.alphaFitWide)},
                {"varq", fitToJson(pt.varqFit)},
                {"cw", fitToJson(pt.cwFit)},
                {"rhoSFromVarQ", stiffnessToJson(pt.fromVarQ)},
                {"rhoSFromCW", stiffnessToJson(pt.fromCW)}};
  }
  emit(j);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo simulator and analysis suite for charge dynamics "
               "in symmetric monitored circuits"};
  app.require_subcommand(1);

  // ---- run ----------------------------------------------------------------
  SteadyStateConfig runCfg;
  runCfg.nRealizations = 100;
  runCfg.workers = defaultWorkers();
  std::string runOut = "correlators.csv";
  std::string runMode = "projective";
  bool runForce = false, runFit = false;
  auto* run = app.add_subcommand(
      "run", "Steady-state correlator sweep at one (L, p) point");
  run->add_option("--L", runCfg.L, "number of sites (even)")->required();
  run->add_option("--p", runCfg.p, "measurement rate")->required();
  run->add_option("--seed", runCfg.seed, "master seed");
  run->add_option("--realizations", runCfg.nRealizations,
                  "circuit realizations (batches)");
  run->add_option("--trajectories", runCfg.trajectoriesPerRealization,
                  "trajectories per realization");
  run->add_option("--burn-in", runCfg.burnIn,
                  "burn-in in full steps (default 4L)");
  run->add_option("--snapshot-every", runCfg.snapshotEvery,
                  "steps between snapshots (default L)");
  run->add_option("--snapshots", runCfg.nSnapshots,
                  "snapshots per trajectory");
  run->add_option("--workers", runCfg.workers, "worker threads");
  run->add_option("--mode", runMode, "projective or weak")
      ->check(CLI::IsMember({"projective", "weak"}));
  run->add_option("--gamma", runCfg.gamma, "weak-measurement strength");
  run->add_option("--dt", runCfg.dt, "weak-measurement Trotter step");
  run->add_option("--out", runOut, "output CSV path");
  run->add_flag("--force", runForce, "recompute even if output is complete");
  run->add_flag("--fit", runFit, "print stiffness fits for this point");

  // ---- percolation --------------------------------------------------------
  PercolationSweepConfig percCfg;
  percCfg.Ls = {8, 16, 32};
  percCfg.workers = defaultWorkers();
  std::string percOut = "percolation.csv";
  std::string percRule = "information";
  bool percForce = false, percCollapse = false;
  auto* perc = app.add_subcommand(
      "percolation", "Wrapping-probability sweep over (L, p)");
  perc->add_option("--Ls", percCfg.Ls, "system sizes");
  perc->add_option("--p-grid", percCfg.pGrid, "measurement rates")
      ->expected(-1);
  perc->add_option("--realizations", percCfg.nRealizations,
                   "disorder realizations per point");
  perc->add_option("--depth-factor", percCfg.depthFactor,
                   "depth = factor * L");
  perc->add_option("--seed", percCfg.seed, "master seed");
  perc->add_option("--rule", percRule,
                   "information, propagated or measured")
      ->check(CLI::IsMember({"information", "propagated", "measured"}));
  perc->add_option("--workers", percCfg.workers, "worker threads");
  perc->add_option("--out", percOut, "output CSV path");
  perc->add_flag("--force", percForce, "recompute even if output is complete");
  perc->add_flag("--collapse", percCollapse,
                 "grid-search a nu = 4/3 style scaling collapse");

  // ---- hydro --------------------------------------------------------------
  HydroParams hydroCfg;
  double hydroKMin = 0.01, hydroKMax = 1.0;
  int hydroNK = 20;
  double hydroT = 0.0, hydroDt = 0.01;
  std::string hydroOut = "hydro.csv";
  auto* hydro = app.add_subcommand(
      "hydro", "Structure-factor relaxation: steady state and integration");
  hydro->add_option("--B", hydroCfg.B, "noise coefficient");
  hydro->add_option("--D", hydroCfg.D, "diffusion constant");
  hydro->add_option("--kappa", hydroCfg.kappa, "sharpening coefficient");
  hydro->add_option("--p", hydroCfg.p, "measurement rate")->required();
  hydro->add_option("--k-min", hydroKMin, "smallest wavevector");
  hydro->add_option("--k-max", hydroKMax, "largest wavevector");
  hydro->add_option("--n-k", hydroNK, "log-spaced wavevector count");
  hydro->add_option("--t", hydroT, "integration time (0: steady state only)");
  hydro->add_option("--dt", hydroDt, "integration step");
  hydro->add_option("--out", hydroOut, "output CSV path");

  // ---- fit ----------------------------------------------------------------
  std::string fitIn, fitBatches, fitObservable = "VarQ", fitThresholdCsv;
  double fitXMin = 2.0, fitXMax = 0.0;
  auto* fit = app.add_subcommand(
      "fit", "Window fits and threshold location on saved CSVs");
  fit->add_option("--in", fitIn, "correlator CSV from the run command");
  fit->add_option("--batches", fitBatches,
                  "batch CSV for bootstrap errors");
  fit->add_option("--observable", fitObservable, "Cz, CW or VarQ")
      ->check(CLI::IsMember({"Cz", "CW", "VarQ"}));
  fit->add_option("--xmin", fitXMin, "fit window lower edge");
  fit->add_option("--xmax", fitXMax, "fit window upper edge (0: max x / 2)");
  fit->add_option("--threshold-csv", fitThresholdCsv,
                  "CSV with columns p,rhoS,stderr: locate the 1/pi crossing");

  // ---- oracle -------------------------------------------------------------
  CircuitSpec oracleSpec;
  oracleSpec.L = 4;
  oracleSpec.depth = 2;
  oracleSpec.p = 0.5;
  oracleSpec.seed = 1;
  int oracleSiteA = 0, oracleSiteB = 1;
  long oracleTraj = 20000;
  int oracleWorkers = defaultWorkers();
  auto* oracle = app.add_subcommand(
      "oracle", "Exact trajectory enumeration vs Monte Carlo sampling");
  oracle->add_option("--L", oracleSpec.L, "number of sites (even, small)");
  oracle->add_option("--depth", oracleSpec.depth, "full time steps");
  oracle->add_option("--p", oracleSpec.p, "measurement rate");
  oracle->add_option("--seed", oracleSpec.seed, "realization seed");
  oracle->add_option("--site-a", oracleSiteA, "first probe site");
  oracle->add_option("--site-b", oracleSiteB, "second probe site");
  oracle->add_option("--trajectories", oracleTraj, "Monte Carlo trajectories");
  oracle->add_option("--workers", oracleWorkers, "worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      runCfg.mode =
          runMode == "weak" ? MeasureMode::weak : MeasureMode::projective;
      return runCommand(runCfg, runOut, runForce, runFit);
    }

    if (perc->parsed()) {
      percCfg.rule = percRule == "measured"     ? SharpRule::measuredOnly
                     : percRule == "propagated" ? SharpRule::propagated
                                                : SharpRule::information;
      if (percCfg.pGrid.empty())
        for (double p = 0.20; p < 0.425; p += 0.02)
          percCfg.pGrid.push_back(p);
      std::vector<WrapCurve> curves;
      bool skipped = false;
      if (!percForce && isCompleteResult(percOut)) {
        curves = curvesFromCsv(percOut);
        skipped = true;
      } else {
        curves = percolationSweep(percCfg);
        writePercolationCsv(percOut, percCfg, curves);
      }
      json j{{"command", "percolation"},
             {"rule", percRule},
             {"skipped", skipped},
             {"out", percOut}};
      try {
        j["crossings"] = consecutiveCrossings(curves);
      } catch (const std::exception& e) {
        j["crossings"] = nullptr;
        j["crossingError"] = e.what();
      }
      if (percCollapse) {
        const double pLo = curves.front().p.front();
        const double pHi = curves.front().p.back();
        std::vector<double> pcGrid, nuGrid;
        for (double pc = pLo; pc <= pHi; pc += (pHi - pLo) / 60.0)
          pcGrid.push_back(pc);
        for (double nu = 0.8; nu <= 2.2; nu += 0.025)
          nuGrid.push_back(nu);
        const auto collapse = scalingCollapse(curves, pcGrid, nuGrid);
        j["collapse"] = {{"pc", collapse.pc},
                         {"nu", collapse.nu},
                         {"score", collapse.score}};
      }
      emit(j);
      return 0;
    }

    if (hydro->parsed()) {
      if (hydroNK < 1 || !(hydroKMin > 0.0) || !(hydroKMax >= hydroKMin))
        throw CLI::ValidationError("hydro", "need 0 < k-min <= k-max, n-k >= 1");
      for (int k = 0; k < hydroNK; ++k) {
        const double f = hydroNK == 1 ? 0.0 : double(k) / (hydroNK - 1);
        hydroCfg.kGrid.push_back(
            hydroKMin * std::pow(hydroKMax / hydroKMin, f));
      }
      const auto cStar = steadyState(hydroCfg);
      std::vector<double> cT;
      if (hydroT > 0.0)
        cT = evolve(hydroCfg, std::vector<double>(hydroCfg.kGrid.size(), 0.0),
                    hydroT, hydroDt);
      CsvWriter csv;
      csv.comment("chargesim hydro v" + std::to_string(kCsvSchemaVersion));
      {
        std::ostringstream cfgText;
        cfgText.precision(17);
        cfgText << "B = " << hydroCfg.B << "\nD = " << hydroCfg.D
                << "\nkappa = " << hydroCfg.kappa << "\np = " << hydroCfg.p
                << "\nt = " << hydroT << "\ndt = " << hydroDt << "\n";
        csv.comment(cfgText.str());
      }
      if (cT.empty()) {
        csv.header({"k", "C_steady"});
        for (std::size_t m = 0; m < cStar.size(); ++m)
          csv.row(std::vector<double>{hydroCfg.kGrid[m], cStar[m]});
      } else {
        csv.header({"k", "C_steady", "C_evolved"});
        for (std::size_t m = 0; m < cStar.size(); ++m)
          csv.row(std::vector<double>{hydroCfg.kGrid[m], cStar[m], cT[m]});
      }
      csv.writeFile(hydroOut);
      emit(json{{"command", "hydro"},
                {"p", hydroCfg.p},
                {"modes", hydroCfg.kGrid.size()},
                {"out", hydroOut}});
      return 0;
    }

    if (fit->parsed()) {
      if (!fitThresholdCsv.empty()) {
        const CsvTable t = readCsv(fitThresholdCsv);
        const int cP = t.columnIndex("p");
        const int cR = t.columnIndex("rhoS");
        const int cE = t.columnIndex("stderr");
        std::vector<double> ps, rho, err;
        for (const auto& row : t.rows) {
          ps.push_back(std::stod(row.at(cP)));
          rho.push_back(std::stod(row.at(cR)));
          err.push_back(std::stod(row.at(cE)));
        }
        const auto est = locateThreshold(ps, rho, err);
        emit(json{{"command", "fit"},
                  {"mode", "threshold"},
                  {"pSharp", est.pSharp},
                  {"stderr", est.stderrP}});
        return 0;
      }
      if (fitIn.empty())
        throw CLI::ValidationError("fit", "--in or --threshold-csv required");
      const CsvTable table = readCsv(fitIn);
      SeriesData s = extractSeries(table, fitObservable);
      if (!fitBatches.empty())
        s.batches = extractBatches(readCsv(fitBatches), fitObservable, s.xs);
      const double xMax =
          fitXMax > 0.0
              ? fitXMax
              : std::max(4.0, *std::max_element(s.xs.begin(), s.xs.end()) /
                                  2.0);
      json j{{"command", "fit"},
             {"observable", fitObservable},
             {"in", fitIn},
             {"batches", s.batches.size()}};
      if (fitObservable == "VarQ") {
        const FitResult f = logFit(s.xs, s.means, fitXMin, xMax, s.batches);
        j["fit"] = fitToJson(f);
        j["rhoS"] = stiffnessToJson(stiffnessFromVarQ(f));
      } else {
        const FitResult f =
            powerLawFit(s.xs, s.means, fitXMin, xMax, s.batches);
        j["fit"] = fitToJson(f);
        if (fitObservable == "CW")
          j["rhoS"] = stiffnessToJson(stiffnessFromCW(f));
      }
      emit(j);
      return 0;
    }

    if (oracle->parsed()) {
      const OracleComparison c = runOracleComparison(
          oracleSpec, oracleSiteA, oracleSiteB, oracleTraj, oracleWorkers);
      emit(json{
          {"command", "oracle"},
          {"L", oracleSpec.L},
          {"depth", oracleSpec.depth},
          {"p", oracleSpec.p},
          {"seed", oracleSpec.seed},
          {"leaves", c.leaves},
          {"trajectories", c.trajectories},
          {"exact",
           {{"sigmaA", c.exact.eSigma0},
            {"sigmaAB", c.exact.eSigma01},
            {"prod", c.exact.eProdSigma},
            {"connected", c.exactConnected}}},
          {"mc",
           {{"sigmaA", c.mcSigma0},
            {"sigmaAErr", c.mcSigma0Err},
            {"sigmaAB", c.mcSigma01},
            {"sigmaABErr", c.mcSigma01Err},
            {"prod", c.mcProd},
            {"prodErr", c.mcProdErr},
            {"connected", c.mcConnected},
            {"connectedErr", c.mcConnectedErr}}},
          {"maxSigmaDeviation", c.maxSigmaDeviation()}});
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
