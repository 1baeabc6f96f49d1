#pragma once
// The experiment registry behind the CLI. Each experiment parses its config
// sections strictly (unread keys are errors), runs deterministically from a
// base seed, and writes CSV/JSON artifacts plus a manifest through
// ArtifactWriter. verify_experiment re-derives everything that is cheaply
// recomputable (manifest hashes, analytic rows, fits, order statistics) and
// names the first offending file or row.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "varcurv/config.hpp"
#include "varcurv/es.hpp"
#include "varcurv/io.hpp"
#include "varcurv/landscape.hpp"
#include "varcurv/lyapunov.hpp"
#include "varcurv/metastability.hpp"
#include "varcurv/ou.hpp"
#include "varcurv/parallel.hpp"
#include "varcurv/probes.hpp"
#include "varcurv/slq.hpp"
#include "varcurv/spectroscopy.hpp"
#include "varcurv/stats.hpp"
#include "varcurv/stochastics.hpp"

namespace varcurv {

struct RunOptions {
  int threads = 1;
  std::optional<std::string> output_root;
};

struct ExperimentInfo {
  const char* name;
  const char* summary;
};

inline const std::vector<ExperimentInfo>& experiment_catalog() {
  static const std::vector<ExperimentInfo> catalog = {
      {"es_run",
       "stochastic ascent trajectories on a configurable landscape "
       "(the default smoke experiment)"},
      {"ou_compare",
       "noisy ascent on a quadratic against the closed-form reward curve"},
      {"spectroscopy",
       "analytic plateau-deficit-vs-kappa curves and their slope fits"},
      {"clss",
       "simulated local slope spectroscopy with locality/settling gates"},
      {"slq_metrics",
       "stochastic Lanczos quadrature spectral-shape metrics"},
      {"double_well",
       "metastable hopping statistics against the escape-time prediction"},
      {"best_of_n",
       "best-of-N perturbation accessibility summary with exact order "
       "statistics"},
  };
  return catalog;
}

struct ExperimentOutcome {
  std::string experiment;
  std::filesystem::path output_dir;
  nlohmann::json resolved_config;
  nlohmann::json summary;
};

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> checks;

  void pass(const std::string& what) { checks.push_back("ok: " + what); }
  void fail(const std::string& what) {
    ok = false;
    checks.push_back("FAIL: " + what);
  }
  void require(bool condition, const std::string& what) {
    if (condition)
      pass(what);
    else
      fail(what);
  }
};

namespace detail {

// Reads config keys through a KeyCursor while echoing the resolved value
// (explicit or default) into a parallel JSON tree.
class Resolver {
 public:
  Resolver(KeyCursor cursor, nlohmann::json& out)
      : cur_(std::move(cursor)), out_(&out) {}

  bool has(const std::string& key) const { return cur_.has(key); }

  Resolver section(const std::string& key) {
    nlohmann::json& child = (*out_)[key];
    if (!child.is_object()) child = nlohmann::json::object();
    return Resolver(cur_.child(key), child);
  }

  double number(const std::string& key, double fallback) {
    const double v = cur_.number(key, fallback);
    (*out_)[key] = v;
    return v;
  }

  int integer(const std::string& key, int fallback) {
    const int v = cur_.integer(key, fallback);
    (*out_)[key] = v;
    return v;
  }

  long long integer64(const std::string& key, long long fallback) {
    const long long v = cur_.integer64(key, fallback);
    (*out_)[key] = v;
    return v;
  }

  bool boolean(const std::string& key, bool fallback) {
    const bool v = cur_.boolean(key, fallback);
    (*out_)[key] = v;
    return v;
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const std::string v = cur_.text(key, fallback);
    (*out_)[key] = v;
    return v;
  }

  std::vector<double> number_list(const std::string& key,
                                  std::vector<double> fallback) {
    const std::vector<double> v = cur_.number_list(key, std::move(fallback));
    (*out_)[key] = v;
    return v;
  }

  std::vector<int> integer_list(const std::string& key,
                                std::vector<int> fallback) {
    const std::vector<int> v = cur_.integer_list(key, std::move(fallback));
    (*out_)[key] = v;
    return v;
  }

 private:
  KeyCursor cur_;
  nlohmann::json* out_;
};

struct LandscapeChoice {
  std::string kind;
  int dimension = 0;
  std::optional<QuadraticLandscape> quadratic;
  std::optional<DoubleWellLandscape> well;

  const QuadraticLandscape& require_quadratic() const {
    if (!quadratic)
      throw ConfigError("this experiment needs a quadratic landscape "
                        "(landscape.kind two_block or quadratic), got '" +
                        kind + "'");
    return *quadratic;
  }

  const DoubleWellLandscape& require_well() const {
    if (!well)
      throw ConfigError("this experiment needs landscape.kind double_well, "
                        "got '" + kind + "'");
    return *well;
  }

  Objective objective(double noise_sd = 0.0) const {
    return quadratic ? quadratic->objective(noise_sd)
                     : well->objective(noise_sd);
  }
};

inline LandscapeChoice parse_landscape(Resolver& top,
                                       const std::string& default_kind) {
  Resolver land = top.section("landscape");
  LandscapeChoice choice;
  choice.kind = land.text("kind", default_kind);
  if (choice.kind == "two_block") {
    TwoBlockSpec spec;
    spec.dimension = land.integer("dimension", 200);
    spec.stiff_count = land.integer("stiff_count", 10);
    spec.lambda_hi = land.number("lambda_hi", 1.0);
    spec.lambda_lo = land.number("lambda_lo", 0.05);
    choice.quadratic = make_two_block(spec);
    choice.dimension = spec.dimension;
  } else if (choice.kind == "quadratic") {
    const std::vector<double> eigs =
        land.number_list("eigenvalues", {1.0, 0.05});
    const double peak = land.number("peak", 1.0);
    choice.quadratic = QuadraticLandscape(Spectrum(eigs), peak);
    choice.dimension = static_cast<int>(eigs.size());
  } else if (choice.kind == "double_well") {
    const double quartic = land.number("quartic_coeff", 1.0);
    const double half_sep = land.number("half_separation", 1.0);
    choice.well = DoubleWellLandscape(quartic, half_sep);
    choice.dimension = 1;
  } else {
    throw ConfigError("unknown landscape.kind '" + choice.kind +
                      "' (two_block, quadratic, double_well)");
  }
  return choice;
}

inline Eigen::VectorXd parse_init(Resolver& top, int dimension,
                                  const std::string& default_kind,
                                  double default_displacement = 1.0) {
  Resolver init = top.section("init");
  const std::string kind = init.text("kind", default_kind);
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(dimension);
  if (kind == "zeros") {
    // stay at the origin
  } else if (kind == "first_mode") {
    const double displacement =
        init.number("displacement", default_displacement);
    if (dimension < 1) throw ConfigError("init: zero-dimensional landscape");
    x0[0] = displacement;
  } else if (kind == "explicit") {
    const std::vector<double> values = init.number_list("values", {});
    if (static_cast<int>(values.size()) != dimension)
      throw ConfigError("init.values has " + std::to_string(values.size()) +
                        " entries for a landscape of dimension " +
                        std::to_string(dimension));
    for (int i = 0; i < dimension; ++i)
      x0[i] = values[static_cast<size_t>(i)];
  } else {
    throw ConfigError("unknown init.kind '" + kind +
                      "' (zeros, first_mode, explicit)");
  }
  return x0;
}

inline ESConfig parse_es(Resolver& top, const ESConfig& defaults) {
  Resolver es = top.section("es");
  ESConfig out;
  out.step_size = es.number("step_size", defaults.step_size);
  out.sigma = es.number("sigma", defaults.sigma);
  out.population = es.integer("population", defaults.population);
  out.horizon = es.integer("horizon", defaults.horizon);
  out.group_size = es.integer("group_size", defaults.group_size);
  out.antithetic = es.boolean("antithetic", defaults.antithetic);
  out.baseline_subtract =
      es.boolean("baseline_subtract", defaults.baseline_subtract);
  return out;
}

struct RunContext {
  std::uint64_t seed = 0;
  int threads = 1;
};

inline std::string cell(double v) { return format_double(v); }
inline std::string cell(int v) { return std::to_string(v); }
inline std::string cell(std::uint64_t v) { return std::to_string(v); }

inline bool close_to(double a, double b, double tol) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

inline std::string padded(int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, value);
  return std::string(buf);
}

// ---------------------------------------------------------------- es_run --

struct EsRunParams {
  LandscapeChoice landscape;
  Eigen::VectorXd x0;
  ESConfig es;
  std::string dynamics;  // sampled | noisy_ascent
  int replicates = 1;
};

inline EsRunParams parse_es_run(Resolver& top) {
  EsRunParams p;
  p.landscape = parse_landscape(top, "two_block");
  p.x0 = parse_init(top, p.landscape.dimension, "first_mode");
  ESConfig defaults;
  defaults.step_size = 0.1;
  defaults.sigma = 0.1;
  defaults.population = 16;
  defaults.horizon = 300;
  // Sampled ES on a wide landscape needs variance reduction to stay
  // bounded at these defaults; both switches stay user-overridable.
  defaults.antithetic = true;
  defaults.baseline_subtract = true;
  p.es = parse_es(top, defaults);
  Resolver run = top.section("run");
  p.dynamics = run.text("dynamics", "sampled");
  if (p.dynamics != "sampled" && p.dynamics != "noisy_ascent")
    throw ConfigError("run.dynamics must be sampled or noisy_ascent");
  p.replicates = run.integer("replicates", 1);
  if (p.replicates < 1) throw ConfigError("run.replicates must be >= 1");
  p.es.validate();
  return p;
}

inline Trajectory run_one_trajectory(const EsRunParams& p,
                                     const StreamKey& key) {
  if (p.dynamics == "sampled")
    return run_es(p.landscape.objective(), p.x0, p.es, key);
  if (p.landscape.quadratic)
    return run_noisy_ascent(*p.landscape.quadratic, p.x0, p.es, key);
  const DoubleWellLandscape& well = p.landscape.require_well();
  return run_noisy_ascent(
      [&well](const Eigen::VectorXd& x) { return well.reward_gradient(x); },
      [&well](const Eigen::VectorXd& x) { return well.reward(x); }, p.x0,
      p.es, key);
}

inline std::string trajectory_name(int replicate) {
  return "trajectory_" + padded(replicate, 4) + ".csv";
}

inline nlohmann::json execute_es_run(const EsRunParams& p,
                                     const RunContext& ctx,
                                     ArtifactWriter& out) {
  const StreamKey root(ctx.seed);
  std::vector<Trajectory> runs(static_cast<size_t>(p.replicates));
  parallel_for(static_cast<size_t>(p.replicates), ctx.threads,
               [&](std::size_t r) {
                 runs[r] = run_one_trajectory(p, root.child("replicate", r));
               });

  RunningMoments finals;
  for (int r = 0; r < p.replicates; ++r) {
    const Trajectory& traj = runs[static_cast<size_t>(r)];
    Csv csv;
    csv.columns = {"iteration", "reward", "grad_norm"};
    for (size_t t = 0; t < traj.rewards.size(); ++t)
      csv.rows.push_back({cell(static_cast<int>(t)), cell(traj.rewards[t]),
                          cell(traj.grad_norms[t])});
    out.write_csv(trajectory_name(r), csv);
    finals.add(traj.rewards.back());
  }

  nlohmann::json summary;
  summary["replicates"] = p.replicates;
  summary["horizon"] = p.es.horizon;
  summary["dynamics"] = p.dynamics;
  summary["initial_reward"] = runs.front().rewards.front();
  summary["final_reward_mean"] = finals.mean();
  if (p.replicates > 1)
    summary["final_reward_se"] = finals.standard_error();
  out.write_json("summary.json", summary);
  return summary;
}

inline void verify_es_run(const EsRunParams& p,
                          const std::filesystem::path& dir,
                          VerifyReport& report) {
  for (int r = 0; r < p.replicates; ++r) {
    const std::string name = trajectory_name(r);
    const Csv csv = read_csv(dir / name);
    if (csv.columns != std::vector<std::string>{"iteration", "reward",
                                                "grad_norm"}) {
      report.fail(name + ": unexpected columns");
      continue;
    }
    if (static_cast<int>(csv.rows.size()) != p.es.horizon + 1) {
      report.fail(name + ": expected " + std::to_string(p.es.horizon + 1) +
                  " rows, found " + std::to_string(csv.rows.size()));
      continue;
    }
    bool clean = true;
    for (size_t i = 0; i < csv.rows.size(); ++i) {
      const auto& row = csv.rows[i];
      if (parse_double(row[0]) != static_cast<double>(i)) {
        report.fail(name + " row " + std::to_string(i) +
                    ": iteration column out of order");
        clean = false;
        break;
      }
      if (!std::isfinite(parse_double(row[1]))) {
        report.fail(name + " row " + std::to_string(i) +
                    ": non-finite reward");
        clean = false;
        break;
      }
    }
    if (clean) report.pass(name + ": contiguous iterations, finite rewards");
  }
}

// ------------------------------------------------------------ ou_compare --

struct OuCompareParams {
  LandscapeChoice landscape;
  Eigen::VectorXd x0;
  ESConfig es;
  int replicates = 200;
  int tail_window = 50;
  bool store_modes = false;
};

inline OuCompareParams parse_ou_compare(Resolver& top) {
  OuCompareParams p;
  p.landscape = parse_landscape(top, "quadratic");
  p.landscape.require_quadratic();
  p.x0 = parse_init(top, p.landscape.dimension, "first_mode");
  ESConfig defaults;
  defaults.step_size = 0.1;
  defaults.sigma = 1.0;
  defaults.population = 10;
  defaults.horizon = 300;
  p.es = parse_es(top, defaults);
  p.es.validate();
  Resolver ou = top.section("ou");
  p.replicates = ou.integer("replicates", 200);
  if (p.replicates < 2) throw ConfigError("ou.replicates must be >= 2");
  p.tail_window = ou.integer("tail_window", 50);
  if (p.tail_window < 1 || p.tail_window > p.es.horizon)
    throw ConfigError("ou.tail_window must lie in [1, es.horizon]");
  p.store_modes = ou.boolean("store_modes", p.landscape.dimension <= 16);
  return p;
}

inline OUPrediction ou_prediction_of(const OuCompareParams& p) {
  const QuadraticLandscape& quad = p.landscape.require_quadratic();
  return ou_trajectory(quad.spectrum(), quad.to_modes(p.x0), p.es.step_size,
                       p.es.sigma, p.es.population, p.es.horizon,
                       p.store_modes);
}

inline nlohmann::json execute_ou_compare(const OuCompareParams& p,
                                         const RunContext& ctx,
                                         ArtifactWriter& out) {
  const QuadraticLandscape& quad = p.landscape.require_quadratic();
  const OUPrediction pred = ou_prediction_of(p);

  const StreamKey root(ctx.seed);
  const int points = p.es.horizon + 1;
  std::vector<std::vector<double>> rewards(
      static_cast<size_t>(p.replicates));
  parallel_for(static_cast<size_t>(p.replicates), ctx.threads,
               [&](std::size_t r) {
                 rewards[r] = run_noisy_ascent(quad, p.x0, p.es,
                                               root.child("replicate", r))
                                  .rewards;
               });

  Csv sim;
  sim.columns = {"iteration", "reward", "reward_se", "source"};
  std::vector<double> sim_mean(static_cast<size_t>(points));
  for (int t = 0; t < points; ++t) {
    RunningMoments m;
    for (int r = 0; r < p.replicates; ++r)
      m.add(rewards[static_cast<size_t>(r)][static_cast<size_t>(t)]);
    sim_mean[static_cast<size_t>(t)] = m.mean();
    sim.rows.push_back(
        {cell(t), cell(m.mean()), cell(m.standard_error()), "simulated"});
  }
  out.write_csv("simulated.csv", sim);

  Csv ana;
  ana.columns = sim.columns;
  for (int t = 0; t < points; ++t)
    ana.rows.push_back(
        {cell(t), cell(pred.expected_reward[static_cast<size_t>(t)]),
         cell(0.0), "analytic"});
  out.write_csv("analytic.csv", ana);

  if (p.store_modes && pred.has_mode_series) {
    Csv modes;
    modes.columns = {"iteration", "mode", "mean", "variance"};
    for (int t = 0; t < points; ++t)
      for (int i = 0; i < p.landscape.dimension; ++i)
        modes.rows.push_back({cell(t), cell(i), cell(pred.mode_means(t, i)),
                              cell(pred.mode_variances(t, i))});
    out.write_csv("modes.csv", modes);
  }

  // Tail agreement: per-replicate tail means, compared against the plateau
  // with a tolerance of 6 SE plus the residual transient bound.
  RunningMoments tails;
  for (int r = 0; r < p.replicates; ++r) {
    KahanSum s;
    for (int t = points - p.tail_window; t < points; ++t)
      s.add(rewards[static_cast<size_t>(r)][static_cast<size_t>(t)]);
    tails.add(s.value() / p.tail_window);
  }
  double residual_bound = 0.0;
  for (size_t i = 0; i < pred.modes.amplitudes.size(); ++i)
    residual_bound +=
        std::abs(pred.modes.amplitudes[i]) *
        std::exp(-pred.modes.rates[i] * (p.es.horizon - p.tail_window));
  const double tail_tolerance = 6.0 * tails.standard_error() + residual_bound;

  const PeakSearch peak = peak_time_general(pred.modes);

  nlohmann::json summary;
  summary["replicates"] = p.replicates;
  summary["kappa"] = p.es.kappa();
  summary["terminal_plateau"] = pred.terminal_plateau;
  summary["terminal_deficit"] = 1.0 - pred.terminal_plateau;
  summary["effective_dimension"] =
      effective_dimension(quad.spectrum(), p.es.step_size);
  summary["max_contraction"] = pred.stability.max_contraction;
  summary["tail_window"] = p.tail_window;
  summary["sim_tail_mean"] = tails.mean();
  summary["sim_tail_se"] = tails.standard_error();
  summary["tail_gap"] = std::abs(tails.mean() - pred.terminal_plateau);
  summary["tail_tolerance"] = tail_tolerance;
  if (peak.maxima_count > 0 && peak.time) {
    summary["peak_time"] = *peak.time;
    summary["peak_maxima_count"] = peak.maxima_count;
  }
  if (p.landscape.dimension <= 32) {
    summary["mode_amplitudes"] = pred.modes.amplitudes;
    summary["mode_rates"] = pred.modes.rates;
  }
  out.write_json("summary.json", summary);
  return summary;
}

inline void verify_ou_compare(const OuCompareParams& p,
                              const std::filesystem::path& dir,
                              VerifyReport& report) {
  const QuadraticLandscape& quad = p.landscape.require_quadratic();
  const OUPrediction pred = ou_prediction_of(p);
  const int points = p.es.horizon + 1;

  const Csv ana = read_csv(dir / "analytic.csv");
  if (static_cast<int>(ana.rows.size()) != points) {
    report.fail("analytic.csv: expected " + std::to_string(points) +
                " rows, found " + std::to_string(ana.rows.size()));
  } else {
    const std::size_t rc = csv_column_index(ana, "reward");
    const std::size_t sc = csv_column_index(ana, "source");
    bool clean = true;
    for (int t = 0; t < points && clean; ++t) {
      const auto& row = ana.rows[static_cast<size_t>(t)];
      if (row[sc] != "analytic") {
        report.fail("analytic.csv row " + std::to_string(t) +
                    ": source is not 'analytic'");
        clean = false;
      } else if (!close_to(parse_double(row[rc]),
                           pred.expected_reward[static_cast<size_t>(t)],
                           1e-9)) {
        report.fail("analytic.csv row " + std::to_string(t) +
                    ": reward " + row[rc] + " != recomputed " +
                    format_double(
                        pred.expected_reward[static_cast<size_t>(t)]));
        clean = false;
      }
    }
    if (clean) report.pass("analytic.csv rows match the closed form");
  }

  const Csv sim = read_csv(dir / "simulated.csv");
  if (static_cast<int>(sim.rows.size()) != points) {
    report.fail("simulated.csv: wrong row count");
  } else {
    const std::size_t rc = csv_column_index(sim, "reward");
    bool finite = true;
    for (int t = 0; t < points; ++t) {
      if (!std::isfinite(
              parse_double(sim.rows[static_cast<size_t>(t)][rc]))) {
        report.fail("simulated.csv row " + std::to_string(t) +
                    ": non-finite reward");
        finite = false;
        break;
      }
    }
    if (finite) report.pass("simulated.csv rewards finite");
  }

  const nlohmann::json summary =
      nlohmann::json::parse(read_text(dir / "summary.json"));
  report.require(
      close_to(summary.at("terminal_plateau").get<double>(),
               pred.terminal_plateau, 1e-9),
      "summary terminal_plateau matches the closed form");
  report.require(
      close_to(summary.at("effective_dimension").get<double>(),
               effective_dimension(quad.spectrum(), p.es.step_size), 1e-9),
      "summary effective_dimension matches the closed form");
  const double gap = summary.at("tail_gap").get<double>();
  const double tol = summary.at("tail_tolerance").get<double>();
  report.require(gap <= tol,
                 "simulated tail within tolerance of the plateau (gap " +
                     format_double(gap) + ", tolerance " +
                     format_double(tol) + ")");

  if (p.store_modes && pred.has_mode_series) {
    const Csv modes = read_csv(dir / "modes.csv");
    const std::size_t mc = csv_column_index(modes, "mean");
    const std::size_t vc = csv_column_index(modes, "variance");
    bool clean = true;
    if (static_cast<int>(modes.rows.size()) !=
        points * p.landscape.dimension) {
      report.fail("modes.csv: wrong row count");
      clean = false;
    }
    for (size_t i = 0; i < modes.rows.size() && clean; ++i) {
      const int t = static_cast<int>(i) / p.landscape.dimension;
      const int m = static_cast<int>(i) % p.landscape.dimension;
      if (!close_to(parse_double(modes.rows[i][mc]), pred.mode_means(t, m),
                    1e-9) ||
          !close_to(parse_double(modes.rows[i][vc]),
                    pred.mode_variances(t, m), 1e-9)) {
        report.fail("modes.csv row " + std::to_string(i) +
                    ": mode series does not match the closed form");
        clean = false;
      }
    }
    if (clean) report.pass("modes.csv matches the closed-form mode series");
  }
}

// ---------------------------------------------------------- spectroscopy --

struct SpectroscopyParams {
  LandscapeChoice landscape;
  double sigma = 1.0;
  std::vector<double> step_sizes;
  std::vector<int> populations;
  int fit_points = 4;
};

inline SpectroscopyParams parse_spectroscopy(Resolver& top) {
  SpectroscopyParams p;
  p.landscape = parse_landscape(top, "two_block");
  p.landscape.require_quadratic();
  Resolver spec = top.section("spectroscopy");
  p.sigma = spec.number("sigma", 1.0);
  p.step_sizes = spec.number_list("step_sizes", {0.05, 0.1, 0.2});
  p.populations = spec.integer_list("populations", {4, 8, 16, 32, 64, 128});
  p.fit_points = spec.integer("fit_points", 4);
  if (!(p.sigma > 0.0)) throw ConfigError("spectroscopy.sigma must be > 0");
  if (p.step_sizes.empty())
    throw ConfigError("spectroscopy.step_sizes is empty");
  if (static_cast<int>(p.populations.size()) < 2)
    throw ConfigError("spectroscopy.populations needs >= 2 entries");
  for (int n : p.populations)
    if (n < 1) throw ConfigError("spectroscopy.populations must be >= 1");
  if (p.fit_points < 2 ||
      p.fit_points > static_cast<int>(p.populations.size()))
    throw ConfigError("spectroscopy.fit_points out of range");
  return p;
}

inline std::string curve_name(int index) {
  return "curve_" + padded(index, 2) + ".csv";
}

// Deficit fit over the fit_points largest populations (smallest kappa).
inline LinearFit spectroscopy_fit(
    const std::vector<std::pair<double, double>>& points, int fit_points) {
  std::vector<std::pair<double, double>> sorted = points;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> xs, ys;
  for (size_t i = 0; i < std::min<size_t>(sorted.size(),
                                          static_cast<size_t>(fit_points));
       ++i) {
    xs.push_back(sorted[i].first);
    ys.push_back(sorted[i].second);
  }
  return fit_line(xs, ys);
}

inline nlohmann::json execute_spectroscopy(const SpectroscopyParams& p,
                                           const RunContext&,
                                           ArtifactWriter& out) {
  const Spectrum& spectrum = p.landscape.require_quadratic().spectrum();
  nlohmann::json fits = nlohmann::json::array();
  for (size_t i = 0; i < p.step_sizes.size(); ++i) {
    const double alpha = p.step_sizes[i];
    const auto points =
        plateau_slope_curve(spectrum, alpha, p.sigma, p.populations);
    Csv csv;
    csv.columns = {"alpha", "population", "kappa", "deficit", "source"};
    for (size_t j = 0; j < points.size(); ++j)
      csv.rows.push_back({cell(alpha), cell(p.populations[j]),
                          cell(points[j].first), cell(points[j].second),
                          "analytic"});
    out.write_csv(curve_name(static_cast<int>(i)), csv);

    const LinearFit line = spectroscopy_fit(points, p.fit_points);
    nlohmann::json entry;
    entry["alpha"] = alpha;
    entry["slope"] = line.slope;
    entry["intercept"] = line.intercept;
    entry["r_squared"] = line.r_squared;
    entry["effective_dimension_fit"] = 4.0 / alpha * line.slope;
    entry["effective_dimension_exact"] = effective_dimension(spectrum, alpha);
    fits.push_back(entry);
  }
  nlohmann::json summary;
  summary["sigma"] = p.sigma;
  summary["fits"] = fits;
  out.write_json("summary.json", summary);
  return summary;
}

inline void verify_spectroscopy(const SpectroscopyParams& p,
                                const std::filesystem::path& dir,
                                VerifyReport& report) {
  const Spectrum& spectrum = p.landscape.require_quadratic().spectrum();
  const nlohmann::json summary =
      nlohmann::json::parse(read_text(dir / "summary.json"));
  const nlohmann::json& fits = summary.at("fits");
  if (fits.size() != p.step_sizes.size()) {
    report.fail("summary.json: wrong number of fits");
    return;
  }
  for (size_t i = 0; i < p.step_sizes.size(); ++i) {
    const double alpha = p.step_sizes[i];
    const std::string name = curve_name(static_cast<int>(i));
    const auto expected =
        plateau_slope_curve(spectrum, alpha, p.sigma, p.populations);
    const Csv csv = read_csv(dir / name);
    const std::size_t kc = csv_column_index(csv, "kappa");
    const std::size_t dc = csv_column_index(csv, "deficit");
    bool clean = true;
    if (csv.rows.size() != expected.size()) {
      report.fail(name + ": wrong row count");
      clean = false;
    }
    std::vector<std::pair<double, double>> from_csv;
    for (size_t j = 0; j < csv.rows.size() && clean; ++j) {
      const double kappa = parse_double(csv.rows[j][kc]);
      const double deficit = parse_double(csv.rows[j][dc]);
      from_csv.emplace_back(kappa, deficit);
      if (!close_to(kappa, expected[j].first, 1e-9) ||
          !close_to(deficit, expected[j].second, 1e-9)) {
        report.fail(name + " row " + std::to_string(j) +
                    ": does not match the closed form");
        clean = false;
      }
    }
    if (!clean) continue;
    report.pass(name + ": rows match the closed form");

    const LinearFit refit = spectroscopy_fit(from_csv, p.fit_points);
    const nlohmann::json& entry = fits[i];
    report.require(
        close_to(entry.at("slope").get<double>(), refit.slope, 1e-9) &&
            close_to(entry.at("effective_dimension_fit").get<double>(),
                     4.0 / alpha * refit.slope, 1e-9),
        name + ": slope fit reproduces summary at alpha " +
            format_double(alpha));
  }
}

// ------------------------------------------------------------------ clss --

struct ClssParams {
  LandscapeChoice landscape;
  Eigen::VectorXd center;
  SpectroscopyConfig config;
};

inline ClssParams parse_clss(Resolver& top) {
  ClssParams p;
  p.landscape = parse_landscape(top, "two_block");
  p.center = parse_init(top, p.landscape.dimension, "zeros");
  Resolver clss = top.section("clss");
  SpectroscopyConfig& c = p.config;
  c.sigma = clss.number("sigma", 1.0);
  c.step_sizes = clss.number_list("step_sizes", {0.1});
  c.populations =
      clss.integer_list("populations", {8, 12, 16, 24, 32, 48});
  c.horizon = clss.integer("horizon", 5000);
  c.tail_window = clss.integer("tail_window", 2000);
  c.seeds = clss.integer("seeds", 12);
  c.min_valid_seeds =
      clss.integer("min_valid_seeds", std::max(1, c.seeds / 2));
  c.locality_threshold = clss.number("locality_threshold", -1.0);
  c.settling_tolerance = clss.number("settling_tolerance", -1.0);
  c.fit_points = clss.integer("fit_points", 4);
  c.min_fit_r2 = clss.number("min_fit_r2", 0.9);
  c.min_acceptance_rate = clss.number("min_acceptance_rate", 0.5);
  c.validate();
  return p;
}

inline ProbeSystem clss_system(const LandscapeChoice& landscape) {
  if (landscape.quadratic) return probe_system(*landscape.quadratic);
  return probe_system(landscape.require_well());
}

inline nlohmann::json clss_alpha_entry(double alpha,
                                       const SpectroscopyResult& result,
                                       const LandscapeChoice& landscape) {
  nlohmann::json entry;
  entry["alpha"] = alpha;
  entry["gates_passed"] = result.gates_passed;
  entry["gate_report"] = result.gate_report;
  entry["fit_ok"] = result.fit.ok;
  if (!result.fit.failure_reason.empty())
    entry["failure_reason"] = result.fit.failure_reason;
  if (result.fit.ok) {
    entry["slope"] = result.fit.slope;
    entry["intercept"] = result.fit.intercept;
    entry["r_squared"] = result.fit.r_squared;
    entry["effective_dimension"] = result.fit.effective_dimension;
    entry["reference_population"] = result.fit.reference_population;
    entry["reference_plateau"] = result.fit.reference_plateau;
    entry["fit_populations"] = result.fit.fit_populations;
    entry["suspicious_zero_slope"] = result.fit.suspicious_zero_slope;
  }
  if (landscape.quadratic)
    entry["effective_dimension_exact"] =
        effective_dimension(landscape.quadratic->spectrum(), alpha);
  return entry;
}

inline nlohmann::json execute_clss(const ClssParams& p, const RunContext& ctx,
                                   ArtifactWriter& out) {
  const ProbeSystem system = clss_system(p.landscape);
  const auto results =
      run_spectroscopy(system, p.center, p.config, StreamKey(ctx.seed));

  Csv points;
  points.columns = {"alpha",       "population",      "kappa",
                    "plateau",     "plateau_se",      "valid_seeds",
                    "acceptance",  "valid"};
  for (const auto& [alpha, result] : results) {
    for (const auto& [population, est] : result.plateaus) {
      points.rows.push_back(
          {cell(alpha), cell(population),
           cell(p.config.sigma * p.config.sigma / population),
           cell(est.value), cell(est.standard_error), cell(est.valid_seeds),
           cell(est.acceptance_rate), cell(est.valid ? 1 : 0)});
    }
  }
  out.write_csv("points.csv", points);

  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [alpha, result] : results)
    entries.push_back(clss_alpha_entry(alpha, result, p.landscape));
  nlohmann::json summary;
  summary["sigma"] = p.config.sigma;
  summary["results"] = entries;
  out.write_json("summary.json", summary);
  return summary;
}

inline void verify_clss(const ClssParams& p, const std::filesystem::path& dir,
                        VerifyReport& report) {
  const nlohmann::json summary =
      nlohmann::json::parse(read_text(dir / "summary.json"));
  const Csv points = read_csv(dir / "points.csv");
  const std::size_t ac = csv_column_index(points, "alpha");
  const std::size_t nc = csv_column_index(points, "population");
  const std::size_t pc = csv_column_index(points, "plateau");
  const std::size_t vc = csv_column_index(points, "valid");

  for (const nlohmann::json& entry : summary.at("results")) {
    const double alpha = entry.at("alpha").get<double>();
    if (!entry.at("fit_ok").get<bool>()) {
      report.pass("alpha " + format_double(alpha) +
                  ": no fit recorded, nothing to refit");
      continue;
    }
    std::vector<std::pair<int, double>> valid_plateaus;
    for (const auto& row : points.rows) {
      if (parse_double(row[ac]) != alpha) continue;
      if (parse_double(row[vc]) != 1.0) continue;
      valid_plateaus.emplace_back(static_cast<int>(parse_double(row[nc])),
                                  parse_double(row[pc]));
    }
    const SlopeFit refit =
        fit_slope(valid_plateaus, p.config.sigma, alpha, p.config);
    if (!refit.ok) {
      report.fail("alpha " + format_double(alpha) +
                  ": points.csv no longer supports the recorded fit (" +
                  refit.failure_reason + ")");
      continue;
    }
    const bool match =
        close_to(refit.slope, entry.at("slope").get<double>(), 1e-9) &&
        close_to(refit.r_squared, entry.at("r_squared").get<double>(),
                 1e-9) &&
        close_to(refit.effective_dimension,
                 entry.at("effective_dimension").get<double>(), 1e-9);
    report.require(match, "alpha " + format_double(alpha) +
                              ": refit from points.csv reproduces the "
                              "recorded slope and effective dimension");
  }
}

// ----------------------------------------------------------- slq_metrics --

struct SlqMetricsParams {
  LandscapeChoice landscape;
  Eigen::VectorXd point;
  int probes = 8;
  int steps = 30;
  int seeds = 5;
  double fd_scale = 1e-5;
  ProbeKind kind = ProbeKind::rademacher;
  std::string kind_name = "rademacher";
};

inline SlqMetricsParams parse_slq_metrics(Resolver& top) {
  SlqMetricsParams p;
  p.landscape = parse_landscape(top, "two_block");
  p.point = parse_init(top, p.landscape.dimension, "zeros");
  Resolver slq = top.section("slq");
  p.probes = slq.integer("probes", 8);
  p.steps = slq.integer("steps", 30);
  p.seeds = slq.integer("seeds", 5);
  p.fd_scale = slq.number("fd_scale", 1e-5);
  p.kind_name = slq.text("probe_kind", "rademacher");
  if (p.kind_name == "rademacher")
    p.kind = ProbeKind::rademacher;
  else if (p.kind_name == "gaussian")
    p.kind = ProbeKind::gaussian;
  else
    throw ConfigError("slq.probe_kind must be rademacher or gaussian");
  if (p.probes < 2) throw ConfigError("slq.probes must be >= 2");
  if (p.steps < 2) throw ConfigError("slq.steps must be >= 2");
  if (p.seeds < 2) throw ConfigError("slq.seeds must be >= 2");
  if (!(p.fd_scale > 0.0)) throw ConfigError("slq.fd_scale must be > 0");
  return p;
}

inline MatVecOperator slq_operator_of(const SlqMetricsParams& p) {
  if (p.landscape.quadratic)
    return hvp_operator(*p.landscape.quadratic, p.point, p.fd_scale);
  return hvp_operator(p.landscape.require_well(), p.point, p.fd_scale);
}

inline nlohmann::json execute_slq_metrics(const SlqMetricsParams& p,
                                          const RunContext& ctx,
                                          ArtifactWriter& out) {
  const MatVecOperator op = slq_operator_of(p);
  const StreamKey root(ctx.seed);

  Csv nodes;
  nodes.columns = {"seed", "probe", "node_index", "node", "weight"};
  nlohmann::json per_seed = nlohmann::json::array();
  RunningMoments m_trace, m_min, m_neg, m_pr, m_er;
  for (int s = 0; s < p.seeds; ++s) {
    RandomStream stream = derive_stream(root.child("seed", s));
    const SlqResult slq = slq_trace(
        op, [](double x) { return x; }, p.probes, p.steps, stream, p.kind);
    std::vector<std::pair<double, double>> cloud;
    for (size_t j = 0; j < slq.quadratures.size(); ++j) {
      const ProbeQuadrature& q = slq.quadratures[j];
      for (int k = 0; k < q.nodes.size(); ++k) {
        nodes.rows.push_back({cell(s), cell(static_cast<int>(j)), cell(k),
                              cell(q.nodes[k]), cell(q.weights[k])});
        cloud.emplace_back(q.nodes[k], q.weights[k]);
      }
    }
    const SpectralShape shape =
        spectral_shape_of_cloud(cloud, op.dimension);
    nlohmann::json entry;
    entry["seed"] = s;
    entry["trace"] = slq.estimate;
    entry["trace_se"] = slq.standard_error;
    entry["lambda_min"] = shape.lambda_min;
    entry["negative_mass"] = shape.negative_mass;
    entry["participation_ratio"] = shape.participation_ratio;
    entry["effective_rank"] = shape.effective_rank;
    per_seed.push_back(entry);
    m_trace.add(slq.estimate);
    m_min.add(shape.lambda_min);
    m_neg.add(shape.negative_mass);
    m_pr.add(shape.participation_ratio);
    m_er.add(shape.effective_rank);
  }
  out.write_csv("nodes.csv", nodes);

  nlohmann::json summary;
  summary["dimension"] = op.dimension;
  summary["probes"] = p.probes;
  summary["steps"] = p.steps;
  summary["seeds"] = p.seeds;
  summary["probe_kind"] = p.kind_name;
  summary["per_seed"] = per_seed;
  summary["mean"] = {{"trace", m_trace.mean()},
                     {"lambda_min", m_min.mean()},
                     {"negative_mass", m_neg.mean()},
                     {"participation_ratio", m_pr.mean()},
                     {"effective_rank", m_er.mean()}};
  summary["standard_error"] = {
      {"trace", m_trace.standard_error()},
      {"lambda_min", m_min.standard_error()},
      {"negative_mass", m_neg.standard_error()},
      {"participation_ratio", m_pr.standard_error()},
      {"effective_rank", m_er.standard_error()}};
  if (p.landscape.quadratic) {
    const Spectrum& spec = p.landscape.quadratic->spectrum();
    summary["exact"] = {{"trace", -spec.trace()},
                        {"lambda_min", -spec.max_eigenvalue()}};
  }
  out.write_json("summary.json", summary);
  return summary;
}

inline void verify_slq_metrics(const SlqMetricsParams& p,
                               const std::filesystem::path& dir,
                               VerifyReport& report) {
  const Csv nodes = read_csv(dir / "nodes.csv");
  const std::size_t sc = csv_column_index(nodes, "seed");
  const std::size_t pc = csv_column_index(nodes, "probe");
  const std::size_t wc = csv_column_index(nodes, "weight");
  std::map<std::pair<int, int>, double> weight_sums;
  for (const auto& row : nodes.rows) {
    const std::pair<int, int> id{static_cast<int>(parse_double(row[sc])),
                                 static_cast<int>(parse_double(row[pc]))};
    weight_sums[id] += parse_double(row[wc]);
  }
  if (static_cast<int>(weight_sums.size()) != p.seeds * p.probes) {
    report.fail("nodes.csv: expected " + std::to_string(p.seeds * p.probes) +
                " (seed, probe) groups, found " +
                std::to_string(weight_sums.size()));
  } else {
    bool clean = true;
    for (const auto& [id, sum] : weight_sums) {
      if (std::abs(sum - 1.0) > 1e-8) {
        report.fail("nodes.csv seed " + std::to_string(id.first) +
                    " probe " + std::to_string(id.second) +
                    ": weights sum to " + format_double(sum));
        clean = false;
        break;
      }
    }
    if (clean)
      report.pass("nodes.csv: every (seed, probe) weight set sums to 1");
  }

  const nlohmann::json summary =
      nlohmann::json::parse(read_text(dir / "summary.json"));
  RunningMoments m_trace, m_pr;
  for (const nlohmann::json& entry : summary.at("per_seed")) {
    m_trace.add(entry.at("trace").get<double>());
    m_pr.add(entry.at("participation_ratio").get<double>());
  }
  report.require(
      close_to(summary.at("mean").at("trace").get<double>(), m_trace.mean(),
               1e-9) &&
          close_to(summary.at("mean").at("participation_ratio").get<double>(),
                   m_pr.mean(), 1e-9),
      "summary means equal the mean of per-seed entries");
}

// ----------------------------------------------------------- double_well --

struct DoubleWellParams {
  KramersSetup setup;
  double epsilon = 0.0;
  int trajectory_samples = 4;
  int trajectory_stride = 1;
  int histogram_bins = 41;
  int first_passage_cap = 0;
  int first_passage_replicates = 0;
};

inline DoubleWellParams parse_double_well(Resolver& top) {
  DoubleWellParams p;
  const LandscapeChoice landscape = parse_landscape(top, "double_well");
  p.setup.landscape = landscape.require_well();

  Resolver dw = top.section("double_well");
  p.setup.step_size = dw.number("step_size", 0.05);
  p.setup.horizon = dw.integer("horizon", 20000);
  p.setup.replicates = dw.integer("replicates", 200);
  p.setup.hysteresis_fraction = dw.number("hysteresis_fraction", 0.5);

  // Noise precedence: explicit per-step variance, then epsilon, then the
  // barrier ratio dL / epsilon.
  if (dw.has("noise_variance")) {
    p.setup.noise_variance = dw.number("noise_variance", 0.0);
  } else if (dw.has("epsilon")) {
    const double eps = dw.number("epsilon", 0.0);
    if (!(eps > 0.0)) throw ConfigError("double_well.epsilon must be > 0");
    p.setup.noise_variance = 2.0 * eps / p.setup.step_size;
  } else {
    const double ratio = dw.number("barrier_ratio", 5.0);
    if (!(ratio > 0.0))
      throw ConfigError("double_well.barrier_ratio must be > 0");
    const double eps = p.setup.landscape.barrier() / ratio;
    p.setup.noise_variance = 2.0 * eps / p.setup.step_size;
  }
  p.setup.validate();
  p.epsilon = p.setup.epsilon();

  p.trajectory_samples = dw.integer("trajectory_samples", 4);
  p.trajectory_stride = dw.integer("trajectory_stride",
                                   std::max(1, p.setup.horizon / 2000));
  p.histogram_bins = dw.integer("histogram_bins", 41);
  p.first_passage_cap = dw.integer("first_passage_cap", 0);
  p.first_passage_replicates =
      dw.integer("first_passage_replicates", p.setup.replicates);
  if (p.trajectory_samples < 0 ||
      p.trajectory_samples > p.setup.replicates)
    throw ConfigError("double_well.trajectory_samples out of range");
  if (p.trajectory_stride < 1)
    throw ConfigError("double_well.trajectory_stride must be >= 1");
  if (p.histogram_bins < 2)
    throw ConfigError("double_well.histogram_bins must be >= 2");
  if (p.first_passage_cap < 0)
    throw ConfigError("double_well.first_passage_cap must be >= 0");
  return p;
}

inline nlohmann::json double_well_prediction(const DoubleWellParams& p) {
  const EscapePrediction pred = kramers_escape_iters(p.setup);
  nlohmann::json out;
  out["prefactor"] = pred.prefactor;
  out["barrier_ratio"] = pred.barrier_ratio;
  out["expected_escape_iterations"] = pred.expected_iterations;
  out["asymptotic_valid"] = pred.asymptotic_valid;
  out["hop_probability"] = hop_probability(p.setup, p.setup.horizon);
  out["regime"] =
      regime_name(classify_regime(p.setup, p.setup.horizon));
  out["within_well_variance"] = within_well_variance(p.setup);
  return out;
}

inline nlohmann::json execute_double_well(const DoubleWellParams& p,
                                          const RunContext& ctx,
                                          ArtifactWriter& out) {
  const DoubleWellRun run = simulate_double_well(
      p.setup, StreamKey(ctx.seed).child("sim", 0), p.trajectory_samples,
      p.trajectory_stride, ctx.threads);

  if (p.trajectory_samples > 0) {
    Csv traj;
    traj.columns = {"replicate", "iteration", "x"};
    for (size_t r = 0; r < run.sample_trajectories.size(); ++r)
      for (size_t j = 0; j < run.sample_trajectories[r].size(); ++j)
        traj.rows.push_back(
            {cell(static_cast<int>(r)),
             cell(static_cast<int>(j) * p.trajectory_stride),
             cell(run.sample_trajectories[r][j])});
    out.write_csv("trajectories.csv", traj);
  }

  // Fixed-range histogram of final positions; outliers land in edge bins.
  const double a = p.setup.landscape.half_separation();
  const double lo = -2.0 * a, hi = 2.0 * a;
  const double width = (hi - lo) / p.histogram_bins;
  std::vector<int> counts(static_cast<size_t>(p.histogram_bins), 0);
  for (const double x : run.final_positions) {
    int bin = static_cast<int>(std::floor((x - lo) / width));
    bin = std::clamp(bin, 0, p.histogram_bins - 1);
    ++counts[static_cast<size_t>(bin)];
  }
  Csv hist;
  hist.columns = {"bin_left", "bin_right", "count"};
  for (int b = 0; b < p.histogram_bins; ++b)
    hist.rows.push_back({cell(lo + b * width), cell(lo + (b + 1) * width),
                         cell(counts[static_cast<size_t>(b)])});
  out.write_csv("histogram.csv", hist);

  // Within-well spread from replicates that never hopped.
  RunningMoments still_var;
  for (const ReplicateRecord& rec : run.replicates)
    if (rec.hop_count == 0) still_var.add(rec.tail_var_x);

  nlohmann::json measured;
  measured["hop_fraction"] = run.hop_fraction;
  measured["hopped"] = run.hopped;
  measured["replicates"] = p.setup.replicates;
  if (run.hopped > 0)
    measured["mean_first_passage"] = run.mean_first_passage;
  if (still_var.count() > 0) {
    measured["within_well_variance"] = still_var.mean();
    measured["within_well_replicates"] = still_var.count();
  }

  nlohmann::json summary;
  summary["epsilon"] = p.epsilon;
  summary["noise_variance"] = p.setup.noise_variance;
  summary["horizon"] = p.setup.horizon;
  summary["prediction"] = double_well_prediction(p);
  summary["measured"] = measured;

  if (p.first_passage_cap > 0) {
    KramersSetup fp = p.setup;
    fp.replicates = p.first_passage_replicates;
    const FirstPassageResult result = measure_first_passage(
        fp, p.first_passage_cap, StreamKey(ctx.seed).child("fp", 0),
        ctx.threads);
    nlohmann::json fpj;
    fpj["replicates"] = p.first_passage_replicates;
    fpj["cap"] = p.first_passage_cap;
    fpj["censored"] = result.censored;
    fpj["hopped"] = static_cast<int>(result.passage_iterations.size());
    if (!result.passage_iterations.empty())
      fpj["mean_first_passage"] = result.mean_first_passage;
    summary["first_passage"] = fpj;
  }
  out.write_json("summary.json", summary);
  return summary;
}

inline void verify_double_well(const DoubleWellParams& p,
                               const std::filesystem::path& dir,
                               VerifyReport& report) {
  const nlohmann::json summary =
      nlohmann::json::parse(read_text(dir / "summary.json"));
  const nlohmann::json expected = double_well_prediction(p);
  const nlohmann::json& recorded = summary.at("prediction");
  bool match = recorded.at("regime") == expected.at("regime");
  for (const char* key : {"prefactor", "barrier_ratio",
                          "expected_escape_iterations", "hop_probability",
                          "within_well_variance"}) {
    match = match && close_to(recorded.at(key).get<double>(),
                              expected.at(key).get<double>(), 1e-9);
  }
  report.require(match,
                 "summary prediction block matches the recomputed "
                 "escape-time prediction");

  const nlohmann::json& measured = summary.at("measured");
  const int replicates = measured.at("replicates").get<int>();
  const int hopped = measured.at("hopped").get<int>();
  report.require(
      close_to(measured.at("hop_fraction").get<double>(),
               static_cast<double>(hopped) / replicates, 1e-12),
      "hop_fraction equals hopped / replicates");

  const Csv hist = read_csv(dir / "histogram.csv");
  const std::size_t cc = csv_column_index(hist, "count");
  long long total = 0;
  for (const auto& row : hist.rows)
    total += static_cast<long long>(parse_double(row[cc]));
  report.require(total == replicates,
                 "histogram counts sum to the replicate count");
}

// ------------------------------------------------------------- best_of_n --

struct BestOfNParams {
  LandscapeChoice landscape;
  Eigen::VectorXd center;
  double sigma = 0.1;
  double noise_sd = 0.0;
  int count = 240;
  std::vector<int> populations;
  std::vector<double> tail_levels;
  int bootstrap = 1000;
  double ceiling = 1.0;
};

inline BestOfNParams parse_best_of_n(Resolver& top) {
  BestOfNParams p;
  p.landscape = parse_landscape(top, "two_block");
  p.center = parse_init(top, p.landscape.dimension, "first_mode");
  Resolver probes = top.section("probes");
  p.sigma = probes.number("sigma", 0.1);
  p.noise_sd = probes.number("noise_sd", 0.0);
  p.count = probes.integer("count", 240);
  p.populations = probes.integer_list("populations", {1, 2, 4, 8, 16, 32, 64});
  p.tail_levels = probes.number_list("tail_levels", {0.5, 0.9, 0.95});
  p.bootstrap = probes.integer("bootstrap", 1000);
  p.ceiling = probes.number("ceiling", 1.0);
  if (p.count < 2) throw ConfigError("probes.count must be >= 2");
  if (p.populations.empty()) throw ConfigError("probes.populations is empty");
  for (int n : p.populations)
    if (n < 1 || n > p.count)
      throw ConfigError("probes.populations must lie in [1, count]");
  for (double level : p.tail_levels)
    if (!(level >= 0.0 && level <= 1.0))
      throw ConfigError("probes.tail_levels must lie in [0, 1]");
  if (p.bootstrap < 2) throw ConfigError("probes.bootstrap must be >= 2");
  return p;
}

inline nlohmann::json execute_best_of_n(const BestOfNParams& p,
                                        const RunContext& ctx,
                                        ArtifactWriter& out) {
  const Objective objective = p.landscape.objective(p.noise_sd);
  const StreamKey root(ctx.seed);
  const PerturbationBatch batch = generate_batch(
      objective, p.center, p.sigma, p.count, root.child("batch", 0));
  const BestOfNSummary result =
      summarize_best_of_n(batch, p.populations, p.tail_levels,
                          root.child("summary", 0), p.bootstrap, p.ceiling);

  Csv deltas;
  deltas.columns = {"candidate", "reward", "delta"};
  for (size_t k = 0; k < batch.rewards.size(); ++k)
    deltas.rows.push_back({cell(static_cast<int>(k)), cell(batch.rewards[k]),
                           cell(batch.deltas[k])});
  out.write_csv("deltas.csv", deltas);

  Csv curve;
  curve.columns = {"population", "expected_best_delta", "bootstrap_se"};
  for (const BestOfNPoint& point : result.curve)
    curve.rows.push_back({cell(point.population),
                          cell(point.expected_best_delta),
                          cell(point.bootstrap_se)});
  out.write_csv("curve.csv", curve);

  nlohmann::json tails = nlohmann::json::array();
  for (const TailStatistics& t : result.tails) {
    nlohmann::json entry;
    entry["level"] = t.level;
    entry["delta_quantile"] = t.delta_quantile;
    entry["normalized"] = t.normalized;
    if (t.normalized) entry["headroom_share"] = t.headroom_share;
    tails.push_back(entry);
  }

  nlohmann::json summary;
  summary["baseline"] = result.baseline;
  summary["ceiling"] = p.ceiling;
  summary["headroom"] = result.headroom;
  summary["headroom_valid"] = result.headroom_valid;
  if (!result.headroom_valid)
    summary["note"] =
        "baseline is at or above the ceiling; normalized statistics withheld";
  summary["sample_size"] = result.sample_size;
  summary["excluded_nonfinite"] = result.excluded_nonfinite;
  summary["p_improve"] = result.improvement.probability;
  summary["p_improve_se"] = result.improvement.standard_error;
  summary["saturation_population"] = result.saturation_population;
  summary["tails"] = tails;
  out.write_json("summary.json", summary);
  return summary;
}

inline void verify_best_of_n(const BestOfNParams& p,
                             const std::filesystem::path& dir,
                             VerifyReport& report) {
  const Csv deltas_csv = read_csv(dir / "deltas.csv");
  const std::size_t rc = csv_column_index(deltas_csv, "reward");
  const std::size_t dc = csv_column_index(deltas_csv, "delta");
  const nlohmann::json summary =
      nlohmann::json::parse(read_text(dir / "summary.json"));
  const double baseline = summary.at("baseline").get<double>();

  std::vector<double> deltas;
  bool rows_ok = true;
  for (size_t i = 0; i < deltas_csv.rows.size(); ++i) {
    const double reward = parse_double(deltas_csv.rows[i][rc]);
    const double delta = parse_double(deltas_csv.rows[i][dc]);
    if (!close_to(reward - baseline, delta, 1e-9)) {
      report.fail("deltas.csv row " + std::to_string(i) +
                  ": delta does not equal reward - baseline");
      rows_ok = false;
      break;
    }
    deltas.push_back(delta);
  }
  if (rows_ok) report.pass("deltas.csv deltas consistent with the baseline");
  if (deltas.empty()) {
    report.fail("deltas.csv: no rows");
    return;
  }

  const Csv curve = read_csv(dir / "curve.csv");
  const std::size_t nc = csv_column_index(curve, "population");
  const std::size_t ec = csv_column_index(curve, "expected_best_delta");
  bool curve_ok = true;
  for (const auto& row : curve.rows) {
    const int n = static_cast<int>(parse_double(row[nc]));
    const double expected = best_of_n_exact(deltas, n);
    if (!close_to(parse_double(row[ec]), expected, 1e-9)) {
      report.fail("curve.csv population " + std::to_string(n) +
                  ": expected best " + row[ec] +
                  " != exact order statistic " + format_double(expected));
      curve_ok = false;
    }
  }
  if (curve_ok)
    report.pass("curve.csv matches exact order statistics of deltas.csv");

  const ImprovementEstimate improve = estimate_p_improve(deltas);
  report.require(close_to(summary.at("p_improve").get<double>(),
                          improve.probability, 1e-12),
                 "p_improve matches a recount of positive deltas");
}

// ------------------------------------------------------------ dispatcher --

struct ParsedExperiment {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string directory;
  nlohmann::json resolved;
  std::function<nlohmann::json(const RunContext&, ArtifactWriter&)> execute;
  std::function<void(const std::filesystem::path&, VerifyReport&)> verify;
};

inline ParsedExperiment parse_experiment(const nlohmann::json& config) {
  KeyCursor cursor(config);
  ParsedExperiment parsed;
  Resolver top(cursor, parsed.resolved);

  parsed.experiment = top.text("experiment", "es_run");
  parsed.seed = static_cast<std::uint64_t>(top.integer64("seed", 1234));
  Resolver output = top.section("output");
  parsed.directory =
      output.text("directory", "runs/" + parsed.experiment);

  if (parsed.experiment == "es_run") {
    const auto p = parse_es_run(top);
    parsed.execute = [p](const RunContext& ctx, ArtifactWriter& out) {
      return execute_es_run(p, ctx, out);
    };
    parsed.verify = [p](const std::filesystem::path& dir, VerifyReport& r) {
      verify_es_run(p, dir, r);
    };
  } else if (parsed.experiment == "ou_compare") {
    const auto p = parse_ou_compare(top);
    parsed.execute = [p](const RunContext& ctx, ArtifactWriter& out) {
      return execute_ou_compare(p, ctx, out);
    };
    parsed.verify = [p](const std::filesystem::path& dir, VerifyReport& r) {
      verify_ou_compare(p, dir, r);
    };
  } else if (parsed.experiment == "spectroscopy") {
    const auto p = parse_spectroscopy(top);
    parsed.execute = [p](const RunContext& ctx, ArtifactWriter& out) {
      return execute_spectroscopy(p, ctx, out);
    };
    parsed.verify = [p](const std::filesystem::path& dir, VerifyReport& r) {
      verify_spectroscopy(p, dir, r);
    };
  } else if (parsed.experiment == "clss") {
    const auto p = parse_clss(top);
    parsed.execute = [p](const RunContext& ctx, ArtifactWriter& out) {
      return execute_clss(p, ctx, out);
    };
    parsed.verify = [p](const std::filesystem::path& dir, VerifyReport& r) {
      verify_clss(p, dir, r);
    };
  } else if (parsed.experiment == "slq_metrics") {
    const auto p = parse_slq_metrics(top);
    parsed.execute = [p](const RunContext& ctx, ArtifactWriter& out) {
      return execute_slq_metrics(p, ctx, out);
    };
    parsed.verify = [p](const std::filesystem::path& dir, VerifyReport& r) {
      verify_slq_metrics(p, dir, r);
    };
  } else if (parsed.experiment == "double_well") {
    const auto p = parse_double_well(top);
    parsed.execute = [p](const RunContext& ctx, ArtifactWriter& out) {
      return execute_double_well(p, ctx, out);
    };
    parsed.verify = [p](const std::filesystem::path& dir, VerifyReport& r) {
      verify_double_well(p, dir, r);
    };
  } else if (parsed.experiment == "best_of_n") {
    const auto p = parse_best_of_n(top);
    parsed.execute = [p](const RunContext& ctx, ArtifactWriter& out) {
      return execute_best_of_n(p, ctx, out);
    };
    parsed.verify = [p](const std::filesystem::path& dir, VerifyReport& r) {
      verify_best_of_n(p, dir, r);
    };
  } else {
    std::string names;
    for (const ExperimentInfo& info : experiment_catalog())
      names += std::string(names.empty() ? "" : ", ") + info.name;
    throw ConfigError("unknown experiment '" + parsed.experiment +
                      "' (available: " + names + ")");
  }

  reject_unknown_keys(config, cursor);
  return parsed;
}

}  // namespace detail

inline ExperimentOutcome run_experiment(const nlohmann::json& config,
                                        const RunOptions& options,
                                        std::ostream& log) {
  if (options.threads < 1)
    throw ConfigError("thread count must be >= 1");
  detail::ParsedExperiment parsed = detail::parse_experiment(config);
  const std::filesystem::path out_dir =
      resolve_output_root(options.output_root) / parsed.directory;

  log << "experiment: " << parsed.experiment << "\n";
  log << "output: " << out_dir.string() << "\n";
  log << "resolved config:\n" << parsed.resolved.dump(2) << "\n";

  ArtifactWriter writer(out_dir, "varcurv/" + parsed.experiment);
  detail::RunContext ctx{parsed.seed, options.threads};
  ExperimentOutcome outcome;
  outcome.experiment = parsed.experiment;
  outcome.output_dir = out_dir;
  outcome.resolved_config = parsed.resolved;
  outcome.summary = parsed.execute(ctx, writer);

  nlohmann::json metadata;
  metadata["experiment"] = parsed.experiment;
  metadata["seed"] = parsed.seed;
  metadata["config"] = parsed.resolved;
  metadata["config_digest"] = config_digest(parsed.resolved);
  writer.write_json("metadata.json", metadata);
  writer.finalize();

  log << "wrote " << writer.entries().size() << " artifacts + manifest to "
      << out_dir.string() << "\n";
  return outcome;
}

inline VerifyReport verify_experiment(const nlohmann::json& config,
                                      const RunOptions& options,
                                      std::ostream& log) {
  detail::ParsedExperiment parsed = detail::parse_experiment(config);
  const std::filesystem::path out_dir =
      resolve_output_root(options.output_root) / parsed.directory;
  log << "verifying " << parsed.experiment << " at " << out_dir.string()
      << "\n";

  VerifyReport report;
  const std::filesystem::path manifest_path = out_dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    report.fail("manifest.json not found in " + out_dir.string() +
                " (run the experiment first)");
    return report;
  }
  const std::vector<ManifestEntry> manifest = read_manifest(manifest_path);
  const std::vector<std::string> problems = check_manifest(out_dir, manifest);
  if (problems.empty()) {
    report.pass("manifest: all " + std::to_string(manifest.size()) +
                " artifacts match recorded size and hash");
  } else {
    for (const std::string& problem : problems)
      report.fail("manifest: " + problem);
  }

  const nlohmann::json metadata =
      nlohmann::json::parse(read_text(out_dir / "metadata.json"));
  report.require(metadata.at("config_digest").get<std::string>() ==
                     config_digest(parsed.resolved),
                 "metadata config digest matches this config");

  if (report.ok) parsed.verify(out_dir, report);
  return report;
}

}  // namespace varcurv
