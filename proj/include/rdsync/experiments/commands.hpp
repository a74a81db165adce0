#pragma once

// One function per CLI subcommand. Commands only compute; they return the
// rendered files in memory and leave disk output to write_outputs().

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdsync/experiments/config.hpp"
#include "rdsync/experiments/io.hpp"
#include "rdsync/mutual_info.hpp"
#include "rdsync/oracles.hpp"
#include "rdsync/parallel.hpp"
#include "rdsync/random.hpp"
#include "rdsync/simulate.hpp"
#include "rdsync/stats.hpp"
#include "rdsync/two_point.hpp"

namespace rdsync::exp {

inline constexpr const char* kVersion = "0.1.0";

struct Artifact {
  std::string name;
  std::string content;
};

struct CommandResult {
  std::vector<Artifact> files;
  json summary = json::object();
  bool oracle_failed = false;

  const Artifact* find(const std::string& name) const {
    for (const auto& f : files)
      if (f.name == name) return &f;
    return nullptr;
  }
};

namespace detail {

inline void emit(CommandResult& r, const std::string& stem, const Table& t, OutputFormat f) {
  if (f == OutputFormat::csv)
    r.files.push_back({stem + ".csv", render_csv(t)});
  else
    r.files.push_back({stem + ".json", render_json(table_json(t))});
}

inline void emit_json(CommandResult& r, const std::string& name, const json& j) {
  r.files.push_back({name, render_json(j)});
}

inline std::vector<std::string> state_labels(std::size_t s) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= s; ++i) out.push_back(std::to_string(i));
  return out;
}

inline std::vector<std::string> product_labels(const ProductIndex& idx) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < idx.size(); ++i) out.push_back(idx.label(i));
  return out;
}

inline std::vector<std::string> collapsed_labels(const CollapsedMatrix& c) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i <= c.sync_index(); ++i) out.push_back(c.label(i));
  return out;
}

inline json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

/// Sets j[key] to value, or to null plus j[key + "_reason"].
inline void set_or_null(json& j, const std::string& key, const std::optional<json>& value, const std::string& reason) {
  if (value) {
    j[key] = *value;
  } else {
    j[key] = nullptr;
    j[key + "_reason"] = reason;
  }
}

inline void require_rds(const ExperimentConfig& c) {
  if (!c.has_rds()) throw ConfigError("maps", "this experiment needs maps+weights or matrix");
}

inline void require_noise(const ExperimentConfig& c, double eps, const std::string& path) {
  if (eps > 0.0 && !c.has_noise()) throw ConfigError(path, "a positive eps needs Q");
}

inline void require_states(const ExperimentConfig& c, std::size_t s) {
  if (static_cast<std::size_t>(c.x0) >= s) throw ConfigError("x0", "state out of range");
  if (static_cast<std::size_t>(c.y0) >= s) throw ConfigError("y0", "state out of range");
}

struct Analysis {
  std::optional<ProbVector> pi;
  std::string pi_reason;
  std::optional<CollapseResult> w_collapse;
  SyncRatePrediction prediction;
};

/// pi, collapsed W and the renewal prediction, with failures recorded rather than thrown.
inline Analysis analyse(const RmsSpec& rms, const ProductChainMatrix& w) {
  Analysis a;
  try {
    a.pi = stationary_distribution(mean_matrix(rms.rds()));
  } catch (const NotConverged& e) {
    a.pi_reason = "no_stationary_distribution";
    return a;
  }
  a.w_collapse = collapse(w, *a.pi);
  a.prediction = predicted_sync_rate(a.w_collapse->collapsed, a.w_collapse->mu1);
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// build

inline CommandResult cmd_build(const ExperimentConfig& c) {
  using namespace detail;
  require_rds(c);
  const double eps = single_eps(c);
  require_noise(c, eps, "eps");
  const RdsSpec rds = make_rds(c);
  const RmsSpec rms = make_rms(c, rds, eps);
  const std::size_t s = rds.dim();
  const ProductChainMatrix v = build_V(rds);
  const ProductChainMatrix w = build_W(rms);
  const CollapseResult vt = collapse(v, std::nullopt);
  const Analysis an = analyse(rms, w);

  CommandResult r;
  const auto labels = state_labels(s);
  const auto plabels = product_labels(v.index());
  const auto clabels = collapsed_labels(vt.collapsed);
  const StochMatrix m = mean_matrix(rds);
  emit(r, "M", matrix_table(m.matrix(), labels), c.format);
  emit(r, "N", matrix_table(rms.noise().matrix(), labels), c.format);
  emit(r, "V", matrix_table(v.kernel().matrix(), plabels), c.format);
  emit(r, "W", matrix_table(w.kernel().matrix(), plabels), c.format);
  emit(r, "V_tilde", matrix_table(vt.collapsed.kernel.matrix(), clabels), c.format);
  if (an.w_collapse) emit(r, "W_tilde", matrix_table(an.w_collapse->collapsed.kernel.matrix(), clabels), c.format);

  json j = json::object();
  j["dim"] = s;
  j["eps"] = eps;
  j["state_labels"] = labels;
  j["product_labels"] = plabels;
  j["collapsed_labels"] = clabels;
  j["M"] = matrix_json(m.matrix());
  j["N"] = matrix_json(rms.noise().matrix());
  j["V"] = matrix_json(v.kernel().matrix());
  j["W"] = matrix_json(w.kernel().matrix());
  j["V_tilde"] = matrix_json(vt.collapsed.kernel.matrix());

  set_or_null(j, "W_tilde", an.w_collapse ? std::optional<json>(matrix_json(an.w_collapse->collapsed.kernel.matrix())) : std::nullopt,
              an.pi_reason);
  set_or_null(j, "pi", an.pi ? std::optional<json>(vector_json(an.pi->vector())) : std::nullopt, an.pi_reason);

  std::optional<json> egamma_v;
  try {
    egamma_v = expected_resync_time(v, ProbVector::uniform(v.index().unsync_count()));
  } catch (const InfiniteExpectedTime&) {
  }
  set_or_null(j, "egamma_V_uniform", egamma_v, "infinite");

  if (!an.w_collapse) {
    for (const char* key : {"mu1", "eps_eff", "egamma", "predicted_rate", "predicted_rate_nominal"})
      set_or_null(j, key, std::nullopt, an.pi_reason);
  } else {
    const auto& p = an.prediction;
    const auto& mu1 = an.w_collapse->mu1;
    set_or_null(j, "mu1", mu1 ? std::optional<json>(vector_json(mu1->vector())) : std::nullopt, "no_desynchronization");
    j["eps_eff"] = p.eps_eff;
    if (!p.egamma)
      set_or_null(j, "egamma", std::nullopt, "no_desynchronization");
    else
      set_or_null(j, "egamma", std::isfinite(*p.egamma) ? std::optional<json>(*p.egamma) : std::nullopt, "infinite");
    j["predicted_rate"] = p.rate;
    j["predicted_rate_nominal"] = nominal_sync_rate(eps, p);
  }
  emit_json(r, "build.json", j);
  r.summary = j;
  r.summary.erase("M");
  r.summary.erase("N");
  r.summary.erase("V");
  r.summary.erase("W");
  r.summary.erase("V_tilde");
  r.summary.erase("W_tilde");
  return r;
}

// ---------------------------------------------------------------------------
// sync-rate

struct SyncRateRow {
  double eps = 0.0;
  double eps_eff = std::numeric_limits<double>::quiet_NaN();
  double p_hat = 0.0;
  double predicted_rate = std::numeric_limits<double>::quiet_NaN();
  double predicted_rate_nominal = std::numeric_limits<double>::quiet_NaN();
  double predicted_egamma = std::numeric_limits<double>::quiet_NaN();
};

/// Fit of (1/p_hat - 1) against eps_eff over rows with eps_eff > 0.
struct SyncRateFit {
  std::size_t points = 0;
  stats::LinearFit ols;
  double slope_through_origin = 0.0;
  stats::LinearFit predicted;  // same fit on the predicted rates
};

inline std::optional<SyncRateFit> fit_sync_rate(const std::vector<SyncRateRow>& rows) {
  std::vector<double> x, y, yp;
  for (const auto& row : rows) {
    if (!(row.eps_eff > 0.0) || !(row.p_hat > 0.0)) continue;
    x.push_back(row.eps_eff);
    y.push_back(1.0 / row.p_hat - 1.0);
    yp.push_back(1.0 / row.predicted_rate - 1.0);
  }
  if (x.size() < 2) return std::nullopt;
  SyncRateFit f;
  f.points = x.size();
  f.ols = stats::linear_fit(x, y);
  f.slope_through_origin = stats::slope_through_origin(x, y);
  if (std::all_of(yp.begin(), yp.end(), [](double v) { return std::isfinite(v); })) f.predicted = stats::linear_fit(x, yp);
  return f;
}

inline std::vector<SyncRateRow> sync_rate_rows(const ExperimentConfig& c, unsigned threads) {
  using namespace detail;
  require_rds(c);
  require_noise(c, c.eps_grid.back(), "eps_grid");
  const RdsSpec rds = make_rds(c);
  require_states(c, rds.dim());
  const std::size_t g = c.eps_grid.size();
  const auto reps = static_cast<std::size_t>(c.replicas);

  std::vector<RmsSpec> systems;
  std::vector<SyncRateRow> rows(g);
  for (std::size_t i = 0; i < g; ++i) {
    systems.push_back(make_rms(c, rds, c.eps_grid[i]));
    rows[i].eps = c.eps_grid[i];
    const Analysis an = analyse(systems.back(), build_W(systems.back()));
    if (!an.w_collapse) continue;
    rows[i].eps_eff = an.prediction.eps_eff;
    rows[i].predicted_rate = an.prediction.rate;
    rows[i].predicted_rate_nominal = nominal_sync_rate(c.eps_grid[i], an.prediction);
    if (an.prediction.egamma) rows[i].predicted_egamma = *an.prediction.egamma;
  }

  std::vector<double> rates(g * reps);
  parallel_for(g * reps, threads, [&](std::size_t task) {
    const RmsSpec& rms = systems[task / reps];
    const long hits = count_synchronized(rms, c.x0, c.y0, c.steps, substream_seed(c.seed, task));
    rates[task] = static_cast<double>(hits) / static_cast<double>(c.steps + 1);
  });
  for (std::size_t i = 0; i < g; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < reps; ++k) acc += rates[i * reps + k];
    rows[i].p_hat = acc / static_cast<double>(reps);
  }
  return rows;
}

inline CommandResult cmd_sync_rate(const ExperimentConfig& c, unsigned threads = 1) {
  const std::vector<SyncRateRow> rows = sync_rate_rows(c, threads);
  Table t;
  t.columns = {"eps", "eps_eff", "p_hat", "inv_p_hat", "predicted_rate", "predicted_rate_nominal", "predicted_egamma"};
  for (const auto& row : rows)
    t.add({row.eps, row.eps_eff, row.p_hat, 1.0 / row.p_hat, row.predicted_rate, row.predicted_rate_nominal,
           row.predicted_egamma});
  CommandResult r;
  detail::emit(r, "sync_rate", t, c.format);

  json j = json::object();
  j["x"] = "eps_eff";
  j["y"] = "inv_p_hat - 1";
  j["steps"] = c.steps;
  j["replicas"] = c.replicas;
  if (const auto f = fit_sync_rate(rows)) {
    j["points"] = f->points;
    j["slope"] = f->ols.slope;
    j["intercept"] = f->ols.intercept;
    j["r2"] = f->ols.r2;
    j["slope_through_origin"] = f->slope_through_origin;
    j["predicted_curve_slope"] = f->predicted.slope;
  } else {
    for (const char* key : {"slope", "intercept", "r2", "slope_through_origin", "predicted_curve_slope"})
      detail::set_or_null(j, key, std::nullopt, "fewer_than_two_points");
  }
  detail::emit_json(r, "sync_rate_fit.json", j);
  r.summary = j;
  return r;
}

// ---------------------------------------------------------------------------
// mi

inline CommandResult cmd_mi(const ExperimentConfig& c) {
  using namespace detail;
  require_rds(c);
  const RdsSpec rds = make_rds(c);
  require_states(c, rds.dim());
  CommandResult r;
  Table t;
  if (c.mi_mode == MiMode::time) {
    const double eps = single_eps(c);
    require_noise(c, eps, "eps");
    const RmsSpec rms = make_rms(c, rds, eps);
    const auto path = mi_path(rms, c.x0, c.y0, c.mi_n);
    std::optional<double> slope;
    try {
      slope = mi_slope(rms).slope;
    } catch (const NotConverged&) {
    }
    t.columns = {"n", "MI", "MI_per_n", "slope"};
    for (std::size_t i = 0; i < path.size(); ++i) {
      const auto n = static_cast<long long>(i + 1);
      t.add({n, path[i], path[i] / static_cast<double>(n), slope ? Cell(*slope) : Cell()});
    }
    emit(r, "mi_time", t, c.format);
    r.summary["final_MI"] = path.back();
    set_or_null(r.summary, "slope", slope ? std::optional<json>(*slope) : std::nullopt, "not_converged");
  } else {
    require_noise(c, c.eps_grid.back(), "eps_grid");
    t.columns = {"eps", "MI", "MI_per_n"};
    for (double eps : c.eps_grid) {
      const double mi = mi_path(make_rms(c, rds, eps), c.x0, c.y0, c.mi_n).back();
      t.add({eps, mi, mi / c.mi_n});
    }
    emit(r, "mi_eps", t, c.format);
  }
  r.summary["n"] = c.mi_n;
  return r;
}

// ---------------------------------------------------------------------------
// n-variability

struct DiagonalStats {
  double eps = 0.0;
  int draw = 0;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

/// Diagonal of exp(eps Q) for n_draws random generators (the same draws at every eps).
inline std::vector<DiagonalStats> noise_diagonals(std::size_t s, const std::vector<double>& eps_grid, int n_draws,
                                                  std::uint64_t seed, unsigned threads = 1) {
  rdsync::detail::require(s >= 2, "noise_diagonals: need at least 2 states");
  std::vector<DiagonalStats> out(eps_grid.size() * static_cast<std::size_t>(n_draws));
  parallel_for(static_cast<std::size_t>(n_draws), threads, [&](std::size_t d) {
    const GeneratorMatrix q = random_generator_matrix(s, substream_seed(seed, d));
    for (std::size_t e = 0; e < eps_grid.size(); ++e) {
      const Vector diag = mat_exp(q, eps_grid[e]).matrix().diagonal();
      out[e * static_cast<std::size_t>(n_draws) + d] = {eps_grid[e], static_cast<int>(d) + 1, diag.minCoeff(),
                                                        diag.mean(), diag.maxCoeff()};
    }
  });
  return out;
}

/// Spread of all diagonal entries (max - min over draws and states) at each eps,
/// averaged over eps <= eps_max.
inline double mean_diagonal_scatter(const std::vector<DiagonalStats>& rows, double eps_max = 0.1) {
  std::vector<double> eps_values;
  for (const auto& r : rows)
    if (r.eps <= eps_max && std::find(eps_values.begin(), eps_values.end(), r.eps) == eps_values.end())
      eps_values.push_back(r.eps);
  rdsync::detail::require(!eps_values.empty(), "mean_diagonal_scatter: no eps <= eps_max");
  double total = 0.0;
  for (double e : eps_values) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& r : rows) {
      if (r.eps != e) continue;
      lo = std::min(lo, r.min);
      hi = std::max(hi, r.max);
    }
    total += hi - lo;
  }
  return total / static_cast<double>(eps_values.size());
}

inline CommandResult cmd_n_variability(const ExperimentConfig& c, unsigned threads = 1) {
  if (c.dim < 2) throw ConfigError("dim", "required (number of states)");
  const auto rows = noise_diagonals(c.dim, c.eps_grid, c.n_draws, c.seed, threads);
  Table t;
  t.columns = {"eps", "draw", "diag_min", "diag_mean", "diag_max"};
  for (const auto& r : rows) t.add({r.eps, static_cast<long long>(r.draw), r.min, r.mean, r.max});
  CommandResult r;
  detail::emit(r, "n_variability", t, c.format);
  r.summary["dim"] = c.dim;
  r.summary["draws"] = c.n_draws;
  if (c.eps_grid.front() <= 0.1)
    r.summary["mean_scatter_eps_le_0.1"] = mean_diagonal_scatter(rows);
  else
    detail::set_or_null(r.summary, "mean_scatter_eps_le_0.1", std::nullopt, "no_eps_le_0.1");
  detail::emit_json(r, "n_variability.json", r.summary);
  return r;
}

// ---------------------------------------------------------------------------
// simulate

inline CommandResult cmd_simulate(const ExperimentConfig& c) {
  using namespace detail;
  require_rds(c);
  const double eps = single_eps(c);
  require_noise(c, eps, "eps");
  const RdsSpec rds = make_rds(c);
  require_states(c, rds.dim());
  const RmsSpec rms = make_rms(c, rds, eps);
  const CoupledTrajectory traj = run_coupled(rms, c.x0, c.y0, c.steps, substream_seed(c.seed, 0));
  const CycleTimes cyc = extract_cycle_times(traj);

  Table tr;
  tr.columns = {"t", "x", "y", "map_index", "synced"};
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const auto& st = traj.steps[t];
    tr.add({static_cast<long long>(t), static_cast<long long>(st.x + 1), static_cast<long long>(st.y + 1),
            static_cast<long long>(st.map_index + 1), static_cast<long long>(traj.synced(t))});
  }
  Table cy;
  cy.columns = {"cycle", "tau", "gamma", "T", "W", "censored"};
  for (std::size_t i = 0; i < cyc.taus.size(); ++i)
    cy.add({static_cast<long long>(i + 1), cyc.taus[i], cyc.gammas[i], cyc.Ts[i], cyc.Ws[i], 0LL});
  if (cyc.tail.present) {
    const long w_prev = cyc.Ws.empty() ? 0 : cyc.Ws.back();
    const long tail_len = cyc.tail.sync_steps + cyc.tail.desync_steps;
    cy.add({static_cast<long long>(cyc.taus.size() + 1), cyc.tail.sync_steps, cyc.tail.desync_steps, tail_len,
            w_prev + tail_len, 1LL});
  }

  CommandResult r;
  emit(r, "trajectory", tr, c.format);
  emit(r, "cycles", cy, c.format);

  json j = json::object();
  j["steps"] = c.steps;
  j["eps"] = eps;
  j["empirical_rate"] = empirical_sync_rate(traj);
  j["complete_cycles"] = cyc.taus.size();
  set_or_null(j, "gamma0", cyc.gamma0 ? std::optional<json>(*cyc.gamma0) : std::nullopt, "synchronized_start");
  j["gamma0_censored"] = cyc.gamma0_censored;
  const Analysis an = analyse(rms, build_W(rms));
  if (an.w_collapse) {
    j["eps_eff"] = an.prediction.eps_eff;
    j["predicted_rate"] = an.prediction.rate;
  } else {
    set_or_null(j, "eps_eff", std::nullopt, an.pi_reason);
    set_or_null(j, "predicted_rate", std::nullopt, an.pi_reason);
  }
  std::optional<json> geo;
  std::string geo_reason = "no_desynchronization";
  if (an.w_collapse && an.prediction.eps_eff > 0.0 && an.prediction.eps_eff < 1.0) {
    try {
      const GeometricFitReport g = tau_geometric_check(cyc.taus, an.prediction.eps_eff);
      geo = json{{"samples", g.samples},   {"mean", g.mean},   {"expected_mean", g.expected_mean},
                 {"chi_square", g.chi_square}, {"dof", g.dof}, {"p_value", g.p_value}};
    } catch (const InsufficientSamples&) {
      geo_reason = "insufficient_samples";
    }
  }
  set_or_null(j, "tau_geometric_check", geo, geo_reason);
  emit_json(r, "simulate.json", j);
  r.summary = j;
  return r;
}

// ---------------------------------------------------------------------------
// decompose

inline CommandResult cmd_decompose(const ExperimentConfig& c) {
  detail::require_rds(c);
  Matrix m;
  if (c.matrix) {
    try {
      m = StochMatrix(*c.matrix).matrix();
    } catch (const InvalidArgument& e) {
      throw ConfigError("matrix", e.what());
    }
  } else {
    m = mean_matrix(make_rds(c)).matrix();
  }
  const RdsSpec rds = decompose_markov(StochMatrix(m));
  const MapClassification cls = classify_maps(rds.maps());
  json maps = json::array();
  json kinds = json::array();
  for (std::size_t i = 0; i < rds.size(); ++i) {
    json t = json::array();
    for (int v : rds.maps()[i].targets()) t.push_back(v + 1);
    maps.push_back(std::move(t));
    kinds.push_back(to_string(cls.labels[i]));
  }
  json j = json::object();
  j["dim"] = rds.dim();
  j["matrix"] = matrix_json(m);
  j["maps"] = std::move(maps);
  j["weights"] = rds.weights();
  j["kinds"] = std::move(kinds);
  j["reconstruction_error"] = (mean_matrix(rds).matrix() - m).cwiseAbs().maxCoeff();
  CommandResult r;
  detail::emit_json(r, "decomposition.json", j);
  r.summary = j;
  return r;
}

// ---------------------------------------------------------------------------
// oracle

struct OracleCheck {
  std::string name;
  std::string detail;
  double error = 0.0;
  double tolerance = 0.0;
  enum class Status { pass, fail, skip } status = Status::skip;
};

inline const char* to_string(OracleCheck::Status s) {
  switch (s) {
    case OracleCheck::Status::pass: return "pass";
    case OracleCheck::Status::fail: return "fail";
    case OracleCheck::Status::skip: return "skip";
  }
  return "?";
}

namespace detail {

inline OracleCheck judged(std::string name, std::string what, double error, double tol) {
  OracleCheck k{std::move(name), std::move(what), error, tol};
  k.status = error <= tol ? OracleCheck::Status::pass : OracleCheck::Status::fail;
  return k;
}

inline OracleCheck skipped(std::string name, std::string why) {
  return {std::move(name), std::move(why), 0.0, 0.0, OracleCheck::Status::skip};
}

/// Neumann series summed until the remaining mass is negligible.
inline std::optional<double> neumann_total(const Matrix& mbar, const Vector& mu0) {
  Vector v = mu0;
  double total = 0.0;
  for (int n = 0; n < 5000000; ++n) {
    const double mass = v.sum();
    total += mass;
    if (mass < 1e-16) return total;
    v = mbar.transpose() * v;
  }
  return std::nullopt;
}

}  // namespace detail

inline std::vector<OracleCheck> run_oracles(const RmsSpec& rms, std::uint64_t seed, long steps) {
  using detail::judged;
  using detail::skipped;
  std::vector<OracleCheck> out;
  const RdsSpec& rds = rms.rds();
  const std::size_t s = rms.dim();
  const double eps = rms.eps();
  const StochMatrix m = mean_matrix(rds);

  out.push_back(judged("mat_exp_vs_taylor", "max |exp(eps Q) - 30-term Taylor|",
                       (rms.noise().matrix() - oracle::taylor_exp(rms.generator().matrix(), eps)).cwiseAbs().maxCoeff(),
                       1e-10));
  if (eps <= 0.1)
    out.push_back(judged("first_order_gap", "max |N - (I + eps Q)| against 2 eps^2",
                         (rms.noise().matrix() - first_order_N(rms.generator(), eps).matrix()).cwiseAbs().maxCoeff(),
                         2.0 * eps * eps));
  else
    out.push_back(skipped("first_order_gap", "eps > 0.1"));

  const RdsSpec back = decompose_markov(m);
  out.push_back(judged("decompose_round_trip", "max |mean(decompose(M)) - M|",
                       (mean_matrix(back).matrix() - m.matrix()).cwiseAbs().maxCoeff(), 1e-9));

  std::optional<ProbVector> pi;
  try {
    pi = stationary_distribution(m);
    out.push_back(judged("stationary_vs_solve", "max |power iteration - direct solve|",
                         (pi->vector() - oracle::stationary_by_solve(m.matrix())).cwiseAbs().maxCoeff(), 1e-10));
  } catch (const NotConverged&) {
    out.push_back(skipped("stationary_vs_solve", "mean chain has no unique aperiodic limit"));
  }

  const ProductChainMatrix v = build_V(rds);
  const ProductChainMatrix w = build_W(rms);
  const ProductIndex& idx = v.index();
  const ProbVector uniform = ProbVector::uniform(idx.unsync_count());
  try {
    const double lu = expected_resync_time(v, uniform);
    const auto series = detail::neumann_total(v.unsync_block(), uniform.vector());
    if (series)
      out.push_back(judged("egamma_V_vs_series", "relative |LU - Neumann series|", std::abs(lu - *series) / lu, 1e-8));
    else
      out.push_back(skipped("egamma_V_vs_series", "series too slow to converge"));
  } catch (const InfiniteExpectedTime&) {
    out.push_back(skipped("egamma_V_vs_series", "expected time infinite"));
  }

  std::optional<CollapseResult> wc;
  if (pi) {
    wc = collapse(w, *pi);
    const Matrix& k = wc->collapsed.kernel.matrix();
    out.push_back(judged("collapse_row_sums", "max |row sum - 1| of collapsed W",
                         (k.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12));
    if (wc->mu1) {
      try {
        const double lu = expected_resync_time(wc->collapsed, *wc->mu1);
        const auto series = detail::neumann_total(wc->collapsed.unsync_block(), wc->mu1->vector());
        if (series)
          out.push_back(judged("egamma_W_vs_series", "relative |LU - Neumann series| from mu1",
                               std::abs(lu - *series) / lu, 1e-8));
        else
          out.push_back(skipped("egamma_W_vs_series", "series too slow to converge"));
      } catch (const InfiniteExpectedTime&) {
        out.push_back(skipped("egamma_W_vs_series", "expected time infinite"));
      }
    } else {
      out.push_back(skipped("egamma_W_vs_series", "no desynchronization at this eps"));
    }
  } else {
    out.push_back(skipped("collapse_row_sums", "no stationary distribution"));
    out.push_back(skipped("egamma_W_vs_series", "no stationary distribution"));
  }

  // Enumeration cost grows like (branching)^(n-1) per start.
  const int n_max = 6;
  const double v_cost = std::pow(static_cast<double>(rds.size()), n_max - 1) * static_cast<double>(idx.unsync_count());
  const double w_cost = std::pow(static_cast<double>(rds.size() * s), n_max - 1) * static_cast<double>(idx.unsync_count());
  if (v_cost <= 1e7) {
    double err = 0.0;
    for (std::size_t a = 0; a < idx.unsync_count(); ++a) {
      const auto [x, y] = idx.pair_at(a);
      for (int n = 1; n <= n_max; ++n)
        err = std::max(err, std::abs(survival_probability(v, ProbVector::point_mass(idx.unsync_count(), a), n) -
                                     oracle::survival_by_map_enumeration(rds, x, y, n)));
    }
    out.push_back(judged("survival_V_vs_enumeration", "n <= 6, every unsynchronized start", err, 1e-12));
  } else {
    out.push_back(skipped("survival_V_vs_enumeration", "enumeration too large"));
  }
  if (w_cost <= 1e7) {
    double err = 0.0;
    for (std::size_t a = 0; a < idx.unsync_count(); ++a) {
      const auto [x, y] = idx.pair_at(a);
      for (int n = 1; n <= n_max; ++n)
        err = std::max(err, std::abs(survival_probability(w, ProbVector::point_mass(idx.unsync_count(), a), n) -
                                     oracle::survival_by_pair_enumeration(rds, rms.noise().matrix(), x, y, n)));
    }
    out.push_back(judged("survival_W_vs_enumeration", "n <= 6, every unsynchronized start", err, 1e-12));
  } else {
    out.push_back(skipped("survival_W_vs_enumeration", "enumeration too large"));
  }

  int mi_n = 0;
  while (mi_n < 5 && std::pow(static_cast<double>(s), 2.0 * (mi_n + 1)) * static_cast<double>(s * s) <= 1e6) ++mi_n;
  if (mi_n >= 1) {
    double err = 0.0;
    for (int x = 0; x < static_cast<int>(s); ++x)
      for (int y = 0; y < static_cast<int>(s); ++y) {
        const auto path = mi_path(rms, x, y, mi_n);
        for (int n = 1; n <= mi_n; ++n)
          err = std::max(err, std::abs(path[static_cast<std::size_t>(n - 1)] - mi_brute_force(rms, x, y, n)));
      }
    out.push_back(judged("mi_path_vs_brute_force", "n <= " + std::to_string(mi_n) + ", every start", err, 1e-10));
  } else {
    out.push_back(skipped("mi_path_vs_brute_force", "enumeration too large"));
  }

  try {
    const MiSlope slope = mi_slope(rms);
    if (slope.period == 1) {
      const auto path = mi_path_from_law(rms, ProbVector::uniform(s * s), 2001);
      out.push_back(judged("mi_slope_vs_increment", "|slope - (MI(2001) - MI(2000))| from the uniform law",
                           std::abs(slope.slope - (path[2000] - path[1999])), 1e-6));
    } else {
      out.push_back(skipped("mi_slope_vs_increment", "coupled chain is periodic"));
    }
  } catch (const NotConverged&) {
    out.push_back(skipped("mi_slope_vs_increment", "limiting law did not converge"));
  }

  const long n_sim = std::min(steps, 100000L);
  const CoupledTrajectory traj = run_coupled(rms, 0, 0, n_sim, substream_seed(seed, 0));
  // The battery checks many cells at once, so it uses a wider band than the single-kernel test.
  const TransitionCheck tc = transition_frequency_check(traj, w, 25.0, 4.0);
  if (tc.cells_checked == 0)
    out.push_back(skipped("transition_frequencies", "no cell reaches 25 expected counts"));
  else
    out.push_back(judged("transition_frequencies",
                         std::to_string(tc.cells_checked) + " cells, " + std::to_string(n_sim) + " steps, worst z",
                         tc.worst_z, 4.0));
  return out;
}

inline CommandResult cmd_oracle(const ExperimentConfig& c) {
  detail::require_rds(c);
  const double eps = single_eps(c);
  detail::require_noise(c, eps, "eps");
  const RdsSpec rds = make_rds(c);
  const auto checks = run_oracles(make_rms(c, rds, eps), c.seed, c.steps);
  Table t;
  t.columns = {"check", "status", "error", "tolerance", "detail"};
  CommandResult r;
  int failed = 0;
  for (const auto& k : checks) {
    t.add({k.name, std::string(to_string(k.status)), k.error, k.tolerance, k.detail});
    if (k.status == OracleCheck::Status::fail) ++failed;
  }
  detail::emit(r, "oracle", t, c.format);
  r.oracle_failed = failed > 0;
  r.summary["checks"] = checks.size();
  r.summary["failed"] = failed;
  return r;
}

// ---------------------------------------------------------------------------

inline CommandResult run_command(const std::string& name, const ExperimentConfig& c, unsigned threads = 1) {
  if (name == "build") return cmd_build(c);
  if (name == "sync-rate") return cmd_sync_rate(c, threads);
  if (name == "mi") return cmd_mi(c);
  if (name == "n-variability") return cmd_n_variability(c, threads);
  if (name == "simulate") return cmd_simulate(c);
  if (name == "decompose") return cmd_decompose(c);
  if (name == "oracle") return cmd_oracle(c);
  throw ConfigError("command", "unknown subcommand '" + name + "'");
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json make_manifest(const std::string& command, const ExperimentConfig& c, const CommandResult& r) {
  json outputs = json::array();
  for (const auto& f : r.files)
    outputs.push_back({{"file", f.name}, {"bytes", f.content.size()}, {"fnv1a64", fnv1a64(f.content)}});
  return json{{"command", command}, {"config", to_json(c)}, {"prng", kPrngId}, {"version", kVersion},
              {"timestamp", utc_timestamp()}, {"outputs", std::move(outputs)}};
}

/// Writes every artifact plus manifest.json into `dir` (created if needed).
inline void write_outputs(const std::filesystem::path& dir, const std::string& command, const ExperimentConfig& c,
                          const CommandResult& r) {
  std::filesystem::create_directories(dir);
  for (const auto& f : r.files) write_atomic(dir / f.name, f.content);
  write_atomic(dir / "manifest.json", render_json(make_manifest(command, c, r)));
}

}  // namespace rdsync::exp
