#pragma once

// Experiment configuration: JSON in, validated struct out. States are
// 1-based in every external format and 0-based inside the library.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdsync/error.hpp"
#include "rdsync/rds_model.hpp"
#include "rdsync/stochastic_core.hpp"

namespace rdsync::exp {

using json = nlohmann::json;

/// Bad or inconsistent configuration; `path` names the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

enum class OutputFormat { csv, json };
enum class MiMode { time, eps };

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"build", "sync-rate", "mi", "n-variability",
                                              "simulate", "decompose", "oracle"};
  return kinds;
}

struct ExperimentConfig {
  std::string experiment;  // optional label, one of experiment_kinds()
  std::size_t dim = 0;

  // Exactly one source for the RDS (or none for n-variability).
  std::optional<std::vector<std::vector<int>>> maps;  // 0-based targets
  std::optional<std::vector<double>> weights;
  std::optional<Matrix> matrix;

  std::optional<Matrix> q;  // explicit generator
  bool q_random = false;
  std::uint64_t q_seed = 0;

  std::optional<double> eps;
  std::vector<double> eps_grid;

  long steps = 100000;
  int replicas = 8;
  std::uint64_t seed = 1;
  int x0 = 0;
  int y0 = 0;
  int mi_n = 200;
  int n_draws = 100;

  OutputFormat format = OutputFormat::csv;
  MiMode mi_mode = MiMode::time;

  bool has_rds() const { return maps.has_value() || matrix.has_value(); }
  bool has_noise() const { return q.has_value() || q_random; }
};

inline std::vector<double> default_eps_grid() {
  std::vector<double> g(10);
  for (int i = 0; i < 10; ++i) g[static_cast<std::size_t>(i)] = 0.002 + (0.05 - 0.002) * i / 9.0;
  return g;
}

namespace detail {

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline long long integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<long long>();
}

inline Matrix square_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty array of rows");
  const auto s = static_cast<Eigen::Index>(j.size());
  Matrix m(s, s);
  for (Eigen::Index r = 0; r < s; ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != s)
      throw ConfigError(rp, "expected a row of length " + std::to_string(s));
    for (Eigen::Index c = 0; c < s; ++c)
      m(r, c) = number(row[static_cast<std::size_t>(c)], rp + "[" + std::to_string(c) + "]");
  }
  return m;
}

inline void check_dim(ExperimentConfig& c, std::size_t s, const std::string& path) {
  if (c.dim == 0) c.dim = s;
  if (c.dim != s)
    throw ConfigError(path, "implies " + std::to_string(s) + " states but dim is " + std::to_string(c.dim));
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& root) {
  using detail::integer;
  using detail::number;
  if (!root.is_object()) throw ConfigError("$", "config must be a JSON object");

  static const std::vector<std::string> known{"experiment", "dim",    "maps",    "weights",  "matrix", "Q",
                                              "q_seed",     "eps",    "eps_grid", "steps",   "replicas",
                                              "seed",       "x0",     "y0",      "mi_n",     "n_draws",
                                              "format",     "mi_mode"};
  for (const auto& [key, _] : root.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError(key, "unknown field");

  ExperimentConfig c;
  if (root.contains("experiment")) {
    const json& e = root["experiment"];
    if (!e.is_string()) throw ConfigError("experiment", "expected a string");
    c.experiment = e.get<std::string>();
    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), c.experiment) == kinds.end())
      throw ConfigError("experiment", "unknown kind '" + c.experiment + "'");
  }
  if (root.contains("dim")) {
    const long long s = integer(root["dim"], "dim");
    if (s < 2) throw ConfigError("dim", "need at least 2 states");
    c.dim = static_cast<std::size_t>(s);
  }

  const bool has_maps = root.contains("maps") || root.contains("weights");
  if (has_maps && root.contains("matrix"))
    throw ConfigError("matrix", "give either maps+weights or matrix, not both");
  if (has_maps) {
    if (!root.contains("maps")) throw ConfigError("maps", "required together with weights");
    if (!root.contains("weights")) throw ConfigError("weights", "required together with maps");
    const json& jm = root["maps"];
    const json& jw = root["weights"];
    if (!jm.is_array() || jm.empty()) throw ConfigError("maps", "expected a non-empty array of target arrays");
    if (!jw.is_array() || jw.size() != jm.size())
      throw ConfigError("weights", "expected an array with one weight per map");
    std::vector<std::vector<int>> maps;
    std::vector<double> weights;
    for (std::size_t i = 0; i < jm.size(); ++i) {
      const std::string mp = "maps[" + std::to_string(i) + "]";
      if (!jm[i].is_array() || jm[i].size() < 2) throw ConfigError(mp, "expected a target array of length >= 2");
      detail::check_dim(c, jm[i].size(), mp);
      std::vector<int> t;
      for (std::size_t k = 0; k < jm[i].size(); ++k) {
        const std::string tp = mp + "[" + std::to_string(k) + "]";
        const long long v = integer(jm[i][k], tp);
        if (v < 1 || v > static_cast<long long>(c.dim))
          throw ConfigError(tp, "state must lie in 1.." + std::to_string(c.dim));
        t.push_back(static_cast<int>(v - 1));
      }
      maps.push_back(std::move(t));
      weights.push_back(number(jw[i], "weights[" + std::to_string(i) + "]"));
    }
    c.maps = std::move(maps);
    c.weights = std::move(weights);
  } else if (root.contains("matrix")) {
    c.matrix = detail::square_matrix(root["matrix"], "matrix");
    detail::check_dim(c, static_cast<std::size_t>(c.matrix->rows()), "matrix");
  }

  if (root.contains("Q")) {
    const json& q = root["Q"];
    if (q.is_string()) {
      if (q.get<std::string>() != "random") throw ConfigError("Q", "expected a matrix or the string \"random\"");
      c.q_random = true;
      if (!root.contains("q_seed")) throw ConfigError("q_seed", "required when Q is \"random\"");
    } else {
      c.q = detail::square_matrix(q, "Q");
      detail::check_dim(c, static_cast<std::size_t>(c.q->rows()), "Q");
    }
  }
  if (root.contains("q_seed")) {
    if (!c.q_random) throw ConfigError("q_seed", "only meaningful when Q is \"random\"");
    const long long v = integer(root["q_seed"], "q_seed");
    if (v < 0) throw ConfigError("q_seed", "must be >= 0");
    c.q_seed = static_cast<std::uint64_t>(v);
  }

  if (root.contains("eps")) {
    const double e = number(root["eps"], "eps");
    if (!(e >= 0.0 && e <= kMaxEps)) throw ConfigError("eps", "must lie in [0, 0.5]");
    c.eps = e;
  }
  if (root.contains("eps_grid")) {
    const json& g = root["eps_grid"];
    if (!g.is_array() || g.empty()) throw ConfigError("eps_grid", "expected a non-empty array");
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::string p = "eps_grid[" + std::to_string(i) + "]";
      const double e = number(g[i], p);
      if (!(e >= 0.0 && e <= kMaxEps)) throw ConfigError(p, "must lie in [0, 0.5]");
      if (!c.eps_grid.empty() && e <= c.eps_grid.back()) throw ConfigError(p, "eps_grid must be strictly increasing");
      c.eps_grid.push_back(e);
    }
  } else {
    c.eps_grid = default_eps_grid();
  }
  if (c.eps.value_or(0.0) > 0.0 && !c.has_noise()) throw ConfigError("Q", "required when eps > 0");

  auto positive = [&](const char* key, long long lo) -> std::optional<long long> {
    if (!root.contains(key)) return std::nullopt;
    const long long v = integer(root[key], key);
    if (v < lo) throw ConfigError(key, "must be >= " + std::to_string(lo));
    return v;
  };
  if (auto v = positive("steps", 1)) c.steps = static_cast<long>(*v);
  if (auto v = positive("replicas", 1)) c.replicas = static_cast<int>(*v);
  if (auto v = positive("seed", 0)) c.seed = static_cast<std::uint64_t>(*v);
  if (auto v = positive("mi_n", 1)) c.mi_n = static_cast<int>(*v);
  if (auto v = positive("n_draws", 1)) c.n_draws = static_cast<int>(*v);
  for (const char* key : {"x0", "y0"}) {
    if (auto v = positive(key, 1)) {
      if (c.dim != 0 && *v > static_cast<long long>(c.dim))
        throw ConfigError(key, "state must lie in 1.." + std::to_string(c.dim));
      (std::string(key) == "x0" ? c.x0 : c.y0) = static_cast<int>(*v - 1);
    }
  }

  if (root.contains("format")) {
    const json& f = root["format"];
    if (f == "csv") c.format = OutputFormat::csv;
    else if (f == "json") c.format = OutputFormat::json;
    else throw ConfigError("format", "expected \"csv\" or \"json\"");
  }
  if (root.contains("mi_mode")) {
    const json& m = root["mi_mode"];
    if (m == "time") c.mi_mode = MiMode::time;
    else if (m == "eps") c.mi_mode = MiMode::eps;
    else throw ConfigError("mi_mode", "expected \"time\" or \"eps\"");
  }
  return c;
}

/// Reads a config file. A run manifest is accepted too: its "config" member is replayed.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
  if (root.is_object() && root.contains("config") && root.contains("prng")) return parse_config(root["config"]);
  return parse_config(root);
}

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Normalized echo of the effective configuration; parse_config(to_json(c)) == c.
inline json to_json(const ExperimentConfig& c) {
  json j = json::object();
  if (!c.experiment.empty()) j["experiment"] = c.experiment;
  if (c.dim) j["dim"] = c.dim;
  if (c.maps) {
    json maps = json::array();
    for (const auto& t : *c.maps) {
      json row = json::array();
      for (int v : t) row.push_back(v + 1);
      maps.push_back(std::move(row));
    }
    j["maps"] = std::move(maps);
    j["weights"] = *c.weights;
  }
  if (c.matrix) j["matrix"] = matrix_json(*c.matrix);
  if (c.q) j["Q"] = matrix_json(*c.q);
  if (c.q_random) {
    j["Q"] = "random";
    j["q_seed"] = c.q_seed;
  }
  if (c.eps) j["eps"] = *c.eps;
  if (c.has_noise()) j["eps_grid"] = c.eps_grid;
  j["steps"] = c.steps;
  j["replicas"] = c.replicas;
  j["seed"] = c.seed;
  if (c.dim) {
    j["x0"] = c.x0 + 1;
    j["y0"] = c.y0 + 1;
  }
  j["mi_n"] = c.mi_n;
  j["n_draws"] = c.n_draws;
  j["format"] = c.format == OutputFormat::csv ? "csv" : "json";
  j["mi_mode"] = c.mi_mode == MiMode::time ? "time" : "eps";
  return j;
}

// ---------------------------------------------------------------------------
// Model construction from a config.

inline RdsSpec make_rds(const ExperimentConfig& c) {
  if (c.maps) {
    std::vector<DeterministicMap> maps;
    for (const auto& t : *c.maps) maps.emplace_back(t);
    try {
      return RdsSpec(std::move(maps), *c.weights);
    } catch (const InvalidArgument& e) {
      throw ConfigError("weights", e.what());
    }
  }
  if (c.matrix) {
    try {
      return decompose_markov(StochMatrix(*c.matrix));
    } catch (const InvalidArgument& e) {
      throw ConfigError("matrix", e.what());
    }
  }
  throw ConfigError("maps", "this experiment needs maps+weights or matrix");
}

/// The configured generator. Without a Q the noise is never used (eps must be 0),
/// so any valid generator stands in.
inline GeneratorMatrix make_generator(const ExperimentConfig& c, std::size_t s) {
  if (c.q) {
    try {
      return GeneratorMatrix(*c.q);
    } catch (const InvalidArgument& e) {
      throw ConfigError("Q", e.what());
    }
  }
  return random_generator_matrix(s, c.q_random ? c.q_seed : 0);
}

inline RmsSpec make_rms(const ExperimentConfig& c, const RdsSpec& rds, double eps) {
  return RmsSpec(rds, make_generator(c, rds.dim()), eps);
}

inline double single_eps(const ExperimentConfig& c) { return c.eps.value_or(0.0); }

}  // namespace rdsync::exp
