// rdsync: experiment front end. See README for the config format.
//
// Exit status: 0 ok, 1 analytical error, 2 usage/config error, 3 oracle failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rdsync/experiments/commands.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kAnalytical = 1;
constexpr int kUsage = 2;
constexpr int kOracle = 3;

constexpr const char* kOutEnv = "RDSYNC_OUT_DIR";

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string format;
  std::string mode;
  std::optional<long> steps;
};

std::filesystem::path output_dir(const Options& o, const std::string& command) {
  if (!o.out.empty()) return o.out;
  const char* env = std::getenv(kOutEnv);
  return std::filesystem::path(env && *env ? env : "rdsync-out") / command;
}

int run(const std::string& command, const Options& o) {
  using namespace rdsync::exp;
  ExperimentConfig c = o.config.empty() ? parse_config(json::object()) : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.format.empty()) c.format = o.format == "json" ? OutputFormat::json : OutputFormat::csv;
  if (!o.mode.empty()) c.mi_mode = o.mode == "eps" ? MiMode::eps : MiMode::time;
  if (o.steps) {
    if (*o.steps < 1) throw ConfigError("--steps", "must be >= 1");
    c.steps = *o.steps;
  }
  if (!c.experiment.empty() && c.experiment != command)
    std::cerr << "note: config is labelled '" << c.experiment << "', running '" << command << "'\n";

  const CommandResult r = run_command(command, c, o.threads);
  const auto dir = output_dir(o, command);
  write_outputs(dir, command, c, r);
  std::cout << r.summary.dump(2) << "\n";
  for (const auto& f : r.files) std::cout << "wrote " << (dir / f.name).string() << "\n";
  std::cout << "wrote " << (dir / "manifest.json").string() << "\n";
  return r.oracle_failed ? kOracle : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synchronization analysis of random dynamical systems and their noisy Markov counterparts"};
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("--config", o.config, "JSON config (or a manifest.json to replay)");
  app.add_option("--out", o.out, std::string("output directory (default: $") + kOutEnv + "/<command>)");
  app.add_option("--seed", o.seed, "master seed, overrides the config");
  app.add_option("--threads", o.threads, "worker threads")->check(CLI::Range(1U, 1024U));
  app.add_option("--format", o.format, "table format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--steps", o.steps, "trajectory length, overrides the config");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"build", "write M, N, V, W, their collapsed forms and the renewal prediction"},
      {"sync-rate", "empirical vs predicted synchronization rate over eps_grid"},
      {"mi", "exact mutual information versus time or eps"},
      {"n-variability", "diagonal of exp(eps Q) over random generators"},
      {"simulate", "one coupled trajectory and its cycle times"},
      {"decompose", "greedy decomposition of a stochastic matrix into maps"},
      {"oracle", "brute-force self-test battery"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    if (name == "mi") sub->add_option("--mode", o.mode, "time or eps")->check(CLI::IsMember({"time", "eps"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    return run(command, o);
  } catch (const rdsync::exp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const rdsync::InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kUsage;
  } catch (const rdsync::NotConverged& e) {
    std::cerr << "analytical error: " << e.what() << "\n";
    return kAnalytical;
  } catch (const rdsync::InfiniteExpectedTime& e) {
    std::cerr << "analytical error: " << e.what() << "\n";
    return kAnalytical;
  } catch (const rdsync::InsufficientSamples& e) {
    std::cerr << "analytical error: " << e.what() << "\n";
    return kAnalytical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAnalytical;
  }
}
