#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "relwalk/genwalk.hpp"
#include "relwalk/kgdata.hpp"
#include "relwalk/model.hpp"
#include "relwalk/trainer.hpp"

namespace relwalk {

/// Carries every problem found while validating a run configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Named hyperparameter presets: FB15K237, WN18RR, FB13 and custom. The
/// custom preset leaves dim and learning rate at 0 so they must be given.
Hyperparams config_defaults(const std::string& preset);
std::vector<std::string> preset_names();

/// Parses `key = value` lines (`#` and `;` start comments) into `--key=value`
/// arguments. Malformed lines are appended to `problems`.
std::vector<std::string> parse_config_text(std::istream& in, std::vector<std::string>& problems);

struct RunConfig {
  std::string subcommand;
  std::string preset = "custom";
  DatasetPaths data;  // empty path = not given
  std::filesystem::path model;
  Hyperparams hyper;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string split = "test";
  // compress
  std::vector<std::size_t> ranks;
  std::size_t rank = 0;  // rank of the saved compressed model, 0 = largest swept
  FactorMode factor_mode = FactorMode::svd;
  // diagnose
  std::size_t num_c = 1000;
  std::size_t subset_size = 10000;
  // validate-theory
  WorldConfig world;
  std::size_t num_triples = 200;
  std::size_t n_mc = 10000;
  std::size_t concentration_c = 500;
  bool dry_run = false;
};

/// Resolved configuration as recorded next to every artifact. The output
/// directory is left out so reruns elsewhere produce identical files.
nlohmann::json to_json(const RunConfig& c);

/// Every problem with `c`, including missing input files.
std::vector<std::string> validate(const RunConfig& c);

/// Runs a validated configuration; writes artifacts under c.out and a short
/// summary to `log`.
void execute(const RunConfig& c, std::ostream& log);

/// Full command line handling. Returns the process exit status: 0 on
/// success, 2 for invalid configuration, 1 for failures while running.
/// Errors are reported on `err` as one JSON line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace relwalk
