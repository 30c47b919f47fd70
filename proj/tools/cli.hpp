#ifndef CATFPCA_TOOLS_CLI_HPP
#define CATFPCA_TOOLS_CLI_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "catfpca/estimation.hpp"

namespace catfpca::cli {

enum ExitCode : int { ok = 0, usage = 1, validation = 2, numerical = 3 };

/// Settings shared by the subcommands. Loadable from JSON; explicit flags win.
struct RunConfig {
  std::optional<Protocol> mode;
  WeightKind weights = WeightKind::equal;
  GridPolicy grid = GridPolicy::automatic;
  int cells = 0;
  int max_cells = 512;
  std::optional<int> components;
  std::optional<double> variance_target;
  std::optional<double> tick;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  double band_c = 1.0;

  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
// Analysis settings only; paths are left out so outputs do not depend on them.
nlohmann::json echo(const RunConfig& config);

/// Entry point of the command-line tool; returns the process exit code.
/// Errors are reported on `err` as one JSON object per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace catfpca::cli

#endif  // CATFPCA_TOOLS_CLI_HPP
