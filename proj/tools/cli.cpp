#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "catfpca/errors.hpp"
#include "catfpca/export.hpp"
#include "catfpca/format.hpp"
#include "catfpca/ingestion.hpp"
#include "catfpca/mfpca.hpp"
#include "catfpca/simulation.hpp"

namespace catfpca::cli {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  if (grid == GridPolicy::uniform && cells < 1)
    throw ValidationError("grid policy 'uniform' needs --cells >= 1");
  if (grid != GridPolicy::uniform && cells != 0)
    throw ValidationError("--cells only applies to the uniform grid policy");
  if (max_cells < 1) throw ValidationError("max_cells must be positive");
  if (components && variance_target)
    throw ValidationError("give either a component count or a variance-fraction target, not both");
  if (components && *components < 0) throw ValidationError("component count must be non-negative");
  if (variance_target && !(*variance_target > 0.0 && *variance_target <= 1.0))
    throw ValidationError("variance-fraction target must lie in (0, 1]");
  if (tick && !(*tick > 0.0)) throw ValidationError("tick must be positive");
  if (!(band_c > 0.0)) throw ValidationError("band multiplier must be positive");
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("mode")) c.mode = protocol_from_string(j.at("mode").get<std::string>());
    if (j.contains("weights")) c.weights = weight_kind_from_string(j.at("weights").get<std::string>());
    if (j.contains("grid")) c.grid = grid_policy_from_string(j.at("grid").get<std::string>());
    c.cells = j.value("cells", c.cells);
    c.max_cells = j.value("max_cells", c.max_cells);
    if (j.contains("components")) c.components = j.at("components").get<int>();
    if (j.contains("variance_target")) c.variance_target = j.at("variance_target").get<double>();
    if (j.contains("tick")) c.tick = j.at("tick").get<double>();
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    c.band_c = j.value("band_c", c.band_c);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid run configuration: ") + e.what());
  }
  return c;
}

nlohmann::json echo(const RunConfig& c) {
  nlohmann::json j{{"weights", std::string(to_string(c.weights))},
                   {"grid", std::string(to_string(c.grid))},
                   {"cells", c.cells},
                   {"max_cells", c.max_cells},
                   {"band_c", c.band_c}};
  if (c.mode) j["mode"] = std::string(to_string(*c.mode));
  if (c.components) j["components"] = *c.components;
  if (c.variance_target) j["variance_target"] = *c.variance_target;
  if (c.tick) j["tick"] = *c.tick;
  return j;
}

namespace {

// Flags as typed on the command line; merged over an optional JSON config.
struct Flags {
  std::string config;
  std::string mode, weights, grid;
  int cells = 0, max_cells = 0, components = 0;
  double variance_target = 0.0, tick = 0.0, band_c = 0.0;
  std::string out_dir;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON file with run settings (flags override it)");
  cmd->add_option("--out-dir", f.out_dir, "Output directory");
}

void add_analysis(CLI::App* cmd, Flags& f) {
  cmd->add_option("--weights", f.weights, "equal | trace_normalizing | inverse_mean_probability");
  cmd->add_option("--grid", f.grid, "auto | exact-union | uniform");
  cmd->add_option("--cells", f.cells, "Cell count of the uniform grid");
  cmd->add_option("--max-cells", f.max_cells, "Largest exact grid before 'auto' falls back to uniform");
  cmd->add_option("--components", f.components, "Number of components to export");
  cmd->add_option("--variance-target", f.variance_target, "Export the fewest components reaching this fraction");
  cmd->add_option("--band-c", f.band_c, "Multiplier c of the p +/- c sqrt(lambda) phi bands");
}

RunConfig resolve(const CLI::App* cmd, const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ValidationError("cannot open config " + f.config);
    try {
      c = run_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("config " + f.config + " is not valid JSON: " + e.what());
    }
  }
  const auto given = [cmd](const char* name) {
    try {
      return cmd->count(name) > 0;
    } catch (const CLI::OptionNotFound&) {
      return false;
    }
  };
  if (given("--mode")) c.mode = protocol_from_string(f.mode);
  if (given("--weights")) c.weights = weight_kind_from_string(f.weights);
  if (given("--grid")) c.grid = grid_policy_from_string(f.grid);
  if (given("--cells")) c.cells = f.cells;
  if (given("--max-cells")) c.max_cells = f.max_cells;
  if (given("--components")) c.components = f.components;
  if (given("--variance-target")) c.variance_target = f.variance_target;
  if (given("--tick")) c.tick = f.tick;
  if (given("--band-c")) c.band_c = f.band_c;
  if (given("--out-dir")) c.out_dir = f.out_dir;
  if (given("--seed")) c.seed = f.seed;
  c.validate();
  return c;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create directory " + dir.string() + ": " + ec.message());
}

int cmd_ingest(const std::string& events, const std::string& sidecar, const std::string& panel_out,
               const std::string& report_out, bool drop_empty, const RunConfig& cfg, std::ostream& out) {
  IngestConfig ic = read_sidecar(sidecar);
  if (cfg.mode) ic.mode = *cfg.mode;
  if (cfg.tick) ic.tick = *cfg.tick;
  if (drop_empty) ic.drop_empty_tds = true;
  IngestReport report;
  const Panel panel = ingest(events, ic, report);
  const fs::path dir(cfg.out_dir);
  ensure_dir(dir);
  const fs::path panel_path = panel_out.empty() ? dir / "panel.json" : fs::path(panel_out);
  const fs::path report_path = report_out.empty() ? dir / "report.json" : fs::path(report_out);
  write_panel(panel_path, panel);
  const auto rj = to_json(report);
  open_output(report_path) << rj.dump(2) << '\n';
  out << rj.dump(2) << '\n';
  return ok;
}

int cmd_validate(const std::string& panel_path, std::ostream& out) {
  const Panel panel = read_panel(panel_path);
  const auto issues = validate_panel(panel);
  nlohmann::json j{{"ok", issues.empty()},
                   {"mode", std::string(to_string(panel.mode))},
                   {"trajectories", panel.size()},
                   {"issues", issues}};
  out << j.dump(2) << '\n';
  return issues.empty() ? ok : validation;
}

int cmd_mfpca(const std::string& panel_path, const RunConfig& cfg, std::ostream& out) {
  const Panel panel = read_panel(panel_path);
  if (cfg.mode && *cfg.mode != panel.mode)
    throw ValidationError("panel protocol " + std::string(to_string(panel.mode)) +
                          " differs from the configured mode");
  if (const auto issues = validate_panel(panel); !issues.empty())
    throw ValidationError("panel fails validation: " + issues.front());

  const GridChoice choice = choose_grid(panel, cfg.grid, cfg.cells, cfg.max_cells);
  const ProbabilityField field = estimate(panel, choice);
  const WeightScheme weights = compute_weights(field, cfg.weights);
  const MfpcaResult result = fit_mfpca(panel, field, weights);

  int k = result.components();
  if (cfg.components) k = std::min(k, *cfg.components);
  if (cfg.variance_target && k > 0) k = components_for_fraction(result, *cfg.variance_target);

  const fs::path dir(cfg.out_dir);
  ensure_dir(dir);
  open_output(dir / "result.json") << result_to_json(result, k, echo(cfg)).dump(2) << '\n';
  { auto f = open_output(dir / "scores.csv"); write_scores_csv(f, result, k); }
  { auto f = open_output(dir / "eigenfunctions.csv"); write_eigenfunctions_csv(f, result, k); }
  { auto f = open_output(dir / "bands.csv"); write_bands_csv(f, result, k, cfg.band_c); }
  { auto f = open_output(dir / "mean.csv"); write_curves_csv(f, field.states, field.grid, field.mean); }
  { auto f = open_output(dir / "variance.csv"); write_curves_csv(f, field.states, field.grid, field.variance()); }
  { auto f = open_output(dir / "selection_count.csv"); write_selection_count_csv(f, field.grid, selection_count_curve(field)); }
  const std::string summary = summary_table(result, k);
  open_output(dir / "summary.txt") << summary;
  out << summary;
  return ok;
}

int cmd_simulate(const std::string& spec_path, int n, const RunConfig& cfg, std::ostream& out) {
  std::ifstream in(spec_path);
  if (!in) throw ValidationError("cannot open process spec " + spec_path);
  ProcessSpec spec;
  try {
    spec = process_spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("process spec is not valid JSON: " + std::string(e.what()));
  }
  if (cfg.tick) spec.tick = *cfg.tick;
  const auto rows = simulate_events(spec, n, cfg.seed);
  const fs::path dir(cfg.out_dir);
  ensure_dir(dir);
  { auto f = open_output(dir / "events.csv"); write_events_csv(f, rows); }
  open_output(dir / "sidecar.json") << to_json(simulation_ingest_config(spec, n)).dump(2) << '\n';
  out << nlohmann::json{{"trajectories", n}, {"rows", rows.size()}, {"seed", cfg.seed}}.dump() << '\n';
  return ok;
}

int cmd_oracle_check(const std::string& panel_path, const RunConfig& cfg, double tolerance,
                     int max_dimension, std::ostream& out) {
  const Panel panel = read_panel(panel_path);
  const CellGrid grid = union_grid(panel);
  const ProbabilityField fast = estimate_field(panel, grid);
  const ProbabilityField slow = oracle_covariance(panel, grid);
  const double mean_dev = (fast.mean - slow.mean).cwiseAbs().maxCoeff();
  const double cov_dev = (fast.covariance - slow.covariance).cwiseAbs().maxCoeff();
  nlohmann::json j{{"cells", grid.size()}, {"mean_deviation", mean_dev}, {"kernel_deviation", cov_dev}};
  bool pass = mean_dev <= tolerance && cov_dev <= tolerance;
  const int dim = panel.states.size() * grid.size();
  if (dim <= max_dimension) {
    const WeightScheme w = compute_weights(fast, cfg.weights);
    const auto dec = eigendecompose(assemble_operator(fast, w), h_metric(grid, w));
    const Eigen::VectorXd reference = oracle_spectrum(slow, w);
    const double ev_dev = (dec.values - reference).cwiseAbs().maxCoeff();
    j["eigenvalue_deviation"] = ev_dev;
    pass = pass && ev_dev <= 1e-8;
  } else {
    j["eigenvalue_deviation"] = nullptr;
    j["note"] = "operator dimension " + std::to_string(dim) + " exceeds --max-dimension; eigenvalue check skipped";
  }
  j["ok"] = pass;
  out << j.dump(2) << '\n';
  return pass ? ok : numerical;
}

void report_error(std::ostream& err, const char* kind, const std::string& message) {
  err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multivariate functional PCA of categorical trajectories", "catfpca"};
  app.require_subcommand(1);

  Flags f;
  std::string events, sidecar, panel_out, report_out, panel_in, spec_path;
  bool drop_empty = false;
  int n = 0;
  double tolerance = 1e-12;
  int max_dimension = 400;

  auto* ingest = app.add_subcommand("ingest", "Parse an event log into a normalized panel");
  ingest->add_option("--events", events, "Event CSV")->required();
  ingest->add_option("--sidecar", sidecar, "JSON sidecar (descriptors, mode, tasting end)")->required();
  ingest->add_option("--panel", panel_out, "Output panel file (default <out-dir>/panel.json)");
  ingest->add_option("--report", report_out, "Output report (default <out-dir>/report.json)");
  ingest->add_option("--mode", f.mode, "Override the sidecar protocol: TDS | TCATA");
  ingest->add_option("--tick", f.tick, "Time rounding tick in normalized units");
  ingest->add_flag("--drop-empty", drop_empty, "Drop TDS sessions without clicks instead of failing");
  add_common(ingest, f);

  auto* validate = app.add_subcommand("validate", "Check the structural invariants of a panel");
  validate->add_option("--panel", panel_in, "Panel file")->required();

  auto* mfpca = app.add_subcommand("mfpca", "Estimate, decompose and export");
  mfpca->add_option("--panel", panel_in, "Panel file")->required();
  mfpca->add_option("--mode", f.mode, "Expected protocol: TDS | TCATA");
  add_common(mfpca, f);
  add_analysis(mfpca, f);

  auto* simulate = app.add_subcommand("simulate", "Simulate an event log from a process spec");
  simulate->add_option("--spec", spec_path, "Process spec JSON")->required();
  simulate->add_option("--n", n, "Number of trajectories")->required()->check(CLI::PositiveNumber);
  simulate->add_option("--seed", f.seed, "Random seed");
  simulate->add_option("--tick", f.tick, "Time rounding tick in normalized units");
  add_common(simulate, f);

  auto* oracle = app.add_subcommand("oracle-check", "Compare the estimator with the brute-force oracle");
  oracle->add_option("--panel", panel_in, "Panel file")->required();
  oracle->add_option("--weights", f.weights, "equal | trace_normalizing | inverse_mean_probability");
  oracle->add_option("--tolerance", tolerance, "Largest allowed kernel deviation");
  oracle->add_option("--max-dimension", max_dimension, "Skip the eigenvalue check above this q*m");
  oracle->add_option("--config", f.config, "JSON file with run settings");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return usage;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(events, sidecar, panel_out, report_out, drop_empty, resolve(ingest, f), out);
    if (validate->parsed()) return cmd_validate(panel_in, out);
    if (mfpca->parsed()) return cmd_mfpca(panel_in, resolve(mfpca, f), out);
    if (simulate->parsed()) return cmd_simulate(spec_path, n, resolve(simulate, f), out);
    if (oracle->parsed()) return cmd_oracle_check(panel_in, resolve(oracle, f), tolerance, max_dimension, out);
  } catch (const ValidationError& e) {
    report_error(err, "validation", e.what());
    return validation;
  } catch (const DomainError& e) {
    report_error(err, "validation", e.what());
    return validation;
  } catch (const NumericalError& e) {
    report_error(err, "numerical", e.what());
    return numerical;
  }
  return usage;
}

}  // namespace catfpca::cli
