#ifndef CATFPCA_SIMULATION_HPP
#define CATFPCA_SIMULATION_HPP

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "catfpca/estimation.hpp"
#include "catfpca/ingestion.hpp"

namespace catfpca {

/// Portable random stream: std::mt19937_64 (fully specified by the C++
/// standard) seeded through SplitMix64, with hand-written transforms so no
/// implementation-defined std distribution is involved.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent stream for item `index` of a run seeded with `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next() { return engine_(); }
  double uniform();  // in the open interval (0, 1), 53-bit resolution
  double exponential(double rate);
  int categorical(const Eigen::VectorXd& probabilities);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

struct Sojourn {
  enum class Kind { exponential, uniform };
  Kind kind = Kind::exponential;
  double rate = 1.0;   // exponential
  double lower = 0.0;  // uniform
  double upper = 1.0;

  double draw(Rng& rng) const;
};

/// Independent alternating on/off renewal process of one descriptor (TCATA).
struct OnOffSpec {
  Sojourn on;
  Sojourn off;
  double initial_on = 0.0;
};

/// Semi-Markov generator for TDS panels, or a per-state on/off overlay for
/// TCATA panels. A transition row of zeros makes its state absorbing.
struct ProcessSpec {
  StateSpace states;
  Protocol mode = Protocol::tds;
  double horizon = 1.0;
  Eigen::VectorXd initial;
  Eigen::MatrixXd transitions;
  std::vector<Sojourn> sojourn;
  std::vector<OnOffSpec> overlay;
  double tick = 1e-6;

  void validate() const;
};

ProcessSpec process_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProcessSpec& spec);

/// Raw event log of n simulated sessions (subjects sim000000, ..., product "sim").
std::vector<EventRecord> simulate_events(const ProcessSpec& spec, int n, std::uint64_t seed);

// Sidecar describing the simulated event log.
IngestConfig simulation_ingest_config(const ProcessSpec& spec, int n);

/// Simulated events pushed through the regular ingestion path, so that
/// writing them out and ingesting the files gives back the same panel.
Panel simulate_panel(const ProcessSpec& spec, int n, std::uint64_t seed);

/// Brute-force estimator: evaluates every trajectory at cell midpoints and
/// averages products with explicit loops. Shares no code with estimate_field.
ProbabilityField oracle_covariance(const Panel& panel, const CellGrid& grid);

/// Eigenvalues, descending, of the weighted operator built entry by entry
/// from `field` and solved by cyclic Jacobi rotations.
Eigen::VectorXd oracle_spectrum(const ProbabilityField& field, const WeightScheme& weights);

struct ConsistencyRow {
  int n = 0;
  std::vector<double> mean_errors;      // ||p_hat - p||_H per replicate
  std::vector<double> operator_errors;  // ||Gamma_hat - Gamma||_op per replicate
  double median_mean_error = 0.0;
  double median_operator_error = 0.0;
};

struct ConsistencyOptions {
  int replicates = 20;
  int operator_cells = 16;     // uniform grid for the operator comparison
  int reference_n = 20000;     // proxy truth when no closed form is known
  int reference_cells = 1000;  // grid for proxy-truth mean comparison
};

struct ConsistencyTable {
  bool analytic = false;
  std::vector<ConsistencyRow> rows;
};

/// Estimation error against the truth for each sample size. Two-state TDS
/// chains with exponential sojourns use closed-form p(t) and kernel; other
/// specs fall back to a large reference run. Equal weights throughout.
ConsistencyTable consistency_experiment(const ProcessSpec& spec, const std::vector<int>& n_values,
                                        std::uint64_t seed, const ConsistencyOptions& options = {});

double median(std::vector<double> values);

}  // namespace catfpca

#endif  // CATFPCA_SIMULATION_HPP
