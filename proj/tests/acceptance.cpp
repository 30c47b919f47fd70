// Acceptance checks. Prints one line per criterion and exits non-zero when
// any criterion fails. Criterion 6 reads the public sensory dataset from
// $CATFPCA_DATASET_DIR (tds/ and tcata/ subdirectories, each holding
// events.csv and sidecar.json) and is skipped when that variable is unset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "catfpca/errors.hpp"
#include "catfpca/mfpca.hpp"
#include "catfpca/simulation.hpp"
#include "cli.hpp"
#include "support.hpp"

using namespace catfpca;
namespace fs = std::filesystem;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

Verdict fail(std::string d) { return {Outcome::fail, std::move(d)}; }

std::string fmt(const char* pattern, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::RowVectorXd stacked_mean(const ProbabilityField& f) {
  Eigen::RowVectorXd mu(f.mean.size());
  for (int j = 0; j < f.num_states(); ++j) mu.segment(static_cast<Eigen::Index>(j) * f.cells(), f.cells()) = f.mean.row(j);
  return mu;
}

WeightScheme weights_for(const ProbabilityField& f, int rep) {
  const WeightKind kinds[] = {WeightKind::equal, WeightKind::trace_normalizing, WeightKind::inverse_mean_probability};
  try {
    return compute_weights(f, kinds[rep % 3]);
  } catch (const ValidationError&) {
    return equal_weights(f.num_states());
  }
}

Verdict property_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(101);
  double gram = 0, trace_rel = 0, mercer_rel = 0, score_rel = 0, rowsum = 0, parseval = 0;
  const int panels = 60;
  for (int rep = 0; rep < panels; ++rep) {
    const Protocol mode = rep % 2 ? Protocol::tds : Protocol::tcata;
    const Panel p = testing::random_panel(gen, mode);
    const auto f = estimate_field(p, union_grid(p));
    const auto w = weights_for(f, rep);
    const auto r = fit_mfpca(p, f, w);
    const Eigen::VectorXd metric = r.metric();
    const int R = r.components();
    const double n = static_cast<double>(p.size());

    const Eigen::MatrixXd g = r.eigenfunctions.transpose() * metric.asDiagonal() * r.eigenfunctions;
    if (R > 0) gram = std::max(gram, (g - Eigen::MatrixXd::Identity(R, R)).cwiseAbs().maxCoeff());

    double integrated = 0.0;
    const Eigen::MatrixXd var = f.variance();
    for (int j = 0; j < f.num_states(); ++j)
      integrated += w.weights(j) * (var.row(j).transpose().array() * f.grid.widths().array()).sum();
    const double trace = r.spectrum.sum();
    if (integrated > 0) trace_rel = std::max(trace_rel, std::abs(trace - integrated) / integrated);
    if (integrated > 0) mercer_rel = std::max(mercer_rel, mercer_check(r, f) / integrated);

    for (int k = 0; k < R; ++k) {
      const double v = r.scores.col(k).squaredNorm() / n;
      score_rel = std::max(score_rel, std::abs(v - r.eigenvalues(k)) / r.eigenvalues(k));
    }

    if (mode == Protocol::tds) {
      const int q = f.num_states(), m = f.cells();
      for (int l = 0; l < q; ++l)
        for (int a = 0; a < m; ++a)
          for (int b = 0; b < m; ++b) {
            double s = 0.0;
            for (int j = 0; j < q; ++j) s += f.gamma(j, l, a, b);
            rowsum = std::max(rowsum, std::abs(s));
          }
    }

    // ||X_i - mu||^2 = sum_{r<=k} xi_ir^2 + ||X_i - X_i^(k)||^2 for every k.
    const Eigen::MatrixXd x = indicator_design(p, f.grid, true);
    const Eigen::RowVectorXd mu = stacked_mean(f);
    for (int i = 0; i < static_cast<int>(p.size()); ++i) {
      const Eigen::VectorXd c = (x.row(i) - mu).transpose();
      const double total = h_inner(c, c, metric);
      for (int k = 0; k <= R; ++k) {
        const Eigen::VectorXd resid = c - r.eigenfunctions.leftCols(k) * r.scores.row(i).head(k).transpose();
        const double lhs = r.scores.row(i).head(k).squaredNorm() + h_inner(resid, resid, metric);
        parseval = std::max(parseval, std::abs(lhs - total) / std::max(total, 1e-300));
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = gram <= 1e-8 && trace_rel <= 1e-8 && mercer_rel <= 1e-8 && score_rel <= 1e-8 && rowsum <= 1e-12 &&
                  parseval <= 1e-8 && secs < 60.0;
  std::ostringstream d;
  d << panels << " panels; gram " << fmt("%.1e", gram) << ", trace " << fmt("%.1e", trace_rel) << ", mercer "
    << fmt("%.1e", mercer_rel) << ", score variance " << fmt("%.1e", score_rel) << ", TDS row sums "
    << fmt("%.1e", rowsum) << ", Parseval " << fmt("%.1e", parseval) << ", " << fmt("%.1f", secs) << " s";
  return {ok ? Outcome::pass : Outcome::fail, d.str()};
}

Verdict oracle_equivalence() {
  std::mt19937_64 gen(202);
  double kernel = 0.0, mean = 0.0, spectrum = 0.0;
  const int panels = 100;
  for (int rep = 0; rep < panels; ++rep) {
    const Panel p = testing::random_panel(gen, rep % 2 ? Protocol::tds : Protocol::tcata);
    const CellGrid grid = union_grid(p);
    const auto fast = estimate_field(p, grid);
    const auto slow = oracle_covariance(p, grid);
    mean = std::max(mean, (fast.mean - slow.mean).cwiseAbs().maxCoeff());
    kernel = std::max(kernel, (fast.covariance - slow.covariance).cwiseAbs().maxCoeff());
    const auto w = weights_for(fast, rep);
    const auto r = fit_mfpca(p, fast, w);
    spectrum = std::max(spectrum, (r.spectrum - oracle_spectrum(slow, w)).cwiseAbs().maxCoeff());
  }
  const bool ok = mean <= 1e-12 && kernel <= 1e-12 && spectrum <= 1e-8;
  std::ostringstream d;
  d << panels << " panels; mean " << fmt("%.1e", mean) << ", kernel " << fmt("%.1e", kernel)
    << ", eigenvalues vs Jacobi " << fmt("%.1e", spectrum);
  return {ok ? Outcome::pass : Outcome::fail, d.str()};
}

Verdict mirror_fixture() {
  const Panel p = testing::mirror_panel();
  const auto f = estimate_field(p, union_grid(p));
  const auto w = equal_weights(2);
  const auto r = fit_mfpca(p, f, w);
  const Eigen::VectorXd nw = w.normalized();
  bool ok = r.components() == 1 && nw(0) == 0.5 && nw(1) == 0.5;
  int nonzero = 0;
  for (int k = 0; k < r.spectrum.size(); ++k) nonzero += r.spectrum(k) > 1e-12;
  ok = ok && nonzero == 1 && std::abs(r.eigenvalues(0) - 0.25) <= 1e-12;
  ok = ok && std::abs(std::abs(r.scores(0, 0)) - 0.5) <= 1e-12 && std::abs(r.scores(0, 0) + r.scores(1, 0)) <= 1e-12;
  ok = ok && std::abs(r.importance(0, 0) - 0.5) <= 1e-12 && std::abs(r.importance(0, 1) - 0.5) <= 1e-12;
  const Eigen::MatrixXd x = indicator_design(p, f.grid, true);
  double resid = 0.0;
  for (int i = 0; i < 2; ++i) {
    const Eigen::MatrixXd rec = reconstruct(r, i, 1);
    for (int j = 0; j < 2; ++j)
      for (int a = 0; a < 2; ++a) resid = std::max(resid, std::abs(rec(j, a) - x(i, j * 2 + a)));
  }
  ok = ok && resid <= 1e-10;
  std::ostringstream d;
  d << "lambda " << fmt("%.17g", r.components() ? r.eigenvalues(0) : 0.0) << ", scores "
    << fmt("%.6f", r.components() ? r.scores(0, 0) : 0.0) << "/" << fmt("%.6f", r.components() ? r.scores(1, 0) : 0.0)
    << ", importance " << fmt("%.6f", r.components() ? r.importance(0, 0) : 0.0) << "/"
    << fmt("%.6f", r.components() ? r.importance(0, 1) : 0.0) << ", k=1 residual " << fmt("%.1e", resid);
  return {ok ? Outcome::pass : Outcome::fail, d.str()};
}

// Sum over samples of the squared H-distance between X_i - mu and its
// H-orthogonal projection onto the span of the H-orthonormal columns of `frame`.
double projection_residual(const Eigen::MatrixXd& centered, const Eigen::MatrixXd& frame, const Eigen::VectorXd& metric) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < centered.rows(); ++i) {
    const Eigen::VectorXd c = centered.row(i).transpose();
    Eigen::VectorXd proj = Eigen::VectorXd::Zero(c.size());
    for (Eigen::Index r = 0; r < frame.cols(); ++r) proj += h_inner(c, frame.col(r), metric) * frame.col(r);
    const Eigen::VectorXd d = c - proj;
    total += h_inner(d, d, metric);
  }
  return total;
}

Verdict kl_optimality() {
  std::mt19937_64 gen(303);
  std::normal_distribution<double> normal;
  const int panels = 20;
  int comparisons = 0, violations = 0;
  double worst = -1e300;
  for (int rep = 0; rep < panels; ++rep) {
    const Panel p = testing::random_panel(gen, rep % 2 ? Protocol::tds : Protocol::tcata, {8, 3, 12, 3, 2});
    const auto f = estimate_field(p, union_grid(p));
    const auto w = weights_for(f, rep);
    MfpcaOptions all;
    all.keep_null = true;
    const auto r = fit_mfpca(p, f, w, all);
    const Eigen::VectorXd metric = r.metric();
    const Eigen::MatrixXd centered = indicator_design(p, f.grid, true).rowwise() - stacked_mean(f);
    const Eigen::Index dim = metric.size();
    const double scale = std::max(1.0, projection_residual(centered, Eigen::MatrixXd(dim, 0), metric));
    const Eigen::VectorXd inv_root = metric.cwiseSqrt().cwiseInverse();
    for (int k : {1, 2}) {
      if (k > dim) continue;
      const double best = projection_residual(centered, r.eigenfunctions.leftCols(k), metric);
      auto compare = [&](const Eigen::MatrixXd& frame) {
        const double alt = projection_residual(centered, frame, metric);
        ++comparisons;
        worst = std::max(worst, (best - alt) / scale);
        if (best > alt + 1e-10 * scale) ++violations;
      };
      for (Eigen::Index a = 0; a < dim; ++a) {
        if (k == 1) {
          compare(r.eigenfunctions.col(a));
        } else {
          for (Eigen::Index b = a + 1; b < dim; ++b) {
            Eigen::MatrixXd frame(dim, 2);
            frame << r.eigenfunctions.col(a), r.eigenfunctions.col(b);
            compare(frame);
          }
        }
      }
      for (int t = 0; t < 200; ++t) {
        const Eigen::MatrixXd g = Eigen::MatrixXd::NullaryExpr(dim, k, [&] { return normal(gen); });
        const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(dim, k);
        compare(inv_root.asDiagonal() * q);
      }
    }
  }
  std::ostringstream d;
  d << panels << " panels, " << comparisons << " alternative frames, " << violations
    << " beat the top-k eigenspace; largest relative advantage " << fmt("%.1e", worst);
  return {violations == 0 ? Outcome::pass : Outcome::fail, d.str()};
}

Verdict consistency() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = process_spec_from_json(nlohmann::json{
      {"states", {"A", "B"}},
      {"mode", "TDS"},
      {"horizon", 1.0},
      {"initial", {1.0, 0.0}},
      {"transitions", {{0.0, 1.0}, {1.0, 0.0}}},
      {"sojourn", {{{"distribution", "exponential"}, {"rate", 1.0}}, {{"distribution", "exponential"}, {"rate", 1.0}}}}});
  const auto table = consistency_experiment(spec, {250, 1000, 4000}, 2718);
  const double secs = seconds_since(t0);
  bool ok = table.analytic && secs < 120.0;
  std::ostringstream d;
  d << "median ||p_hat - p||_H";
  for (const auto& row : table.rows) d << " n=" << row.n << ":" << fmt("%.3e", row.median_mean_error);
  d << "; ratios";
  for (std::size_t s = 1; s < table.rows.size(); ++s) {
    const double ratio = table.rows[s].median_mean_error / table.rows[s - 1].median_mean_error;
    ok = ok && ratio >= 0.35 && ratio <= 0.7;
    d << " " << fmt("%.3f", ratio);
  }
  d << "; " << fmt("%.1f", secs) << " s";
  return {ok ? Outcome::pass : Outcome::fail, d.str()};
}

int state_index(const StateSpace& states, const std::string& label) {
  const auto j = states.index_of(label);
  if (!j) throw ValidationError("dataset has no descriptor '" + label + "'");
  return *j;
}

struct DatasetRun {
  Panel panel;
  ProbabilityField field;
  MfpcaResult equal;
};

DatasetRun analyse(const fs::path& dir) {
  IngestReport report;
  const IngestConfig config = read_sidecar(dir / "sidecar.json");
  DatasetRun run;
  run.panel = ingest(dir / "events.csv", config, report);
  run.field = estimate(run.panel, choose_grid(run.panel, GridPolicy::automatic));
  run.equal = fit_mfpca(run.panel, run.field, equal_weights(run.field.num_states()));
  return run;
}

Verdict dataset_replication() {
  const char* root = std::getenv("CATFPCA_DATASET_DIR");
  if (root == nullptr || !fs::exists(fs::path(root) / "tds" / "events.csv") ||
      !fs::exists(fs::path(root) / "tcata" / "events.csv"))
    return {Outcome::skip, "dataset not available (set CATFPCA_DATASET_DIR to a directory with tds/ and tcata/)"};
  std::ostringstream d;
  bool ok = true;
  try {
    const DatasetRun tds = analyse(fs::path(root) / "tds");
    const Eigen::VectorXd prop = tds.equal.proportions();
    const double target[] = {0.23, 0.11, 0.07, 0.06};
    d << "TDS proportions";
    for (int k = 0; k < 4; ++k) {
      const double v = k < prop.size() ? prop(k) : 0.0;
      ok = ok && std::abs(v - target[k]) <= 0.02;
      d << " " << fmt("%.3f", v);
    }
    const std::map<std::string, double> importance{{"Sweet", 0.56}, {"Salty", 0.22}, {"Lemon", 0.10}, {"Acid", 0.08}};
    d << "; dim-1 importance";
    for (const auto& [label, value] : importance) {
      const double v = tds.equal.importance(0, state_index(tds.panel.states, label));
      ok = ok && std::abs(v - value) <= 0.03;
      d << " " << label << "=" << fmt("%.3f", v);
    }
    const std::map<std::string, double> trace_weights{{"Acid", 0.02},     {"Basil", 0.06}, {"Bitter", 0.05},
                                                      {"Lemon", 0.02},    {"Licorice", 0.21}, {"Mint", 0.60},
                                                      {"Salty", 0.03},    {"Sweet", 0.01}};
    const Eigen::VectorXd tw = compute_weights(tds.field, WeightKind::trace_normalizing).normalized();
    d << "; trace weights";
    for (const auto& [label, value] : trace_weights) {
      const double v = tw(state_index(tds.panel.states, label));
      ok = ok && std::abs(v - value) <= 0.02;
      d << " " << label << "=" << fmt("%.2f", v);
    }

    const DatasetRun tcata = analyse(fs::path(root) / "tcata");
    const Eigen::VectorXd tp = tcata.equal.proportions();
    d << "; TCATA proportions";
    const double ttarget[] = {0.19, 0.12};
    for (int k = 0; k < 2; ++k) {
      const double v = k < tp.size() ? tp(k) : 0.0;
      ok = ok && std::abs(v - ttarget[k]) <= 0.02;
      d << " " << fmt("%.3f", v);
    }
    const Eigen::VectorXd count = selection_count_curve(tcata.field);
    Eigen::Index at = 0;
    const double peak = count.maxCoeff(&at);
    const double where = 0.5 * (tcata.field.grid.left(static_cast<int>(at)) + tcata.field.grid.right(static_cast<int>(at)));
    ok = ok && peak >= 1.3 && peak <= 1.7 && where >= 0.5 && where <= 0.7;
    d << "; selection count max " << fmt("%.3f", peak) << " at t=" << fmt("%.3f", where);
  } catch (const std::exception& e) {
    return fail(std::string("dataset analysis failed: ") + e.what());
  }
  return {ok ? Outcome::pass : Outcome::fail, d.str()};
}

Verdict determinism() {
  const fs::path dir = testing::scratch_dir("acceptance_determinism");
  std::mt19937_64 gen(707);
  write_panel(dir / "panel.json", testing::random_panel(gen, Protocol::tds, {10, 4, 20, 8, 3}));
  std::ostringstream out, err;
  for (const char* sub : {"first", "second"}) {
    const int code = cli::run({"mfpca", "--panel", (dir / "panel.json").string(), "--weights", "trace_normalizing",
                               "--out-dir", (dir / sub).string()},
                              out, err);
    if (code != cli::ok) return fail("mfpca run failed: " + err.str());
  }
  int files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(dir / "first")) {
    ++files;
    if (testing::read_file(entry.path()) != testing::read_file(dir / "second" / entry.path().filename())) ++differing;
  }
  std::ostringstream d;
  d << files << " output files compared, " << differing << " differ";
  return {files > 0 && differing == 0 ? Outcome::pass : Outcome::fail, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"property suite", property_suite},
      {"oracle equivalence", oracle_equivalence},
      {"mirror fixture", mirror_fixture},
      {"KL optimality", kl_optimality},
      {"consistency rate", consistency},
      {"dataset replication", dataset_replication},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    Verdict v;
    try {
      v = criteria[c].second();
    } catch (const std::exception& e) {
      v = fail(std::string("exception: ") + e.what());
    }
    const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::fail ? "FAIL" : "SKIP";
    failures += v.outcome == Outcome::fail;
    std::printf("criterion %zu %-20s %s: %s\n", c + 1, criteria[c].first.c_str(), tag, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
