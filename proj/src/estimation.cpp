#include "catfpca/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "catfpca/errors.hpp"
#include "catfpca/format.hpp"

namespace catfpca {

namespace {

void check_support(const Panel& panel, const CellGrid& grid) {
  if (panel.items.empty()) throw ValidationError("cannot estimate from an empty panel");
  for (std::size_t i = 0; i < panel.items.size(); ++i) {
    const auto& tr = panel.items[i].trajectory;
    if (tr.start() != grid.start() || tr.horizon() != grid.horizon())
      throw ValidationError("grid mismatch: trajectory " + std::to_string(i) +
                            " is not supported on the grid interval");
  }
}

int node_index(const CellGrid& grid, double t, std::size_t item) {
  const auto nodes = grid.nodes();
  auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
  if (it == nodes.end() || *it != t)
    throw ValidationError("grid is not a refinement: trajectory " + std::to_string(item) +
                          " jumps inside a cell (t=" + format_double(t) + ")");
  return static_cast<int>(it - nodes.begin());
}

ProbabilityField field_from_design(const Panel& panel, const CellGrid& grid, bool exact,
                                   const Eigen::MatrixXd& design) {
  const int q = panel.states.size();
  const int m = grid.size();
  const double n = static_cast<double>(design.rows());

  ProbabilityField f;
  f.states = panel.states;
  f.mode = panel.mode;
  f.grid = grid;
  f.samples = static_cast<int>(design.rows());
  f.exact = exact;

  const Eigen::RowVectorXd mu = design.colwise().mean();
  f.mean = Eigen::Map<const Eigen::MatrixXd>(mu.data(), m, q).transpose();

  const Eigen::MatrixXd centered = design.rowwise() - mu;
  const Eigen::Index dim = centered.cols();
  f.covariance = Eigen::MatrixXd::Zero(dim, dim);
  f.covariance.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / n);
  f.covariance.triangularView<Eigen::StrictlyUpper>() = f.covariance.transpose();
  return f;
}

}  // namespace

Eigen::MatrixXd ProbabilityField::variance() const {
  Eigen::MatrixXd v(num_states(), cells());
  for (int j = 0; j < num_states(); ++j)
    for (int a = 0; a < cells(); ++a) v(j, a) = gamma(j, j, a, a);
  return v;
}

std::string_view to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::equal: return "equal";
    case WeightKind::trace_normalizing: return "trace_normalizing";
    case WeightKind::inverse_mean_probability: return "inverse_mean_probability";
  }
  return "equal";
}

WeightKind weight_kind_from_string(std::string_view name) {
  if (name == "equal") return WeightKind::equal;
  if (name == "trace_normalizing" || name == "trace") return WeightKind::trace_normalizing;
  if (name == "inverse_mean_probability" || name == "inverse_mean") return WeightKind::inverse_mean_probability;
  throw ValidationError("unknown weight scheme '" + std::string(name) +
                        "' (expected equal, trace_normalizing or inverse_mean_probability)");
}

std::string_view to_string(GridPolicy policy) {
  switch (policy) {
    case GridPolicy::automatic: return "auto";
    case GridPolicy::exact_union: return "exact-union";
    case GridPolicy::uniform: return "uniform";
  }
  return "auto";
}

GridPolicy grid_policy_from_string(std::string_view name) {
  if (name == "auto") return GridPolicy::automatic;
  if (name == "exact-union" || name == "exact") return GridPolicy::exact_union;
  if (name == "uniform") return GridPolicy::uniform;
  throw ValidationError("unknown grid policy '" + std::string(name) +
                        "' (expected auto, exact-union or uniform)");
}

Eigen::MatrixXd indicator_design(const Panel& panel, const CellGrid& grid, bool require_constant) {
  check_support(panel, grid);
  const int q = panel.states.size();
  const int m = grid.size();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(panel.size(), static_cast<Eigen::Index>(q) * m);
  for (std::size_t i = 0; i < panel.items.size(); ++i) {
    const auto& tr = panel.items[i].trajectory;
    const auto bp = tr.breakpoints();
    const auto row = static_cast<Eigen::Index>(i);
    for (int k = 0; k < tr.num_segments(); ++k) {
      for (int j : tr.segment(k))
        if (j >= q) throw ValidationError("trajectory " + std::to_string(i) + ": state index out of range");
      if (require_constant) {
        const int a0 = node_index(grid, bp[k], i);
        const int a1 = node_index(grid, bp[k + 1], i);
        for (int j : tr.segment(k))
          x.row(row).segment(static_cast<Eigen::Index>(j) * m + a0, a1 - a0).setOnes();
      } else {
        for (int a = grid.locate(bp[k]); a < m && grid.left(a) < bp[k + 1]; ++a) {
          const double overlap = std::min(bp[k + 1], grid.right(a)) - std::max(bp[k], grid.left(a));
          if (overlap <= 0.0) continue;
          const double frac = overlap / grid.width(a);
          for (int j : tr.segment(k)) x(row, static_cast<Eigen::Index>(j) * m + a) += frac;
        }
      }
    }
  }
  return x;
}

Eigen::MatrixXd mean_curves(const Panel& panel, const CellGrid& grid) {
  check_support(panel, grid);
  const int q = panel.states.size();
  const int m = grid.size();
  const double n = panel.size();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(q, m + 1);
  for (std::size_t i = 0; i < panel.items.size(); ++i) {
    const auto& tr = panel.items[i].trajectory;
    const auto bp = tr.breakpoints();
    for (int k = 0; k < tr.num_segments(); ++k) {
      const auto& subset = tr.segment(k);
      if (subset.empty()) continue;
      for (int j : subset)
        if (j >= q) throw ValidationError("trajectory " + std::to_string(i) + ": state index out of range");
      const bool left_node = grid.has_node(bp[k]);
      const bool right_node = grid.has_node(bp[k + 1]);
      if (left_node && right_node) {
        // Whole cells: difference-array update, summed below.
        const int a0 = grid.locate(bp[k]);
        const int a1 = bp[k + 1] == grid.horizon() ? m : grid.locate(bp[k + 1]);
        for (int j : subset) {
          acc(j, a0) += 1.0;
          acc(j, a1) -= 1.0;
        }
        continue;
      }
      for (int a = grid.locate(bp[k]); a < m && grid.left(a) < bp[k + 1]; ++a) {
        const double overlap = std::min(bp[k + 1], grid.right(a)) - std::max(bp[k], grid.left(a));
        if (overlap <= 0.0) continue;
        const double frac = overlap / grid.width(a);
        // Fractional contributions go to the cell and are cancelled in the next one.
        for (int j : subset) {
          acc(j, a) += frac;
          acc(j, a + 1) -= frac;
        }
      }
    }
  }
  Eigen::MatrixXd mean(q, m);
  for (int j = 0; j < q; ++j) {
    double running = 0.0;
    for (int a = 0; a < m; ++a) {
      running += acc(j, a);
      mean(j, a) = running / n;
    }
  }
  return mean;
}

ProbabilityField estimate_field(const Panel& panel, const CellGrid& grid) {
  return field_from_design(panel, grid, true, indicator_design(panel, grid, true));
}

ProbabilityField estimate_field_averaged(const Panel& panel, const CellGrid& grid) {
  return field_from_design(panel, grid, false, indicator_design(panel, grid, false));
}

GridChoice choose_grid(const Panel& panel, GridPolicy policy, int cells, int max_cells) {
  switch (policy) {
    case GridPolicy::exact_union:
      return {union_grid(panel), true};
    case GridPolicy::uniform:
      if (cells < 1) throw ValidationError("uniform grid policy needs a positive cell count");
      return {CellGrid::uniform(cells), false};
    case GridPolicy::automatic: {
      if (max_cells < 1) throw ValidationError("max_cells must be positive");
      auto grid = union_grid(panel);
      if (grid.size() <= max_cells) return {std::move(grid), true};
      return {CellGrid::uniform(max_cells), false};
    }
  }
  throw ValidationError("unknown grid policy");
}

ProbabilityField estimate(const Panel& panel, const GridChoice& choice) {
  return choice.exact ? estimate_field(panel, choice.grid) : estimate_field_averaged(panel, choice.grid);
}

WeightScheme equal_weights(int states) {
  return {WeightKind::equal, Eigen::VectorXd::Constant(states, 1.0 / states)};
}

WeightScheme compute_weights(const ProbabilityField& field, WeightKind kind) {
  const int q = field.num_states();
  if (kind == WeightKind::equal) return equal_weights(q);
  const Eigen::VectorXd widths = field.grid.widths();
  WeightScheme scheme{kind, Eigen::VectorXd(q)};
  for (int j = 0; j < q; ++j) {
    const Eigen::ArrayXd p = field.mean.row(j).transpose().array();
    const double integral = kind == WeightKind::trace_normalizing
                                ? (p * (1.0 - p) * widths.array()).sum()
                                : (p * widths.array()).sum();
    if (!(integral > 0.0)) {
      const bool trace = kind == WeightKind::trace_normalizing;
      throw ValidationError(
          "state '" + field.states.label(j) + "' has zero " +
          (trace ? std::string("integrated variance (never or always active)")
                 : std::string("mean probability (never observed)")) +
          "; drop the state or use equal weights");
    }
    scheme.weights(j) = 1.0 / integral;
  }
  return scheme;
}

Eigen::VectorXd selection_count_curve(const ProbabilityField& field) {
  return field.mean.colwise().sum().transpose();
}

Eigen::VectorXd selection_count_curve(const Panel& panel, const CellGrid& grid) {
  return mean_curves(panel, grid).colwise().sum().transpose();
}

void write_curves_csv(std::ostream& out, const StateSpace& states, const CellGrid& grid,
                      const Eigen::MatrixXd& curves) {
  out << "state,t_left,t_right,value\n";
  for (int j = 0; j < curves.rows(); ++j)
    for (int a = 0; a < curves.cols(); ++a)
      out << states.label(j) << ',' << format_double(grid.left(a)) << ','
          << format_double(grid.right(a)) << ',' << format_double(curves(j, a)) << '\n';
}

void write_selection_count_csv(std::ostream& out, const CellGrid& grid, const Eigen::VectorXd& curve) {
  out << "t_left,t_right,value\n";
  for (int a = 0; a < curve.size(); ++a)
    out << format_double(grid.left(a)) << ',' << format_double(grid.right(a)) << ','
        << format_double(curve(a)) << '\n';
}

}  // namespace catfpca
