#ifndef CATFPCA_ESTIMATION_HPP
#define CATFPCA_ESTIMATION_HPP

#include <iosfwd>
#include <string_view>

#include <Eigen/Dense>

#include "catfpca/ingestion.hpp"
#include "catfpca/trajectory.hpp"

namespace catfpca {

/// Empirical mean curves and covariance kernels, piecewise constant on a
/// cell grid.
///
/// The q x q x m x m kernel is stored as one (q m) x (q m) matrix whose
/// row/column (j, a) sits at index j * m + a. Block (j, l) therefore holds
/// gamma_jl(cell a, cell b).
///
/// When `exact` is false the grid does not refine the panel and every entry
/// is the length-weighted average of the exact kernel over its cell product.
struct ProbabilityField {
  StateSpace states;
  Protocol mode = Protocol::tds;
  CellGrid grid;
  int samples = 0;
  bool exact = true;
  Eigen::MatrixXd mean;        // q x m
  Eigen::MatrixXd covariance;  // (q m) x (q m)

  int num_states() const { return states.size(); }
  int cells() const { return grid.size(); }
  Eigen::Index index(int j, int a) const { return static_cast<Eigen::Index>(j) * cells() + a; }
  double gamma(int j, int l, int a, int b) const { return covariance(index(j, a), index(l, b)); }

  // Diagonal variance curves gamma_jj(a, a), q x m.
  Eigen::MatrixXd variance() const;
};

enum class WeightKind { equal, trace_normalizing, inverse_mean_probability };

std::string_view to_string(WeightKind kind);
WeightKind weight_kind_from_string(std::string_view name);

/// Positive weights w_j of the inner product <f, g>_H = sum_j w_j <f_j, g_j>.
struct WeightScheme {
  WeightKind kind = WeightKind::equal;
  Eigen::VectorXd weights;

  // Rescaled to sum to one, the form used for reporting.
  Eigen::VectorXd normalized() const { return weights / weights.sum(); }
};

/// n x (q m) matrix of cell averages of the indicator functions. With
/// `require_constant`, every trajectory must be constant on every cell and
/// the entries are exactly 0 or 1.
Eigen::MatrixXd indicator_design(const Panel& panel, const CellGrid& grid, bool require_constant);

/// Cell-averaged mean curves p_j, q x m, without forming the design matrix.
Eigen::MatrixXd mean_curves(const Panel& panel, const CellGrid& grid);

/// Exact estimator on a grid that refines every trajectory (1/n convention).
ProbabilityField estimate_field(const Panel& panel, const CellGrid& grid);

/// Estimator on an arbitrary grid by cell aggregation of the exact kernel.
ProbabilityField estimate_field_averaged(const Panel& panel, const CellGrid& grid);

enum class GridPolicy { automatic, exact_union, uniform };

std::string_view to_string(GridPolicy policy);
GridPolicy grid_policy_from_string(std::string_view name);

struct GridChoice {
  CellGrid grid;
  bool exact = true;
};

/// automatic: the union grid when it has at most `max_cells` cells, else a
/// uniform grid of `max_cells` cells. uniform: `cells` equal cells.
GridChoice choose_grid(const Panel& panel, GridPolicy policy, int cells = 0, int max_cells = 512);

ProbabilityField estimate(const Panel& panel, const GridChoice& choice);

WeightScheme equal_weights(int states);
WeightScheme compute_weights(const ProbabilityField& field, WeightKind kind);

/// Mean number of selected states, sum_j p_j, per cell.
Eigen::VectorXd selection_count_curve(const ProbabilityField& field);
Eigen::VectorXd selection_count_curve(const Panel& panel, const CellGrid& grid);

// Long format: state,t_left,t_right,value.
void write_curves_csv(std::ostream& out, const StateSpace& states, const CellGrid& grid,
                      const Eigen::MatrixXd& curves);
void write_selection_count_csv(std::ostream& out, const CellGrid& grid, const Eigen::VectorXd& curve);

}  // namespace catfpca

#endif  // CATFPCA_ESTIMATION_HPP
