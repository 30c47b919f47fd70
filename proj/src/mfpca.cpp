#include "catfpca/mfpca.hpp"

#include <algorithm>
#include <cmath>

#include "catfpca/errors.hpp"

namespace catfpca {

namespace {

Eigen::VectorXd flatten(const Eigen::MatrixXd& by_state) {
  const Eigen::MatrixXd t = by_state.transpose();
  return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& stacked, int states, int cells) {
  return Eigen::Map<const Eigen::MatrixXd>(stacked.data(), cells, states).transpose();
}

void check_weights(const WeightScheme& weights, int states) {
  if (weights.weights.size() != states)
    throw ValidationError("weight scheme has " + std::to_string(weights.weights.size()) +
                          " weights for " + std::to_string(states) + " states");
  if (!(weights.weights.array() > 0.0).all() || !weights.weights.allFinite())
    throw ValidationError("weights must be finite and strictly positive");
}

}  // namespace

Eigen::VectorXd h_metric(const CellGrid& grid, const WeightScheme& weights) {
  const Eigen::Index q = weights.weights.size();
  const Eigen::VectorXd widths = grid.widths();
  Eigen::VectorXd d(q * widths.size());
  for (Eigen::Index j = 0; j < q; ++j) d.segment(j * widths.size(), widths.size()) = weights.weights(j) * widths;
  return d;
}

Eigen::MatrixXd assemble_operator(const ProbabilityField& field, const WeightScheme& weights) {
  check_weights(weights, field.num_states());
  if (!field.covariance.allFinite()) throw ValidationError("covariance kernel has non-finite entries");
  const Eigen::VectorXd root = h_metric(field.grid, weights).cwiseSqrt();
  Eigen::MatrixXd op = root.asDiagonal() * field.covariance * root.asDiagonal();
  const double asym = (op - op.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10) throw NumericalError("assembled operator is not symmetric (deviation " + std::to_string(asym) + ")");
  op.triangularView<Eigen::StrictlyUpper>() = op.transpose();
  return op;
}

EigenDecomposition eigendecompose(const Eigen::MatrixXd& op, const Eigen::VectorXd& metric) {
  if (op.rows() != op.cols() || op.rows() != metric.size())
    throw ValidationError("operator and metric dimensions disagree");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(op);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");

  const Eigen::Index dim = op.rows();
  const double tol = 1e-10 * std::max(1.0, std::abs(op.trace()));
  EigenDecomposition out{Eigen::VectorXd(dim), Eigen::MatrixXd(dim, dim)};
  const Eigen::VectorXd inv_root = metric.cwiseSqrt().cwiseInverse();
  for (Eigen::Index r = 0; r < dim; ++r) {
    const Eigen::Index src = dim - 1 - r;
    double lambda = solver.eigenvalues()(src);
    if (lambda < -tol)
      throw NumericalError("operator has eigenvalue " + std::to_string(lambda) +
                           " below the negative tolerance");
    out.values(r) = std::max(lambda, 0.0);
    Eigen::VectorXd phi = inv_root.cwiseProduct(solver.eigenvectors().col(src));
    Eigen::Index at = 0;
    phi.cwiseAbs().maxCoeff(&at);
    if (phi(at) < 0.0) phi = -phi;
    out.functions.col(r) = phi;
  }
  return out;
}

Eigen::VectorXd MfpcaResult::proportions() const {
  const double total = total_variance();
  if (!(total > 0.0)) return Eigen::VectorXd::Zero(eigenvalues.size());
  return eigenvalues / total;
}

Eigen::MatrixXd compute_scores(const Panel& panel, const ProbabilityField& field,
                               const WeightScheme& weights, const Eigen::MatrixXd& eigenfunctions) {
  check_weights(weights, field.num_states());
  if (panel.states.size() != field.num_states())
    throw ValidationError("panel and field have different state spaces");
  const Eigen::MatrixXd design = indicator_design(panel, field.grid, field.exact);
  if (eigenfunctions.rows() != design.cols())
    throw ValidationError("eigenfunctions do not match the field's grid");
  const Eigen::RowVectorXd mu = flatten(field.mean).transpose();
  const Eigen::VectorXd metric = h_metric(field.grid, weights);
  return ((design.rowwise() - mu) * metric.asDiagonal()) * eigenfunctions;
}

Eigen::MatrixXd importance(const WeightScheme& weights, const CellGrid& grid,
                           const Eigen::MatrixXd& eigenfunctions) {
  const Eigen::Index q = weights.weights.size();
  const Eigen::Index m = grid.size();
  const Eigen::VectorXd widths = grid.widths();
  Eigen::MatrixXd imp(eigenfunctions.cols(), q);
  for (Eigen::Index r = 0; r < eigenfunctions.cols(); ++r)
    for (Eigen::Index j = 0; j < q; ++j)
      imp(r, j) = weights.weights(j) *
                  (eigenfunctions.col(r).segment(j * m, m).array().square() * widths.array()).sum();
  return imp;
}

MfpcaResult fit_mfpca(const Panel& panel, const ProbabilityField& field, const WeightScheme& weights,
                      const MfpcaOptions& options) {
  const Eigen::MatrixXd op = assemble_operator(field, weights);
  const Eigen::VectorXd metric = h_metric(field.grid, weights);
  EigenDecomposition dec = eigendecompose(op, metric);

  const auto dim = static_cast<int>(dec.values.size());
  int keep = dim;
  if (!options.keep_null) {
    const double floor = options.relative_cutoff * dec.values(0);
    keep = 0;
    while (keep < dim && dec.values(keep) > floor && dec.values(keep) > 0.0) ++keep;
    keep = std::min(keep, std::max(field.samples - 1, 0));
  }
  if (options.max_components) keep = std::min(keep, std::max(*options.max_components, 0));

  MfpcaResult res;
  res.states = field.states;
  res.grid = field.grid;
  res.exact_grid = field.exact;
  res.weights = weights;
  for (const auto& item : panel.items) res.ids.emplace_back(item.subject, item.condition);
  res.mean = field.mean;
  res.spectrum = dec.values;
  res.eigenvalues = dec.values.head(keep);
  res.eigenfunctions = dec.functions.leftCols(keep);
  res.scores = compute_scores(panel, field, weights, res.eigenfunctions);
  res.importance = importance(weights, field.grid, res.eigenfunctions);
  return res;
}

Eigen::MatrixXd reconstruct(const MfpcaResult& result, int sample, int k) {
  if (k < 0 || k > result.components())
    throw DomainError("truncation order " + std::to_string(k) + " outside [0, " +
                      std::to_string(result.components()) + "]");
  if (sample < 0 || sample >= result.scores.rows())
    throw DomainError("sample index " + std::to_string(sample) + " out of range");
  Eigen::VectorXd stacked = flatten(result.mean);
  if (k > 0)
    stacked += result.eigenfunctions.leftCols(k) * result.scores.row(sample).head(k).transpose();
  return unflatten(stacked, result.states.size(), result.cells());
}

double mercer_check(const MfpcaResult& result, const ProbabilityField& field, std::optional<int> k) {
  const int order = k.value_or(result.components());
  if (order < 0 || order > result.components())
    throw DomainError("truncation order outside the retained components");
  const auto phi = result.eigenfunctions.leftCols(order);
  const Eigen::MatrixXd approx = phi * result.eigenvalues.head(order).asDiagonal() * phi.transpose();
  return (field.covariance - approx).cwiseAbs().maxCoeff();
}

int components_for_fraction(const MfpcaResult& result, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ValidationError("variance fraction must lie in (0, 1]");
  const Eigen::VectorXd p = result.proportions();
  double acc = 0.0;
  for (int r = 0; r < p.size(); ++r) {
    acc += p(r);
    if (acc >= fraction - 1e-12) return r + 1;
  }
  return static_cast<int>(p.size());
}

}  // namespace catfpca
