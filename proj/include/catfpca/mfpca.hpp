#ifndef CATFPCA_MFPCA_HPP
#define CATFPCA_MFPCA_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "catfpca/estimation.hpp"

namespace catfpca {

/// Quadrature weights w_j * Delta_a over the stacked index (j, a). The
/// H inner product of two piecewise-constant blocks f, g is f' diag(d) g.
Eigen::VectorXd h_metric(const CellGrid& grid, const WeightScheme& weights);

template <typename DerivedF, typename DerivedG>
double h_inner(const Eigen::MatrixBase<DerivedF>& f, const Eigen::MatrixBase<DerivedG>& g,
               const Eigen::VectorXd& metric) {
  return (f.array() * g.array() * metric.array()).sum();
}

/// S = D^{1/2} G D^{1/2} with D = diag(w_j Delta_a). The eigenpairs of S are
/// those of the weighted covariance operator; eigenfunction cell values are
/// D^{-1/2} times the eigenvectors.
Eigen::MatrixXd assemble_operator(const ProbabilityField& field, const WeightScheme& weights);

struct EigenDecomposition {
  Eigen::VectorXd values;     // descending, clamped at 0
  Eigen::MatrixXd functions;  // (q m) x (q m), column r is phi_r on the cells, H-orthonormal
};

/// Full symmetric decomposition. Eigenvalues in [-tol, 0) are clamped to 0
/// with tol = 1e-10 * max(1, trace S); anything more negative is a
/// NumericalError. Each eigenfunction is flipped so that its entry of largest
/// magnitude is positive.
EigenDecomposition eigendecompose(const Eigen::MatrixXd& op, const Eigen::VectorXd& metric);

struct MfpcaOptions {
  std::optional<int> max_components;
  double relative_cutoff = 1e-12;  // keep lambda_r > cutoff * lambda_1
  bool keep_null = false;          // keep every component, including zero ones
};

struct MfpcaResult {
  StateSpace states;
  CellGrid grid;
  bool exact_grid = true;
  WeightScheme weights;
  std::vector<std::pair<std::string, std::string>> ids;  // (subject, condition) per score row

  Eigen::MatrixXd mean;            // q x m
  Eigen::VectorXd spectrum;        // every eigenvalue of the operator, descending
  Eigen::VectorXd eigenvalues;     // the R retained ones
  Eigen::MatrixXd eigenfunctions;  // (q m) x R
  Eigen::MatrixXd scores;          // n x R
  Eigen::MatrixXd importance;      // R x q

  int components() const { return static_cast<int>(eigenvalues.size()); }
  int cells() const { return grid.size(); }
  double total_variance() const { return spectrum.sum(); }
  Eigen::VectorXd proportions() const;
  Eigen::VectorXd metric() const { return h_metric(grid, weights); }

  // phi_{rj} as a row of m cell values.
  Eigen::VectorXd eigenfunction(int r, int j) const {
    return eigenfunctions.col(r).segment(static_cast<Eigen::Index>(j) * cells(), cells());
  }
};

/// Scores <X_i - p, phi_r>_H, n x R, exact on the field's grid.
Eigen::MatrixXd compute_scores(const Panel& panel, const ProbabilityField& field,
                               const WeightScheme& weights, const Eigen::MatrixXd& eigenfunctions);

/// imp_rj = w_j ||phi_rj||^2, R x q. Rows sum to one for H-normalized input.
Eigen::MatrixXd importance(const WeightScheme& weights, const CellGrid& grid,
                           const Eigen::MatrixXd& eigenfunctions);

MfpcaResult fit_mfpca(const Panel& panel, const ProbabilityField& field, const WeightScheme& weights,
                      const MfpcaOptions& options = {});

/// Truncated Karhunen-Loeve reconstruction of sample i with k components,
/// q x m. k = 0 gives the mean.
Eigen::MatrixXd reconstruct(const MfpcaResult& result, int sample, int k);

/// Largest |gamma_jl(a, b) - sum_{r<=k} lambda_r phi_rj(a) phi_rl(b)|, k
/// defaulting to every retained component.
double mercer_check(const MfpcaResult& result, const ProbabilityField& field,
                    std::optional<int> k = std::nullopt);

/// Smallest k whose cumulative variance proportion reaches `fraction`.
int components_for_fraction(const MfpcaResult& result, double fraction);

}  // namespace catfpca

#endif  // CATFPCA_MFPCA_HPP
