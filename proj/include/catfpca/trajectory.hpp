#ifndef CATFPCA_TRAJECTORY_HPP
#define CATFPCA_TRAJECTORY_HPP

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace catfpca {

// Sorted, duplicate-free list of state indices active on a segment.
using StateSet = std::vector<int>;

// TDS: exactly one state at any time. TCATA: any subset, possibly empty.
enum class Protocol { tds, tcata };

std::string_view to_string(Protocol mode);
Protocol protocol_from_string(std::string_view name);

/// Ordered list of q distinct, non-empty state labels. Index j of a label is
/// fixed for the lifetime of the object.
class StateSpace {
 public:
  StateSpace() = default;
  explicit StateSpace(std::vector<std::string> labels);

  int size() const { return static_cast<int>(labels_.size()); }
  const std::string& label(int j) const { return labels_.at(static_cast<std::size_t>(j)); }
  const std::vector<std::string>& labels() const { return labels_; }

  std::optional<int> index_of(std::string_view label) const;

  bool operator==(const StateSpace&) const = default;

 private:
  std::vector<std::string> labels_;
};

/// Piecewise-constant map from [t_0, t_m] to subsets of state indices.
///
/// Segment k covers [t_k, t_{k+1}); the last segment also owns t_m. Objects
/// are always in canonical form: strictly increasing breakpoints, adjacent
/// segments carrying different subsets. After normalization t_0 = 0 and
/// t_m = 1; freshly parsed TDS data may start at the first click instead.
class CategoricalTrajectory {
 public:
  CategoricalTrajectory(std::vector<double> breakpoints, std::vector<StateSet> segments,
                        Protocol mode);

  /// Builds a canonical trajectory from possibly redundant input: zero-length
  /// segments are dropped and equal neighbours merged. Subsets are sorted.
  static CategoricalTrajectory canonical(std::vector<double> breakpoints,
                                         std::vector<StateSet> segments, Protocol mode);

  double start() const { return breakpoints_.front(); }
  double horizon() const { return breakpoints_.back(); }
  int num_segments() const { return static_cast<int>(segments_.size()); }
  Protocol mode() const { return mode_; }

  std::span<const double> breakpoints() const { return breakpoints_; }
  const std::vector<StateSet>& segments() const { return segments_; }
  const StateSet& segment(int k) const { return segments_.at(static_cast<std::size_t>(k)); }

  bool operator==(const CategoricalTrajectory&) const = default;

 private:
  std::vector<double> breakpoints_;
  std::vector<StateSet> segments_;
  Protocol mode_;
};

/// The q indicator functions X_j of a trajectory. Column k of `values` holds
/// the 0/1 vector on segment k.
struct IndicatorTrajectory {
  std::vector<double> breakpoints;
  Eigen::MatrixXd values;  // q x segments

  double start() const { return breakpoints.front(); }
  double horizon() const { return breakpoints.back(); }
  int num_segments() const { return static_cast<int>(values.cols()); }
};

/// Partition u_0 < u_1 < ... < u_m of the time axis into m cells.
class CellGrid {
 public:
  CellGrid() = default;
  explicit CellGrid(std::vector<double> nodes);

  static CellGrid uniform(int cells, double start = 0.0, double end = 1.0);

  int size() const { return static_cast<int>(nodes_.size()) - 1; }
  double left(int a) const { return nodes_[static_cast<std::size_t>(a)]; }
  double right(int a) const { return nodes_[static_cast<std::size_t>(a) + 1]; }
  double width(int a) const { return right(a) - left(a); }
  double start() const { return nodes_.front(); }
  double horizon() const { return nodes_.back(); }

  std::span<const double> nodes() const { return nodes_; }
  Eigen::VectorXd widths() const;

  // Index of the cell containing t, right-continuous, t = horizon maps to the last cell.
  int locate(double t) const;
  bool has_node(double t) const;

  bool operator==(const CellGrid&) const = default;

 private:
  std::vector<double> nodes_;
};

IndicatorTrajectory to_indicators(const CategoricalTrajectory& traj, const StateSpace& space);

// Inverse of to_indicators: the active set on each segment is the set of rows equal to 1.
CategoricalTrajectory from_indicators(const IndicatorTrajectory& ind, Protocol mode);

const StateSet& evaluate(const CategoricalTrajectory& traj, double t);

/// Affine map of [start, horizon] onto [0, 1]; subsets are untouched and the
/// new horizon is exactly 1.
CategoricalTrajectory normalize_time(const CategoricalTrajectory& traj);

/// Rounds every interior breakpoint to the nearest multiple of `tick`, then
/// restores canonical form. Segments shorter than half a tick may vanish.
CategoricalTrajectory quantize_time(const CategoricalTrajectory& traj, double tick);

CellGrid union_grid(std::span<const IndicatorTrajectory> panel);

}  // namespace catfpca

#endif  // CATFPCA_TRAJECTORY_HPP
