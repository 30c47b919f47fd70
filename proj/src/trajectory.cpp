#include "catfpca/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "catfpca/errors.hpp"

namespace catfpca {

std::string_view to_string(Protocol mode) { return mode == Protocol::tds ? "TDS" : "TCATA"; }

Protocol protocol_from_string(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "TDS") return Protocol::tds;
  if (upper == "TCATA") return Protocol::tcata;
  throw ValidationError("unknown protocol '" + std::string(name) + "' (expected TDS or TCATA)");
}

StateSpace::StateSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw ValidationError("state space must contain at least one state");
  std::unordered_set<std::string> seen;
  for (const auto& l : labels_) {
    if (l.empty()) throw ValidationError("state labels must be non-empty");
    if (!seen.insert(l).second) throw ValidationError("duplicate state label '" + l + "'");
  }
}

std::optional<int> StateSpace::index_of(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<int>(it - labels_.begin());
}

namespace {

void check_subset(const StateSet& s, int segment) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] < 0)
      throw ValidationError("segment " + std::to_string(segment) + ": negative state index");
    if (i > 0 && s[i] <= s[i - 1])
      throw ValidationError("segment " + std::to_string(segment) +
                            ": subset must be sorted without duplicates");
  }
}

}  // namespace

CategoricalTrajectory::CategoricalTrajectory(std::vector<double> breakpoints,
                                             std::vector<StateSet> segments, Protocol mode)
    : breakpoints_(std::move(breakpoints)), segments_(std::move(segments)), mode_(mode) {
  if (segments_.empty()) throw ValidationError("trajectory needs at least one segment");
  if (breakpoints_.size() != segments_.size() + 1)
    throw ValidationError("trajectory needs exactly one more breakpoint than segments");
  if (!std::isfinite(breakpoints_.front()) || breakpoints_.front() < 0.0)
    throw ValidationError("trajectory must start at a finite non-negative time");
  for (std::size_t k = 1; k < breakpoints_.size(); ++k) {
    if (!std::isfinite(breakpoints_[k]) || !(breakpoints_[k] > breakpoints_[k - 1]))
      throw ValidationError("breakpoints must be finite and strictly increasing (segment " +
                            std::to_string(k - 1) + " has non-positive length)");
  }
  for (std::size_t k = 0; k < segments_.size(); ++k) {
    check_subset(segments_[k], static_cast<int>(k));
    if (mode_ == Protocol::tds && segments_[k].size() != 1)
      throw ValidationError("segment " + std::to_string(k) +
                            ": TDS trajectories hold exactly one state per segment");
    if (k > 0 && segments_[k] == segments_[k - 1])
      throw ValidationError("segments " + std::to_string(k - 1) + " and " + std::to_string(k) +
                            " carry the same subset (not canonical)");
  }
}

CategoricalTrajectory CategoricalTrajectory::canonical(std::vector<double> breakpoints,
                                                       std::vector<StateSet> segments,
                                                       Protocol mode) {
  if (breakpoints.size() != segments.size() + 1 || segments.empty())
    throw ValidationError("trajectory needs exactly one more breakpoint than segments");
  std::vector<double> bp{breakpoints.front()};
  std::vector<StateSet> seg;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    auto s = std::move(segments[k]);
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    const double right = breakpoints[k + 1];
    if (!(right > bp.back())) continue;  // zero-length, dropped
    if (!seg.empty() && seg.back() == s) {
      bp.back() = right;
    } else {
      seg.push_back(std::move(s));
      bp.push_back(right);
    }
  }
  if (seg.empty()) throw ValidationError("trajectory has zero total length");
  return CategoricalTrajectory(std::move(bp), std::move(seg), mode);
}

CellGrid::CellGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw ValidationError("a cell grid needs at least two nodes");
  for (std::size_t a = 1; a < nodes_.size(); ++a)
    if (!(nodes_[a] > nodes_[a - 1]))
      throw ValidationError("cell grid nodes must be strictly increasing");
}

CellGrid CellGrid::uniform(int cells, double start, double end) {
  if (cells < 1) throw ValidationError("uniform grid needs at least one cell");
  if (!(end > start)) throw ValidationError("uniform grid needs end > start");
  std::vector<double> nodes(static_cast<std::size_t>(cells) + 1);
  for (int a = 0; a <= cells; ++a)
    nodes[static_cast<std::size_t>(a)] = start + (end - start) * a / cells;
  nodes.back() = end;
  return CellGrid(std::move(nodes));
}

Eigen::VectorXd CellGrid::widths() const {
  Eigen::VectorXd w(size());
  for (int a = 0; a < size(); ++a) w(a) = width(a);
  return w;
}

int CellGrid::locate(double t) const {
  if (t < start() || t > horizon())
    throw DomainError("time " + std::to_string(t) + " outside grid support");
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
  const int a = static_cast<int>(it - nodes_.begin()) - 1;
  return std::min(a, size() - 1);
}

bool CellGrid::has_node(double t) const { return std::binary_search(nodes_.begin(), nodes_.end(), t); }

IndicatorTrajectory to_indicators(const CategoricalTrajectory& traj, const StateSpace& space) {
  const int q = space.size();
  IndicatorTrajectory out;
  out.breakpoints.assign(traj.breakpoints().begin(), traj.breakpoints().end());
  out.values = Eigen::MatrixXd::Zero(q, traj.num_segments());
  for (int k = 0; k < traj.num_segments(); ++k) {
    for (int j : traj.segment(k)) {
      if (j >= q)
        throw ValidationError("segment " + std::to_string(k) + " refers to state index " +
                              std::to_string(j) + " but the state space has " +
                              std::to_string(q) + " states");
      out.values(j, k) = 1.0;
    }
  }
  return out;
}

CategoricalTrajectory from_indicators(const IndicatorTrajectory& ind, Protocol mode) {
  std::vector<StateSet> segments(static_cast<std::size_t>(ind.num_segments()));
  for (int k = 0; k < ind.num_segments(); ++k)
    for (int j = 0; j < ind.values.rows(); ++j)
      if (ind.values(j, k) == 1.0) segments[static_cast<std::size_t>(k)].push_back(j);
  return CategoricalTrajectory::canonical(ind.breakpoints, std::move(segments), mode);
}

const StateSet& evaluate(const CategoricalTrajectory& traj, double t) {
  const auto bp = traj.breakpoints();
  if (!(t >= traj.start() && t <= traj.horizon()))
    throw DomainError("time " + std::to_string(t) + " outside [" + std::to_string(traj.start()) +
                      ", " + std::to_string(traj.horizon()) + "]");
  auto it = std::upper_bound(bp.begin(), bp.end(), t);
  const int k = std::min(static_cast<int>(it - bp.begin()) - 1, traj.num_segments() - 1);
  return traj.segment(k);
}

CategoricalTrajectory normalize_time(const CategoricalTrajectory& traj) {
  const double origin = traj.start();
  const double span = traj.horizon() - origin;
  if (!(span > 0.0)) throw ValidationError("cannot normalize a trajectory of non-positive length");
  const auto bp = traj.breakpoints();
  std::vector<double> out(bp.size());
  for (std::size_t k = 0; k < bp.size(); ++k) out[k] = (bp[k] - origin) / span;
  out.front() = 0.0;
  out.back() = 1.0;
  return CategoricalTrajectory(std::move(out), traj.segments(), traj.mode());
}

CategoricalTrajectory quantize_time(const CategoricalTrajectory& traj, double tick) {
  if (!(tick > 0.0)) throw ValidationError("tick must be positive");
  const auto bp = traj.breakpoints();
  std::vector<double> out(bp.begin(), bp.end());
  for (std::size_t k = 1; k + 1 < out.size(); ++k) {
    const double r = std::round(out[k] / tick) * tick;
    out[k] = std::clamp(r, out.front(), out.back());
  }
  // Rounding is monotone, so equal neighbours are the only possible defect.
  return CategoricalTrajectory::canonical(std::move(out), traj.segments(), traj.mode());
}

CellGrid union_grid(std::span<const IndicatorTrajectory> panel) {
  if (panel.empty()) throw ValidationError("union_grid needs at least one trajectory");
  const double start = panel.front().start();
  const double horizon = panel.front().horizon();
  std::vector<std::size_t> offenders;
  std::size_t total = 0;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (panel[i].start() != start || panel[i].horizon() != horizon) offenders.push_back(i);
    total += panel[i].breakpoints.size();
  }
  if (!offenders.empty()) {
    std::ostringstream msg;
    msg << "trajectories do not share the support [" << start << ", " << horizon
        << "]; offending indices:";
    for (auto i : offenders) msg << ' ' << i;
    throw ValidationError(msg.str());
  }
  std::vector<double> nodes;
  nodes.reserve(total);
  for (const auto& x : panel) nodes.insert(nodes.end(), x.breakpoints.begin(), x.breakpoints.end());
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return CellGrid(std::move(nodes));
}

}  // namespace catfpca
