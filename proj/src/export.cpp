#include "catfpca/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "catfpca/format.hpp"

namespace catfpca {

namespace {

std::vector<double> head(const Eigen::VectorXd& v, int k) {
  return {v.data(), v.data() + std::min<Eigen::Index>(k, v.size())};
}

}  // namespace

nlohmann::json result_to_json(const MfpcaResult& result, int k, const nlohmann::json& config) {
  const int q = result.states.size();
  const Eigen::VectorXd props = result.proportions();
  nlohmann::json importance = nlohmann::json::array();
  for (int r = 0; r < k; ++r) {
    nlohmann::json row = nlohmann::json::object();
    for (int j = 0; j < q; ++j) row[result.states.label(j)] = result.importance(r, j);
    importance.push_back(row);
  }
  const Eigen::VectorXd normalized = result.weights.normalized();
  return {{"format", "catfpca-mfpca"},
          {"version", 1},
          {"states", result.states.labels()},
          {"samples", result.scores.rows()},
          {"cells", result.cells()},
          {"exact_grid", result.exact_grid},
          {"weights",
           {{"scheme", std::string(to_string(result.weights.kind))},
            {"raw", std::vector<double>(result.weights.weights.data(),
                                        result.weights.weights.data() + q)},
            {"normalized", std::vector<double>(normalized.data(), normalized.data() + q)}}},
          {"total_variance", result.total_variance()},
          {"retained_components", result.components()},
          {"exported_components", k},
          {"eigenvalues", head(result.eigenvalues, k)},
          {"proportions", head(props, k)},
          {"importance", importance},
          {"config", config}};
}

void write_scores_csv(std::ostream& out, const MfpcaResult& result, int k) {
  out << "subject,condition,r,value\n";
  for (Eigen::Index i = 0; i < result.scores.rows(); ++i)
    for (int r = 0; r < k; ++r)
      out << result.ids[static_cast<std::size_t>(i)].first << ','
          << result.ids[static_cast<std::size_t>(i)].second << ',' << r + 1 << ','
          << format_double(result.scores(i, r)) << '\n';
}

void write_eigenfunctions_csv(std::ostream& out, const MfpcaResult& result, int k) {
  out << "state,r,t_left,t_right,value\n";
  for (int j = 0; j < result.states.size(); ++j)
    for (int r = 0; r < k; ++r) {
      const Eigen::VectorXd phi = result.eigenfunction(r, j);
      for (int a = 0; a < result.cells(); ++a)
        out << result.states.label(j) << ',' << r + 1 << ',' << format_double(result.grid.left(a)) << ','
            << format_double(result.grid.right(a)) << ',' << format_double(phi(a)) << '\n';
    }
}

void write_bands_csv(std::ostream& out, const MfpcaResult& result, int k, double c) {
  out << "state,r,t_left,t_right,lower,mean,upper\n";
  for (int j = 0; j < result.states.size(); ++j)
    for (int r = 0; r < k; ++r) {
      const Eigen::VectorXd phi = result.eigenfunction(r, j);
      const double scale = c * std::sqrt(result.eigenvalues(r));
      for (int a = 0; a < result.cells(); ++a) {
        const double p = result.mean(j, a);
        out << result.states.label(j) << ',' << r + 1 << ',' << format_double(result.grid.left(a)) << ','
            << format_double(result.grid.right(a)) << ',' << format_double(p - scale * phi(a)) << ','
            << format_double(p) << ',' << format_double(p + scale * phi(a)) << '\n';
      }
    }
}

std::string summary_table(const MfpcaResult& result, int k, int top_states) {
  std::ostringstream out;
  const Eigen::VectorXd props = result.proportions();
  const int q = result.states.size();
  char line[256];
  out << "MFPCA: " << result.scores.rows() << " trajectories, " << q << " states, " << result.cells()
      << " cells (" << (result.exact_grid ? "exact union grid" : "uniform grid") << "), weights "
      << to_string(result.weights.kind) << "\n\n";
  out << "dim  eigenvalue      proportion  cumulative  most important states\n";
  double cumulative = 0.0;
  for (int r = 0; r < k; ++r) {
    cumulative += props(r);
    std::vector<int> order(static_cast<std::size_t>(q));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return result.importance(r, a) > result.importance(r, b); });
    std::string top;
    for (int t = 0; t < std::min(top_states, q); ++t) {
      std::snprintf(line, sizeof line, "%s%s %.2f", top.empty() ? "" : ", ",
                    result.states.label(order[static_cast<std::size_t>(t)]).c_str(),
                    result.importance(r, order[static_cast<std::size_t>(t)]));
      top += line;
    }
    std::snprintf(line, sizeof line, "%3d  %-14.6g  %9.1f%%  %9.1f%%  ", r + 1, result.eigenvalues(r),
                  100.0 * props(r), 100.0 * cumulative);
    out << line << top << '\n';
  }
  const int shown = std::min(k, 3);
  if (shown > 0) {
    out << "\nimportance";
    for (int r = 0; r < shown; ++r) out << "   dim " << r + 1;
    out << '\n';
    for (int j = 0; j < q; ++j) {
      std::snprintf(line, sizeof line, "%-10s", result.states.label(j).c_str());
      out << line;
      for (int r = 0; r < shown; ++r) {
        std::snprintf(line, sizeof line, "  %6.2f", result.importance(r, j));
        out << line;
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace catfpca
