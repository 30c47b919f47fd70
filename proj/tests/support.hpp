// Fixtures and generators shared by the unit and acceptance tests.
#ifndef CATFPCA_TESTS_SUPPORT_HPP
#define CATFPCA_TESTS_SUPPORT_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "catfpca/ingestion.hpp"

namespace catfpca::testing {

// Two TDS samples: (S1 on [0,.5), S2 on [.5,1]) and its mirror image.
inline Panel mirror_panel() {
  Panel p;
  p.states = StateSpace({"S1", "S2"});
  p.mode = Protocol::tds;
  p.items.push_back({"a", "c", CategoricalTrajectory({0.0, 0.5, 1.0}, {{0}, {1}}, Protocol::tds)});
  p.items.push_back({"b", "c", CategoricalTrajectory({0.0, 0.5, 1.0}, {{1}, {0}}, Protocol::tds)});
  return p;
}

struct RandomPanelShape {
  int max_samples = 10;
  int max_states = 4;
  int max_cells = 20;
  int min_samples = 2;
  int min_states = 2;
};

/// Random panel on [0, 1] whose union grid has at most `max_cells` cells:
/// every trajectory draws its breakpoints from one shared pool of nodes.
inline Panel random_panel(std::mt19937_64& gen, Protocol mode, const RandomPanelShape& shape = {}) {
  std::uniform_int_distribution<int> n_dist(shape.min_samples, shape.max_samples);
  std::uniform_int_distribution<int> q_dist(shape.min_states, shape.max_states);
  std::uniform_int_distribution<int> m_dist(1, shape.max_cells);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = n_dist(gen);
  const int q = q_dist(gen);
  const int m = m_dist(gen);

  std::vector<double> pool;
  while (static_cast<int>(pool.size()) < m - 1) {
    const double t = std::round(u(gen) * 1e6) / 1e6;
    if (t > 0.0 && t < 1.0 && std::find(pool.begin(), pool.end(), t) == pool.end()) pool.push_back(t);
  }
  std::sort(pool.begin(), pool.end());

  std::vector<std::string> labels;
  for (int j = 0; j < q; ++j) labels.push_back("s" + std::to_string(j));
  Panel p{StateSpace(labels), mode, {}};
  for (int i = 0; i < n; ++i) {
    std::vector<double> bp{0.0};
    for (double t : pool)
      if (u(gen) < 0.5) bp.push_back(t);
    bp.push_back(1.0);
    std::vector<StateSet> seg;
    for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
      StateSet s;
      if (mode == Protocol::tds) {
        s.push_back(std::uniform_int_distribution<int>(0, q - 1)(gen));
      } else {
        for (int j = 0; j < q; ++j)
          if (u(gen) < 0.4) s.push_back(j);
      }
      seg.push_back(s);
    }
    p.items.push_back({"r" + std::to_string(i), "c",
                       CategoricalTrajectory::canonical(std::move(bp), std::move(seg), mode)});
  }
  return p;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("catfpca_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace catfpca::testing

#endif  // CATFPCA_TESTS_SUPPORT_HPP
