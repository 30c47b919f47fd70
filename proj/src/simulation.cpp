#include "catfpca/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include <boost/math/quadrature/gauss.hpp>

#include "catfpca/errors.hpp"
#include "catfpca/mfpca.hpp"

namespace catfpca {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

Rng Rng::stream(std::uint64_t seed, std::uint64_t index) {
  return Rng(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

double Rng::uniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

int Rng::categorical(const Eigen::VectorXd& probabilities) {
  const double u = uniform();
  double acc = 0.0;
  int last = -1;
  for (int j = 0; j < probabilities.size(); ++j) {
    if (probabilities(j) <= 0.0) continue;
    acc += probabilities(j);
    last = j;
    if (u < acc) return j;
  }
  return last;
}

double Sojourn::draw(Rng& rng) const {
  if (kind == Kind::exponential) return rng.exponential(rate);
  return lower + (upper - lower) * rng.uniform();
}

namespace {

void check_sojourn(const Sojourn& s, const std::string& what) {
  if (s.kind == Sojourn::Kind::exponential) {
    if (!(s.rate > 0.0) || !std::isfinite(s.rate))
      throw ValidationError(what + ": exponential rate must be positive");
  } else if (!(s.lower > 0.0) || !(s.upper >= s.lower) || !std::isfinite(s.upper)) {
    throw ValidationError(what + ": uniform sojourn needs 0 < min <= max");
  }
}

Sojourn sojourn_from_json(const nlohmann::json& j) {
  Sojourn s;
  const auto kind = j.at("distribution").get<std::string>();
  if (kind == "exponential") {
    s.kind = Sojourn::Kind::exponential;
    s.rate = j.at("rate").get<double>();
  } else if (kind == "uniform") {
    s.kind = Sojourn::Kind::uniform;
    s.lower = j.at("min").get<double>();
    s.upper = j.at("max").get<double>();
  } else {
    throw ValidationError("unknown sojourn distribution '" + kind + "'");
  }
  return s;
}

nlohmann::json sojourn_to_json(const Sojourn& s) {
  if (s.kind == Sojourn::Kind::exponential) return {{"distribution", "exponential"}, {"rate", s.rate}};
  return {{"distribution", "uniform"}, {"min", s.lower}, {"max", s.upper}};
}

std::string subject_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sim%06d", i);
  return buf;
}

// Closed form for a two-state chain with exponential sojourns, in normalized time.
struct TwoStateChain {
  double leave0;  // rate 0 -> 1
  double leave1;  // rate 1 -> 0
  double horizon;
  double start0;  // P(state 0 at time 0)

  double rate() const { return leave0 + leave1; }
  double stationary(int j) const { return (j == 0 ? leave1 : leave0) / rate(); }
  double initial(int j) const { return j == 0 ? start0 : 1.0 - start0; }

  double prob(int j, double u) const {
    return stationary(j) + (initial(j) - stationary(j)) * std::exp(-rate() * u * horizon);
  }
  // P(state l at time s + h | state j at time s), h in normalized time.
  double transition(int j, int l, double h) const {
    const double decay = std::exp(-rate() * h * horizon);
    const double stay = stationary(j) + (1.0 - stationary(j)) * decay;
    return j == l ? stay : 1.0 - stay;
  }
  double kernel(int j, int l, double s, double t) const {
    if (s > t) return kernel(l, j, t, s);
    return prob(j, s) * transition(j, l, t - s) - prob(j, s) * prob(l, t);
  }
};

std::optional<TwoStateChain> closed_form(const ProcessSpec& spec) {
  if (spec.mode != Protocol::tds || spec.states.size() != 2) return std::nullopt;
  if (spec.sojourn[0].kind != Sojourn::Kind::exponential ||
      spec.sojourn[1].kind != Sojourn::Kind::exponential)
    return std::nullopt;
  if (spec.transitions(0, 1) != 1.0 || spec.transitions(1, 0) != 1.0) return std::nullopt;
  return TwoStateChain{spec.sojourn[0].rate, spec.sojourn[1].rate, spec.horizon, spec.initial(0)};
}

using Gauss = boost::math::quadrature::gauss<double, 10>;

// Average of the closed-form kernel over cell product [l1,r1] x [l2,r2].
double cell_average(const TwoStateChain& chain, int j, int l, double l1, double r1, double l2, double r2) {
  double integral = 0.0;
  if (l1 == l2 && r1 == r2) {
    // Split along the diagonal where the kernel has a kink.
    integral = Gauss::integrate([&](double t) {
      return Gauss::integrate([&](double s) { return chain.kernel(j, l, s, t); }, l1, t);
    }, l1, r1);
    integral += Gauss::integrate([&](double s) {
      return Gauss::integrate([&](double t) { return chain.kernel(j, l, s, t); }, l1, s);
    }, l1, r1);
  } else {
    integral = Gauss::integrate([&](double s) {
      return Gauss::integrate([&](double t) { return chain.kernel(j, l, s, t); }, l2, r2);
    }, l1, r1);
  }
  return integral / ((r1 - l1) * (r2 - l2));
}

double operator_norm_difference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                const Eigen::VectorXd& metric) {
  const Eigen::VectorXd root = metric.cwiseSqrt();
  const Eigen::MatrixXd diff = root.asDiagonal() * (a - b) * root.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (diff + diff.transpose()),
                                                        Eigen::EigenvaluesOnly);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

void ProcessSpec::validate() const {
  const int q = states.size();
  if (q < 1) throw ValidationError("process spec needs at least one state");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be positive");
  if (!(tick > 0.0)) throw ValidationError("tick must be positive");
  if (mode == Protocol::tds) {
    if (initial.size() != q) throw ValidationError("initial distribution has the wrong length");
    if ((initial.array() < 0.0).any() || std::abs(initial.sum() - 1.0) > 1e-12)
      throw ValidationError("initial distribution must be non-negative and sum to 1");
    if (transitions.rows() != q || transitions.cols() != q)
      throw ValidationError("transition matrix must be q x q");
    for (int j = 0; j < q; ++j) {
      if (transitions(j, j) != 0.0) throw ValidationError("transition matrix must have a zero diagonal");
      if ((transitions.row(j).array() < 0.0).any())
        throw ValidationError("transition probabilities must be non-negative");
      const double s = transitions.row(j).sum();
      if (s != 0.0 && std::abs(s - 1.0) > 1e-12)
        throw ValidationError("transition row " + std::to_string(j) + " must sum to 1 (or 0 for absorbing)");
    }
    if (static_cast<int>(sojourn.size()) != q) throw ValidationError("need one sojourn law per state");
    for (int j = 0; j < q; ++j) check_sojourn(sojourn[static_cast<std::size_t>(j)], "sojourn of " + states.label(j));
  } else {
    if (static_cast<int>(overlay.size()) != q) throw ValidationError("need one on/off spec per state");
    for (int j = 0; j < q; ++j) {
      const auto& o = overlay[static_cast<std::size_t>(j)];
      check_sojourn(o.on, "on-time of " + states.label(j));
      check_sojourn(o.off, "off-time of " + states.label(j));
      if (!(o.initial_on >= 0.0 && o.initial_on <= 1.0))
        throw ValidationError("initial_on must be a probability");
    }
  }
}

ProcessSpec process_spec_from_json(const nlohmann::json& j) {
  ProcessSpec s;
  try {
    s.states = StateSpace(j.at("states").get<std::vector<std::string>>());
    s.mode = protocol_from_string(j.value("mode", std::string("TDS")));
    s.horizon = j.value("horizon", 1.0);
    s.tick = j.value("tick", 1e-6);
    const int q = s.states.size();
    if (s.mode == Protocol::tds) {
      const auto init = j.at("initial").get<std::vector<double>>();
      s.initial = Eigen::Map<const Eigen::VectorXd>(init.data(), static_cast<Eigen::Index>(init.size()));
      const auto rows = j.at("transitions").get<std::vector<std::vector<double>>>();
      s.transitions = Eigen::MatrixXd::Zero(q, q);
      if (static_cast<int>(rows.size()) != q) throw ValidationError("transition matrix must be q x q");
      for (int a = 0; a < q; ++a) {
        if (static_cast<int>(rows[static_cast<std::size_t>(a)].size()) != q)
          throw ValidationError("transition matrix must be q x q");
        for (int b = 0; b < q; ++b) s.transitions(a, b) = rows[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
      }
      for (const auto& x : j.at("sojourn")) s.sojourn.push_back(sojourn_from_json(x));
    } else {
      for (const auto& x : j.at("overlay"))
        s.overlay.push_back({sojourn_from_json(x.at("on")), sojourn_from_json(x.at("off")),
                             x.value("initial_on", 0.0)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid process spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const ProcessSpec& s) {
  nlohmann::json j{{"states", s.states.labels()},
                   {"mode", std::string(to_string(s.mode))},
                   {"horizon", s.horizon},
                   {"tick", s.tick}};
  if (s.mode == Protocol::tds) {
    j["initial"] = std::vector<double>(s.initial.data(), s.initial.data() + s.initial.size());
    auto rows = nlohmann::json::array();
    for (int a = 0; a < s.transitions.rows(); ++a) {
      std::vector<double> row(static_cast<std::size_t>(s.transitions.cols()));
      for (int b = 0; b < s.transitions.cols(); ++b) row[static_cast<std::size_t>(b)] = s.transitions(a, b);
      rows.push_back(row);
    }
    j["transitions"] = rows;
    j["sojourn"] = nlohmann::json::array();
    for (const auto& x : s.sojourn) j["sojourn"].push_back(sojourn_to_json(x));
  } else {
    j["overlay"] = nlohmann::json::array();
    for (const auto& o : s.overlay)
      j["overlay"].push_back({{"on", sojourn_to_json(o.on)}, {"off", sojourn_to_json(o.off)},
                              {"initial_on", o.initial_on}});
  }
  return j;
}

std::vector<EventRecord> simulate_events(const ProcessSpec& spec, int n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw ValidationError("simulation needs n >= 1");
  std::vector<EventRecord> rows;
  const double horizon = spec.horizon;
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    const std::string subject = subject_name(i);
    if (spec.mode == Protocol::tds) {
      int state = rng.categorical(spec.initial);
      double t = 0.0;
      while (true) {
        rows.push_back({subject, "sim", spec.states.label(state), t, std::nullopt, 0});
        t += spec.sojourn[static_cast<std::size_t>(state)].draw(rng);
        if (t >= horizon) break;
        const Eigen::VectorXd row = spec.transitions.row(state).transpose();
        if (row.sum() == 0.0) break;
        state = rng.categorical(row);
      }
    } else {
      for (int j = 0; j < spec.states.size(); ++j) {
        const auto& o = spec.overlay[static_cast<std::size_t>(j)];
        bool on = rng.uniform() < o.initial_on;
        double t = 0.0;
        while (t < horizon) {
          const double d = (on ? o.on : o.off).draw(rng);
          if (on) rows.push_back({subject, "sim", spec.states.label(j), t, std::min(t + d, horizon), 0});
          t += d;
          on = !on;
        }
      }
    }
  }
  return rows;
}

IngestConfig simulation_ingest_config(const ProcessSpec& spec, int n) {
  IngestConfig c;
  c.mode = spec.mode;
  c.descriptors = spec.states;
  c.tasting_end = spec.horizon;
  c.tick = spec.tick;
  for (int i = 0; i < n; ++i) c.sessions.emplace_back(subject_name(i), "sim");
  return c;
}

Panel simulate_panel(const ProcessSpec& spec, int n, std::uint64_t seed) {
  const auto rows = simulate_events(spec, n, seed);
  const auto config = simulation_ingest_config(spec, n);
  IngestReport report;
  return apply_protocol_normalization(parse_events(rows, config, report), config, report);
}

ProbabilityField oracle_covariance(const Panel& panel, const CellGrid& grid) {
  const int n = panel.size();
  const int q = panel.states.size();
  const int m = grid.size();
  // value[i][j][a] = 1 if state j is active for sample i at the midpoint of cell a
  std::vector<std::vector<std::vector<double>>> value(
      static_cast<std::size_t>(n),
      std::vector<std::vector<double>>(static_cast<std::size_t>(q), std::vector<double>(static_cast<std::size_t>(m), 0.0)));
  for (int i = 0; i < n; ++i) {
    const auto& tr = panel.items[static_cast<std::size_t>(i)].trajectory;
    const auto bp = tr.breakpoints();
    for (int a = 0; a < m; ++a) {
      const double mid = 0.5 * (grid.left(a) + grid.right(a));
      int k = 0;
      while (k + 1 < tr.num_segments() && bp[static_cast<std::size_t>(k) + 1] <= mid) ++k;
      for (int j : tr.segment(k)) value[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] = 1.0;
    }
  }
  ProbabilityField f;
  f.states = panel.states;
  f.mode = panel.mode;
  f.grid = grid;
  f.samples = n;
  f.exact = true;
  f.mean = Eigen::MatrixXd::Zero(q, m);
  for (int j = 0; j < q; ++j)
    for (int a = 0; a < m; ++a) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += value[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];
      f.mean(j, a) = s / n;
    }
  f.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q) * m, static_cast<Eigen::Index>(q) * m);
  for (int j = 0; j < q; ++j)
    for (int l = 0; l < q; ++l)
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          double joint = 0.0;
          for (int i = 0; i < n; ++i)
            joint += value[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] *
                     value[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)][static_cast<std::size_t>(b)];
          f.covariance(static_cast<Eigen::Index>(j) * m + a, static_cast<Eigen::Index>(l) * m + b) =
              joint / n - f.mean(j, a) * f.mean(l, b);
        }
  return f;
}

Eigen::VectorXd oracle_spectrum(const ProbabilityField& field, const WeightScheme& weights) {
  const int q = field.num_states();
  const int m = field.cells();
  const int dim = q * m;
  Eigen::MatrixXd a(dim, dim);
  for (int j = 0; j < q; ++j)
    for (int x = 0; x < m; ++x)
      for (int l = 0; l < q; ++l)
        for (int y = 0; y < m; ++y)
          a(j * m + x, l * m + y) = std::sqrt(weights.weights(j) * field.grid.width(x)) *
                                    field.gamma(j, l, x, y) *
                                    std::sqrt(weights.weights(l) * field.grid.width(y));
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < r; ++c) a(r, c) = a(c, r) = 0.5 * (a(r, c) + a(c, r));

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    double total = 0.0;
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) {
        total += a(r, c) * a(r, c);
        if (r != c) off += a(r, c) * a(r, c);
      }
    if (off <= 1e-30 * total || off == 0.0) break;
    for (int p = 0; p < dim - 1; ++p)
      for (int s = p + 1; s < dim; ++s) {
        if (a(p, s) == 0.0) continue;
        const double theta = (a(s, s) - a(p, p)) / (2.0 * a(p, s));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (int k = 0; k < dim; ++k) {
          const double akp = a(k, p), aks = a(k, s);
          a(k, p) = c * akp - sn * aks;
          a(k, s) = sn * akp + c * aks;
        }
        for (int k = 0; k < dim; ++k) {
          const double apk = a(p, k), ask = a(s, k);
          a(p, k) = c * apk - sn * ask;
          a(s, k) = sn * apk + c * ask;
        }
      }
  }
  std::vector<double> ev(static_cast<std::size_t>(dim));
  for (int r = 0; r < dim; ++r) ev[static_cast<std::size_t>(r)] = a(r, r);
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return Eigen::Map<Eigen::VectorXd>(ev.data(), dim);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t h = values.size() / 2;
  return values.size() % 2 == 1 ? values[h] : 0.5 * (values[h - 1] + values[h]);
}

ConsistencyTable consistency_experiment(const ProcessSpec& spec, const std::vector<int>& n_values,
                                        std::uint64_t seed, const ConsistencyOptions& options) {
  spec.validate();
  const int q = spec.states.size();
  const WeightScheme weights = equal_weights(q);
  const CellGrid coarse = CellGrid::uniform(options.operator_cells);
  const Eigen::VectorXd coarse_metric = h_metric(coarse, weights);
  const auto chain = closed_form(spec);

  ConsistencyTable table;
  table.analytic = chain.has_value();

  Eigen::MatrixXd true_kernel;
  Eigen::MatrixXd reference_mean;
  const CellGrid fine = CellGrid::uniform(options.reference_cells);
  if (chain) {
    const int m = coarse.size();
    true_kernel.resize(static_cast<Eigen::Index>(q) * m, static_cast<Eigen::Index>(q) * m);
    for (int j = 0; j < q; ++j)
      for (int l = 0; l < q; ++l)
        for (int a = 0; a < m; ++a)
          for (int b = 0; b < m; ++b)
            true_kernel(j * m + a, l * m + b) =
                cell_average(*chain, j, l, coarse.left(a), coarse.right(a), coarse.left(b), coarse.right(b));
  } else {
    const Panel ref = simulate_panel(spec, options.reference_n, splitmix64(seed ^ 0x5eedULL));
    true_kernel = estimate_field_averaged(ref, coarse).covariance;
    reference_mean = mean_curves(ref, fine);
  }

  for (std::size_t s = 0; s < n_values.size(); ++s) {
    ConsistencyRow row;
    row.n = n_values[s];
    for (int r = 0; r < options.replicates; ++r) {
      const std::uint64_t rep_seed =
          splitmix64(seed + 0x1000003ULL * static_cast<std::uint64_t>(row.n) + static_cast<std::uint64_t>(r));
      const Panel panel = simulate_panel(spec, row.n, rep_seed);
      double err2 = 0.0;
      if (chain) {
        const CellGrid grid = union_grid(panel);
        const Eigen::MatrixXd p_hat = mean_curves(panel, grid);
        for (int j = 0; j < q; ++j)
          for (int a = 0; a < grid.size(); ++a) {
            const double v = p_hat(j, a);
            err2 += weights.weights(j) *
                    Gauss::integrate([&](double u) {
                      const double d = v - chain->prob(j, u);
                      return d * d;
                    }, grid.left(a), grid.right(a));
          }
      } else {
        const Eigen::MatrixXd p_hat = mean_curves(panel, fine);
        const Eigen::VectorXd widths = fine.widths();
        for (int j = 0; j < q; ++j)
          err2 += weights.weights(j) *
                  ((p_hat.row(j) - reference_mean.row(j)).array().square() * widths.transpose().array()).sum();
      }
      row.mean_errors.push_back(std::sqrt(err2));
      const auto field = estimate_field_averaged(panel, coarse);
      row.operator_errors.push_back(operator_norm_difference(field.covariance, true_kernel, coarse_metric));
    }
    row.median_mean_error = median(row.mean_errors);
    row.median_operator_error = median(row.operator_errors);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace catfpca
