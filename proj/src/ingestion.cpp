#include "catfpca/ingestion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/tokenizer.hpp>

#include "catfpca/errors.hpp"

namespace catfpca {

namespace {

using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_number(const std::string& text, std::size_t row, const char* column) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ValidationError("row " + std::to_string(row) + ": column '" + column +
                          "' is not a finite number: '" + text + "'");
  return value;
}

std::string session_name(const std::string& subject, const std::string& product) {
  return subject + "/" + product;
}

struct Interval {
  double onset;
  double offset;
};

CategoricalTrajectory parse_tds_session(std::vector<const EventRecord*> events, double end,
                                        const StateSpace& states, const std::string& name,
                                        IngestReport& report) {
  std::stable_sort(events.begin(), events.end(),
                   [](const EventRecord* a, const EventRecord* b) { return a->onset < b->onset; });
  // Ties on onset: the row appearing last in the file wins.
  std::vector<const EventRecord*> kept;
  for (const auto* e : events) {
    if (!kept.empty() && kept.back()->onset == e->onset) {
      report.warn(session_name(e->subject, e->product) + ": simultaneous TDS clicks at t=" +
                  std::to_string(e->onset) + " (rows " + std::to_string(kept.back()->row) + ", " +
                  std::to_string(e->row) + "); keeping the later row");
      if (e->row >= kept.back()->row) kept.back() = e;
      continue;
    }
    kept.push_back(e);
  }
  std::vector<double> bp;
  std::vector<StateSet> seg;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto& e = *kept[k];
    if (e.onset >= end)
      throw ValidationError("row " + std::to_string(e.row) + " (" + name + "): click at t=" +
                            std::to_string(e.onset) + " is not before the end of tasting");
    const double next = k + 1 < kept.size() ? kept[k + 1]->onset : end;
    if (e.offset && *e.offset > next)
      throw ValidationError("protocol violation in subject '" + e.subject + "' (" + name +
                            "): overlapping TDS dominance intervals at row " +
                            std::to_string(e.row));
    bp.push_back(e.onset);
    seg.push_back({*states.index_of(e.descriptor)});
    ++report.clicks_per_state[e.descriptor];
  }
  bp.push_back(end);
  return CategoricalTrajectory::canonical(std::move(bp), std::move(seg), Protocol::tds);
}

CategoricalTrajectory parse_tcata_session(const std::vector<const EventRecord*>& events, double end,
                                          const StateSpace& states, const std::string& name,
                                          IngestReport& report) {
  std::vector<std::vector<Interval>> per_state(static_cast<std::size_t>(states.size()));
  for (const auto* e : events) {
    if (e->onset >= end)
      throw ValidationError("row " + std::to_string(e->row) + " (" + name + "): click at t=" +
                            std::to_string(e->onset) + " is not before the end of tasting");
    double offset = end;
    if (!e->offset) {
      report.warn(name + ": unclosed TCATA interval for '" + e->descriptor + "' (row " +
                  std::to_string(e->row) + ") closed at end of tasting");
    } else if (*e->offset > end) {
      report.warn(name + ": interval for '" + e->descriptor + "' (row " + std::to_string(e->row) +
                  ") extends past the end of tasting; clipped");
    } else {
      offset = *e->offset;
    }
    per_state[static_cast<std::size_t>(*states.index_of(e->descriptor))].push_back({e->onset, offset});
    ++report.clicks_per_state[e->descriptor];
  }
  std::vector<double> bounds{0.0, end};
  for (std::size_t j = 0; j < per_state.size(); ++j) {
    auto& iv = per_state[j];
    std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) {
      return a.onset < b.onset || (a.onset == b.onset && a.offset < b.offset);
    });
    std::vector<Interval> merged;
    for (const auto& x : iv) {
      if (!merged.empty() && x.onset <= merged.back().offset) {
        if (x.onset < merged.back().offset)
          report.warn(name + ": overlapping intervals for '" + states.label(static_cast<int>(j)) +
                      "' merged");
        merged.back().offset = std::max(merged.back().offset, x.offset);
      } else {
        merged.push_back(x);
      }
    }
    iv = std::move(merged);
    for (const auto& x : iv) {
      bounds.push_back(x.onset);
      bounds.push_back(x.offset);
    }
  }
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
  std::vector<StateSet> seg(bounds.size() - 1);
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k)
    for (std::size_t j = 0; j < per_state.size(); ++j)
      for (const auto& x : per_state[j])
        if (x.onset <= bounds[k] && x.offset >= bounds[k + 1]) {
          seg[k].push_back(static_cast<int>(j));
          break;
        }
  return CategoricalTrajectory::canonical(std::move(bounds), std::move(seg), Protocol::tcata);
}

// Makes the first and last segments empty by carving out one tick at each end.
CategoricalTrajectory force_empty_ends(const CategoricalTrajectory& traj, double tick,
                                       std::size_t& adjustments) {
  std::vector<double> bp(traj.breakpoints().begin(), traj.breakpoints().end());
  std::vector<StateSet> seg = traj.segments();
  if (!seg.front().empty()) {
    bp.insert(bp.begin() + 1, std::min(tick, bp[1]));
    seg.insert(seg.begin(), StateSet{});
    ++adjustments;
  }
  if (!seg.back().empty()) {
    const double cut = std::max(1.0 - tick, bp[bp.size() - 2]);
    bp.insert(bp.end() - 1, cut);
    seg.push_back(StateSet{});
    ++adjustments;
  }
  return CategoricalTrajectory::canonical(std::move(bp), std::move(seg), Protocol::tcata);
}

}  // namespace

double IngestConfig::end_for(const std::string& subject) const {
  if (auto it = end_by_subject.find(subject); it != end_by_subject.end()) return it->second;
  if (tasting_end) return *tasting_end;
  throw ValidationError("no tasting end time declared for subject '" + subject + "'");
}

IngestConfig ingest_config_from_json(const nlohmann::json& j) {
  IngestConfig c;
  try {
    c.mode = protocol_from_string(j.at("mode").get<std::string>());
    c.descriptors = StateSpace(j.at("descriptors").get<std::vector<std::string>>());
    if (j.contains("tasting_end")) c.tasting_end = j.at("tasting_end").get<double>();
    if (j.contains("tasting_end_by_subject"))
      c.end_by_subject = j.at("tasting_end_by_subject").get<std::map<std::string, double>>();
    if (j.contains("sessions"))
      for (const auto& s : j.at("sessions"))
        c.sessions.emplace_back(s.at("subject").get<std::string>(), s.at("product").get<std::string>());
    if (j.contains("tick")) c.tick = j.at("tick").get<double>();
    if (j.contains("drop_empty_tds")) c.drop_empty_tds = j.at("drop_empty_tds").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid sidecar: ") + e.what());
  }
  if (!(c.tick > 0.0)) throw ValidationError("invalid sidecar: tick must be positive");
  if (c.tasting_end && !(*c.tasting_end > 0.0))
    throw ValidationError("invalid sidecar: tasting_end must be positive");
  return c;
}

nlohmann::json to_json(const IngestConfig& c) {
  nlohmann::json j;
  j["mode"] = std::string(to_string(c.mode));
  j["descriptors"] = c.descriptors.labels();
  if (c.tasting_end) j["tasting_end"] = *c.tasting_end;
  if (!c.end_by_subject.empty()) j["tasting_end_by_subject"] = c.end_by_subject;
  if (!c.sessions.empty()) {
    j["sessions"] = nlohmann::json::array();
    for (const auto& [s, p] : c.sessions) j["sessions"].push_back({{"subject", s}, {"product", p}});
  }
  j["tick"] = c.tick;
  if (c.drop_empty_tds) j["drop_empty_tds"] = true;
  return j;
}

IngestConfig read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open sidecar " + path.string());
  try {
    return ingest_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("sidecar " + path.string() + " is not valid JSON: " + e.what());
  }
}

void IngestReport::warn(std::string message) {
  ++warnings;
  warning_messages.push_back(std::move(message));
}

nlohmann::json to_json(const IngestReport& r) {
  return {{"rows", r.rows},
          {"trajectories", r.trajectories},
          {"warnings", r.warnings},
          {"warning_messages", r.warning_messages},
          {"rejected_subjects", r.rejected_subjects},
          {"boundary_adjustments", r.boundary_adjustments},
          {"clicks_per_state", r.clicks_per_state},
          {"mean_duration_per_state", r.mean_duration_per_state}};
}

std::vector<IndicatorTrajectory> Panel::indicators() const {
  std::vector<IndicatorTrajectory> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(to_indicators(item.trajectory, states));
  return out;
}

CellGrid union_grid(const Panel& panel) {
  const auto ind = panel.indicators();
  return union_grid(std::span<const IndicatorTrajectory>(ind));
}

std::vector<EventRecord> read_events_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("event CSV is empty (missing header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::map<std::string, std::size_t> columns;
  {
    Tokenizer tok(line);
    std::size_t c = 0;
    for (const auto& name : tok) columns[trim(name)] = c++;
  }
  for (const char* required : {"subject", "product", "descriptor", "onset"})
    if (!columns.contains(required))
      throw ValidationError(std::string("event CSV header lacks column '") + required + "'");
  const auto offset_col = columns.contains("offset") ? std::optional(columns["offset"]) : std::nullopt;

  std::vector<EventRecord> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    try {
      Tokenizer tok(line);
      for (const auto& f : tok) fields.push_back(trim(f));
    } catch (const boost::escaped_list_error& e) {
      throw ValidationError("row " + std::to_string(row) + ": malformed CSV: " + e.what());
    }
    if (fields.size() != columns.size())
      throw ValidationError("row " + std::to_string(row) + ": expected " +
                            std::to_string(columns.size()) + " fields, found " +
                            std::to_string(fields.size()));
    EventRecord e;
    e.row = row;
    e.subject = fields[columns["subject"]];
    e.product = fields[columns["product"]];
    e.descriptor = fields[columns["descriptor"]];
    if (e.subject.empty() || e.descriptor.empty())
      throw ValidationError("row " + std::to_string(row) + ": subject and descriptor are required");
    e.onset = parse_number(fields[columns["onset"]], row, "onset");
    if (offset_col && !fields[*offset_col].empty())
      e.offset = parse_number(fields[*offset_col], row, "offset");
    rows.push_back(std::move(e));
  }
  return rows;
}

std::vector<EventRecord> read_events_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open event CSV " + path.string());
  return read_events_csv(in);
}

void write_events_csv(std::ostream& out, const std::vector<EventRecord>& rows) {
  const auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\\\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') q += '\\';
      q += c;
    }
    return q + "\"";
  };
  out << "subject,product,descriptor,onset,offset\n";
  char buf[64];
  for (const auto& e : rows) {
    out << quote(e.subject) << ',' << quote(e.product) << ',' << quote(e.descriptor) << ',';
    std::snprintf(buf, sizeof buf, "%.17g", e.onset);
    out << buf << ',';
    if (e.offset) {
      std::snprintf(buf, sizeof buf, "%.17g", *e.offset);
      out << buf;
    }
    out << '\n';
  }
}

RawPanel parse_events(const std::vector<EventRecord>& rows, const IngestConfig& config,
                      IngestReport& report) {
  const StateSpace& states = config.descriptors;
  std::map<std::pair<std::string, std::string>, std::vector<const EventRecord*>> groups;
  for (const auto& [s, p] : config.sessions) groups[{s, p}];
  for (const auto& e : rows) {
    if (!states.index_of(e.descriptor))
      throw ValidationError("row " + std::to_string(e.row) + ": unknown descriptor '" +
                            e.descriptor + "'");
    if (e.onset < 0.0)
      throw ValidationError("row " + std::to_string(e.row) + ": negative onset");
    if (e.offset && !(*e.offset > e.onset))
      throw ValidationError("row " + std::to_string(e.row) + ": offset must exceed onset");
    groups[{e.subject, e.product}].push_back(&e);
  }
  report.rows += rows.size();

  RawPanel raw{states, config.mode, {}};
  for (auto& [key, events] : groups) {
    const auto& [subject, product] = key;
    const double end = config.end_for(subject);
    if (!(end > 0.0)) throw ValidationError("subject '" + subject + "': tasting end must be positive");
    RawSession session{subject, product, end, std::nullopt};
    const auto name = session_name(subject, product);
    if (config.mode == Protocol::tds) {
      if (!events.empty())
        session.trajectory = parse_tds_session(std::move(events), end, states, name, report);
    } else {
      session.trajectory = parse_tcata_session(events, end, states, name, report);
    }
    raw.sessions.push_back(std::move(session));
  }
  return raw;
}

Panel apply_protocol_normalization(const RawPanel& raw, const IngestConfig& config,
                                   IngestReport& report) {
  Panel panel{raw.states, raw.mode, {}};
  std::vector<std::string> rejected;
  for (const auto& s : raw.sessions) {
    if (!s.trajectory) {
      rejected.push_back(s.subject + "/" + s.product);
      continue;
    }
    auto traj = quantize_time(normalize_time(*s.trajectory), config.tick);
    if (raw.mode == Protocol::tcata) traj = force_empty_ends(traj, config.tick, report.boundary_adjustments);
    panel.items.push_back({s.subject, s.product, std::move(traj)});
  }
  if (!rejected.empty()) {
    std::string list;
    for (const auto& r : rejected) list += (list.empty() ? "" : ", ") + r;
    if (!config.drop_empty_tds)
      throw ValidationError("TDS trajectories without any click rejected: " + list);
    report.rejected_subjects.insert(report.rejected_subjects.end(), rejected.begin(), rejected.end());
    report.warn("dropped " + std::to_string(rejected.size()) + " TDS session(s) without clicks");
  }
  if (panel.items.empty()) throw ValidationError("panel has no trajectories");

  report.trajectories = panel.items.size();
  std::vector<double> duration(static_cast<std::size_t>(panel.states.size()), 0.0);
  for (const auto& item : panel.items) {
    const auto bp = item.trajectory.breakpoints();
    for (int k = 0; k < item.trajectory.num_segments(); ++k)
      for (int j : item.trajectory.segment(k))
        duration[static_cast<std::size_t>(j)] += bp[k + 1] - bp[k];
  }
  for (int j = 0; j < panel.states.size(); ++j) {
    report.mean_duration_per_state[panel.states.label(j)] =
        duration[static_cast<std::size_t>(j)] / static_cast<double>(panel.items.size());
    report.clicks_per_state.try_emplace(panel.states.label(j), 0);
  }
  return panel;
}

Panel ingest(const std::filesystem::path& csv, const IngestConfig& config, IngestReport& report) {
  const auto rows = read_events_csv(csv);
  return apply_protocol_normalization(parse_events(rows, config, report), config, report);
}

nlohmann::json panel_to_json(const Panel& panel) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : panel.items) {
    const auto bp = item.trajectory.breakpoints();
    items.push_back({{"subject", item.subject},
                     {"condition", item.condition},
                     {"breakpoints", std::vector<double>(bp.begin(), bp.end())},
                     {"segments", item.trajectory.segments()}});
  }
  return {{"format", "catfpca-panel"},
          {"version", 1},
          {"mode", std::string(to_string(panel.mode))},
          {"states", panel.states.labels()},
          {"trajectories", std::move(items)}};
}

Panel panel_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "catfpca-panel")
      throw ValidationError("not a catfpca panel file");
    Panel panel;
    panel.mode = protocol_from_string(j.at("mode").get<std::string>());
    panel.states = StateSpace(j.at("states").get<std::vector<std::string>>());
    for (const auto& t : j.at("trajectories")) {
      panel.items.push_back({t.at("subject").get<std::string>(), t.at("condition").get<std::string>(),
                             CategoricalTrajectory(t.at("breakpoints").get<std::vector<double>>(),
                                                   t.at("segments").get<std::vector<StateSet>>(),
                                                   panel.mode)});
    }
    return panel;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed panel file: ") + e.what());
  }
}

void write_panel(const std::filesystem::path& path, const Panel& panel) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << panel_to_json(panel).dump(1) << '\n';
}

Panel read_panel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open panel file " + path.string());
  try {
    return panel_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("panel file " + path.string() + " is not valid JSON: " + e.what());
  }
}

std::vector<std::string> validate_panel(const Panel& panel) {
  std::vector<std::string> issues;
  if (panel.items.empty()) issues.emplace_back("panel is empty");
  std::vector<IndicatorTrajectory> ind;
  for (std::size_t i = 0; i < panel.items.size(); ++i) {
    const auto& item = panel.items[i];
    const auto& tr = item.trajectory;
    const std::string who = "trajectory " + std::to_string(i) + " (" + item.subject + "/" +
                            item.condition + ")";
    if (tr.mode() != panel.mode) issues.push_back(who + ": protocol differs from panel");
    if (tr.start() != 0.0 || tr.horizon() != 1.0)
      issues.push_back(who + ": support is not [0, 1]");
    try {
      ind.push_back(to_indicators(tr, panel.states));
    } catch (const ValidationError& e) {
      issues.push_back(who + ": " + e.what());
      continue;
    }
    const auto& x = ind.back();
    for (int k = 0; k < x.num_segments(); ++k) {
      if (k > 0 && x.values.col(k) == x.values.col(k - 1))
        issues.push_back(who + ": segments " + std::to_string(k - 1) + "," + std::to_string(k) +
                         " are equal (not canonical)");
      if (!(x.breakpoints[k + 1] > x.breakpoints[k]))
        issues.push_back(who + ": zero-length segment " + std::to_string(k));
    }
    if (panel.mode == Protocol::tds) {
      for (int k = 0; k < x.num_segments(); ++k)
        if (x.values.col(k).sum() != 1.0) {
          issues.push_back(who + ": indicators do not sum to one on segment " + std::to_string(k));
          break;
        }
    } else {
      if (x.values.col(0).sum() != 0.0) issues.push_back(who + ": TCATA trajectory not empty at t=0");
      if (x.values.col(x.num_segments() - 1).sum() != 0.0)
        issues.push_back(who + ": TCATA trajectory not empty at t=1");
    }
  }
  if (issues.empty() && !ind.empty()) {
    try {
      const auto grid = union_grid(std::span<const IndicatorTrajectory>(ind));
      for (std::size_t i = 0; i < ind.size(); ++i)
        for (double b : ind[i].breakpoints)
          if (!grid.has_node(b)) {
            issues.push_back("trajectory " + std::to_string(i) + " is not constant on the union grid");
            break;
          }
    } catch (const ValidationError& e) {
      issues.emplace_back(e.what());
    }
  }
  return issues;
}

}  // namespace catfpca
