#ifndef CATFPCA_INGESTION_HPP
#define CATFPCA_INGESTION_HPP

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "catfpca/trajectory.hpp"

namespace catfpca {

/// One row of an event log. TDS rows usually carry no offset: a dominance
/// period lasts until the next click.
struct EventRecord {
  std::string subject;
  std::string product;
  std::string descriptor;
  double onset = 0.0;
  std::optional<double> offset;
  std::size_t row = 0;  // 1-based data row in the source file, 0 if synthetic
};

/// Sidecar settings that accompany an event CSV.
struct IngestConfig {
  Protocol mode = Protocol::tds;
  StateSpace descriptors;
  std::optional<double> tasting_end;               // default end of tasting, seconds
  std::map<std::string, double> end_by_subject;    // per-subject override
  std::vector<std::pair<std::string, std::string>> sessions;  // declared even without rows
  double tick = 1e-6;                              // in normalized time units
  bool drop_empty_tds = false;

  double end_for(const std::string& subject) const;
};

IngestConfig ingest_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const IngestConfig& config);
IngestConfig read_sidecar(const std::filesystem::path& path);

struct IngestReport {
  std::size_t rows = 0;
  std::size_t trajectories = 0;
  std::size_t warnings = 0;
  std::vector<std::string> warning_messages;
  std::vector<std::string> rejected_subjects;
  std::size_t boundary_adjustments = 0;
  std::map<std::string, std::size_t> clicks_per_state;
  std::map<std::string, double> mean_duration_per_state;  // normalized time

  void warn(std::string message);
};

nlohmann::json to_json(const IngestReport& report);

/// A parsed, not yet normalized session. TDS sessions without any click
/// carry no trajectory.
struct RawSession {
  std::string subject;
  std::string product;
  double end = 0.0;
  std::optional<CategoricalTrajectory> trajectory;
};

struct RawPanel {
  StateSpace states;
  Protocol mode = Protocol::tds;
  std::vector<RawSession> sessions;
};

struct PanelItem {
  std::string subject;
  std::string condition;
  CategoricalTrajectory trajectory;

  bool operator==(const PanelItem&) const = default;
};

/// n trajectories over a common state space, all on [0, 1].
struct Panel {
  StateSpace states;
  Protocol mode = Protocol::tds;
  std::vector<PanelItem> items;

  int size() const { return static_cast<int>(items.size()); }
  std::vector<IndicatorTrajectory> indicators() const;

  bool operator==(const Panel&) const = default;
};

CellGrid union_grid(const Panel& panel);

std::vector<EventRecord> read_events_csv(std::istream& in);
std::vector<EventRecord> read_events_csv(const std::filesystem::path& path);
void write_events_csv(std::ostream& out, const std::vector<EventRecord>& rows);

/// Groups rows by (subject, product) and overlays them into trajectories on
/// [0, tasting end]. TDS sessions start at their first click.
RawPanel parse_events(const std::vector<EventRecord>& rows, const IngestConfig& config,
                      IngestReport& report);

/// TDS: latency removed, then rescaled to [0, 1]. TCATA: rescaled with the
/// latency kept, and forced to the empty set at both ends.
Panel apply_protocol_normalization(const RawPanel& raw, const IngestConfig& config,
                                   IngestReport& report);

Panel ingest(const std::filesystem::path& csv, const IngestConfig& config, IngestReport& report);

nlohmann::json panel_to_json(const Panel& panel);
Panel panel_from_json(const nlohmann::json& j);
void write_panel(const std::filesystem::path& path, const Panel& panel);
Panel read_panel(const std::filesystem::path& path);

/// Structural checks on a panel; returns one message per violation.
std::vector<std::string> validate_panel(const Panel& panel);

}  // namespace catfpca

#endif  // CATFPCA_INGESTION_HPP
