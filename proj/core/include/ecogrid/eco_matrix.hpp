#pragma once

// Ecological flow matrix [T] of a solved operating point.
//
// Actors are generators, bus shunts and buses of the solved island; three
// environs close the system boundary. Index layout, with A actors:
//
//   0 .. A-1   actors (generators, then shunts, then buses)
//   A          input environ (row only)
//   A + 1      useful export environ (column only)
//   A + 2      dissipation environ (column only)
//
// Every entry is a nonnegative flow in MW, Mvar or MVA.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ecogrid/case_model.hpp"
#include "ecogrid/powerflow.hpp"

namespace ecogrid {

enum class FlowType { Real, Reactive, Apparent };
enum class RedundancyMode { Aggregate, Split };

std::string_view to_string(FlowType flow);
std::string_view to_string(RedundancyMode mode);
std::string_view units_of(FlowType flow);
FlowType parse_flow_type(std::string_view text);
RedundancyMode parse_redundancy_mode(std::string_view text);

enum class ActorKind { Generator, Shunt, Bus };

struct ActorLabel {
  ActorKind kind = ActorKind::Bus;
  int id = 0;              // generator id, or bus id for shunts/buses/aggregated units
  bool aggregated = false; // generator actor standing for every unit at bus `id`

  /// `gen:<id>`, `gen:bus<bus>` (aggregated), `shunt:<bus>` or `bus:<id>`.
  [[nodiscard]] std::string text() const;
  static ActorLabel parse(std::string_view text);

  bool operator==(const ActorLabel&) const = default;
};

/// Where generator reactive absorption goes. Dissipation is the default;
/// Export exists for sensitivity studies.
enum class AbsorbedReactive { Dissipation, Export };

struct MatrixOptions {
  AbsorbedReactive absorbed_reactive = AbsorbedReactive::Dissipation;
};

struct EcoFlowMatrix {
  FlowType flow = FlowType::Real;
  RedundancyMode mode = RedundancyMode::Aggregate;
  std::vector<ActorLabel> actors;
  Eigen::MatrixXd T;

  [[nodiscard]] Eigen::Index actor_count() const { return static_cast<Eigen::Index>(actors.size()); }
  [[nodiscard]] Eigen::Index input() const { return actor_count(); }
  [[nodiscard]] Eigen::Index useful_export() const { return actor_count() + 1; }
  [[nodiscard]] Eigen::Index dissipation() const { return actor_count() + 2; }
  [[nodiscard]] std::string_view units() const { return units_of(flow); }

  /// Labels for all A + 3 indices.
  [[nodiscard]] std::vector<std::string> labels() const;
  /// Index of the actor with this label, if present.
  [[nodiscard]] std::optional<Eigen::Index> find(const ActorLabel& label) const;
};

/// Builds [T] for one flow type and redundancy mode. Throws
/// std::invalid_argument for an unconverged solution or an empty island.
EcoFlowMatrix build_eco_matrix(const Network& network, const PowerFlowSolution& solution, FlowType flow,
                               RedundancyMode mode, const MatrixOptions& options = {});

struct ActorBalance {
  Eigen::Index index = 0;
  double inflow = 0.0;
  double outflow = 0.0;
  [[nodiscard]] double imbalance() const { return std::abs(inflow - outflow); }
};

struct ConservationReport {
  double tstp = 0.0;
  double rel_tol = 0.0;
  std::vector<ActorBalance> actors;          // one per actor, in index order
  std::vector<Eigen::Index> violations;      // actors with imbalance > rel_tol * tstp

  [[nodiscard]] bool ok() const { return violations.empty(); }
  [[nodiscard]] double worst() const;
};

ConservationReport conservation_report(const EcoFlowMatrix& matrix, double rel_tol = 1e-6);

/// CSV with a label header row and a label first column. Leading `# key: value`
/// lines carry flow type, mode, units and any caller-supplied metadata.
std::string export_matrix_csv(const EcoFlowMatrix& matrix,
                              const std::vector<std::pair<std::string, std::string>>& metadata = {});

/// Inverse of export_matrix_csv. Throws std::runtime_error on malformed input.
EcoFlowMatrix import_matrix_csv(std::string_view text);

}  // namespace ecogrid
