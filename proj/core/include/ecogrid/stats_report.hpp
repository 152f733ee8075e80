#pragma once

// Branch-flow distribution statistics and the per-case comparison table
// (R_ECO for every flow type and redundancy mode plus flow statistics).

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecogrid/contingency.hpp"
#include "ecogrid/eco_matrix.hpp"
#include "ecogrid/eco_metrics.hpp"

namespace ecogrid {

struct FlowStats {
  FlowType flow = FlowType::Real;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t sample_count = 0;
};

/// Statistics over the from-terminal magnitudes |P_from|, |Q_from| or S_from
/// of the active branches. Throws std::invalid_argument with no active branch.
FlowStats flow_stats(std::span<const BranchFlow> flows, FlowType flow);
FlowStats flow_stats(const PowerFlowSolution& solution, FlowType flow);

/// Real, reactive and apparent statistics, in that order.
std::array<FlowStats, 3> all_flow_stats(const PowerFlowSolution& solution);

struct RecoEntry {
  FlowType flow = FlowType::Real;
  RedundancyMode mode = RedundancyMode::Aggregate;
  EcoMetrics metrics;
};

/// The six flow x mode combinations, flow-major (real/aggregate first).
std::vector<RecoEntry> reco_table(const Network& network, const PowerFlowSolution& solution,
                                  const MatrixOptions& options = {});

struct CaseComparison {
  std::string case_name;
  std::string checksum;
  std::vector<RecoEntry> reco;
  std::array<FlowStats, 3> stats{};
  std::optional<std::vector<DepthSummary>> survivability;
};

CaseComparison compare_case(const Network& network, const PowerFlowSolution& solution, std::string checksum,
                            const MatrixOptions& options = {});

/// Columns: case, Mean(pf), STD(pf), Mean(rf), STD(rf), Mean(MVA), STD(MVA).
std::string stats_csv(const std::vector<CaseComparison>& cases);

/// One row per case with the six R_ECO values, six statistics and, when
/// present, survivability counters per depth.
std::string comparison_csv(const std::vector<CaseComparison>& cases);
nlohmann::json comparison_json(const std::vector<CaseComparison>& cases);

/// Column name used for a flow/mode pair, e.g. "R_reactive_split".
std::string reco_column(FlowType flow, RedundancyMode mode);

}  // namespace ecogrid
