#include "ecogrid/stats_report.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace ecogrid {

FlowStats flow_stats(std::span<const BranchFlow> flows, FlowType flow) {
  FlowStats s;
  s.flow = flow;
  double sum = 0.0;
  std::vector<double> samples;
  samples.reserve(flows.size());
  for (const auto& f : flows) {
    if (!f.active) continue;
    double v = 0.0;
    switch (flow) {
      case FlowType::Real: v = std::abs(f.P_from); break;
      case FlowType::Reactive: v = std::abs(f.Q_from); break;
      case FlowType::Apparent: v = f.S_from; break;
    }
    samples.push_back(v);
    sum += v;
  }
  if (samples.empty()) throw std::invalid_argument("no active branches for flow statistics");
  s.sample_count = samples.size();
  s.mean = sum / static_cast<double>(samples.size());
  double ss = 0.0;
  for (double v : samples) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(samples.size()));
  return s;
}

FlowStats flow_stats(const PowerFlowSolution& solution, FlowType flow) {
  if (!solution.converged) throw std::invalid_argument("flow statistics require a converged solution");
  return flow_stats(solution.branches, flow);
}

std::array<FlowStats, 3> all_flow_stats(const PowerFlowSolution& solution) {
  return {flow_stats(solution, FlowType::Real), flow_stats(solution, FlowType::Reactive),
          flow_stats(solution, FlowType::Apparent)};
}

std::vector<RecoEntry> reco_table(const Network& network, const PowerFlowSolution& solution,
                                  const MatrixOptions& options) {
  std::vector<RecoEntry> out;
  for (auto flow : {FlowType::Real, FlowType::Reactive, FlowType::Apparent}) {
    for (auto mode : {RedundancyMode::Aggregate, RedundancyMode::Split}) {
      out.push_back({flow, mode, metrics(build_eco_matrix(network, solution, flow, mode, options))});
    }
  }
  return out;
}

CaseComparison compare_case(const Network& network, const PowerFlowSolution& solution, std::string checksum,
                            const MatrixOptions& options) {
  CaseComparison c;
  c.case_name = network.name;
  c.checksum = std::move(checksum);
  c.reco = reco_table(network, solution, options);
  c.stats = all_flow_stats(solution);
  return c;
}

std::string reco_column(FlowType flow, RedundancyMode mode) {
  return fmt::format("R_{}_{}", to_string(flow), to_string(mode));
}

std::string stats_csv(const std::vector<CaseComparison>& cases) {
  std::string out = "case,Mean(pf),STD(pf),Mean(rf),STD(rf),Mean(MVA),STD(MVA)\n";
  for (const auto& c : cases) {
    out += c.case_name;
    for (const auto& s : c.stats) out += fmt::format(",{:.6f},{:.6f}", s.mean, s.std);
    out += '\n';
  }
  return out;
}

std::string comparison_csv(const std::vector<CaseComparison>& cases) {
  int max_depth = 0;
  for (const auto& c : cases) {
    if (c.survivability) max_depth = std::max(max_depth, static_cast<int>(c.survivability->size()));
  }

  std::string out = "case,case_sha256";
  for (auto flow : {FlowType::Real, FlowType::Reactive, FlowType::Apparent}) {
    for (auto mode : {RedundancyMode::Aggregate, RedundancyMode::Split}) out += "," + reco_column(flow, mode);
  }
  out += ",Mean(pf),STD(pf),Mean(rf),STD(rf),Mean(MVA),STD(MVA)";
  for (int d = 1; d <= max_depth; ++d) {
    out += fmt::format(",N{0}_total,N{0}_violations,N{0}_violated,N{0}_unsolved", d);
  }
  out += '\n';

  for (const auto& c : cases) {
    out += fmt::format("{},{}", c.case_name, c.checksum);
    for (const auto& r : c.reco) out += fmt::format(",{:.10f}", r.metrics.robustness);
    for (const auto& s : c.stats) out += fmt::format(",{:.6f},{:.6f}", s.mean, s.std);
    for (int d = 0; d < max_depth; ++d) {
      if (c.survivability && d < static_cast<int>(c.survivability->size())) {
        const auto& s = (*c.survivability)[static_cast<std::size_t>(d)];
        out += fmt::format(",{},{},{},{}", s.total_contingencies, s.num_violations, s.num_violated_contingencies,
                           s.num_unsolved);
      } else {
        out += ",,,,";
      }
    }
    out += '\n';
  }
  return out;
}

nlohmann::json comparison_json(const std::vector<CaseComparison>& cases) {
  using nlohmann::json;
  json rows = json::array();
  for (const auto& c : cases) {
    json reco = json::array();
    for (const auto& r : c.reco) {
      reco.push_back({{"flow", to_string(r.flow)},
                      {"mode", to_string(r.mode)},
                      {"tstp", r.metrics.tstp},
                      {"asc", r.metrics.asc},
                      {"dc", r.metrics.dc},
                      {"ratio", r.metrics.ratio},
                      {"robustness", r.metrics.robustness}});
    }
    json stats = json::array();
    for (const auto& s : c.stats) {
      stats.push_back({{"flow", to_string(s.flow)},
                       {"units", units_of(s.flow)},
                       {"mean", s.mean},
                       {"std", s.std},
                       {"sample_count", s.sample_count}});
    }
    json row = {{"case", c.case_name}, {"case_sha256", c.checksum}, {"reco", std::move(reco)}, {"flow_stats", std::move(stats)}};
    if (c.survivability) {
      json surv = json::array();
      for (const auto& d : *c.survivability) {
        surv.push_back({{"depth", d.depth},
                        {"total_contingencies", d.total_contingencies},
                        {"num_violations", d.num_violations},
                        {"num_violated_contingencies", d.num_violated_contingencies},
                        {"num_unsolved", d.num_unsolved}});
      }
      row["survivability"] = std::move(surv);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ecogrid
