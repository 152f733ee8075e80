#include "ecogrid/metadata.hpp"

#include <fmt/format.h>

#ifndef ECOGRID_VERSION
#define ECOGRID_VERSION "0.0.0"
#endif

namespace ecogrid {

std::string_view version() { return ECOGRID_VERSION; }

namespace {

std::vector<std::pair<std::string, std::string>> conventions(const RunMetadata& meta) {
  return {
      {"loss_allocation", "branch entry at sending terminal; loss to dissipation of receiving bus"},
      {"reactive_sign_rule",
       "net negative branch loss enters receiving bus from input; branch absorbing at both ends dissipates at each bus; "
       "branch sourcing both ends enters both buses from input"},
      {"apparent_direction", "follows real power (reactive sign when P = 0); buses closed against input/dissipation"},
      {"absorbed_reactive",
       meta.matrix.absorbed_reactive == AbsorbedReactive::Export ? "useful_export" : "dissipation"},
      {"shunt_real_power", "G*V^2 to bus dissipation; shunt actors carry reactive/apparent only"},
      {"aggregate_rule", "signed sum of same-bus unit outputs before the direction rule"},
      {"ascendency_form", "sum T_ij log2(T_ij TSTp / (row_i col_j)), no leading minus"},
      {"std_type", "population"},
      {"flow_statistic_terminal", "from-bus terminal magnitude"},
      {"slack_allocation", "P by P_max share, Q by Q-range share (Q_min + share)"},
      {"q_limits", meta.solver.enforce_q_limits ? "enforced (PV to PQ switching)" : "ignored"},
  };
}

}  // namespace

nlohmann::json to_json(const RunMetadata& meta) {
  nlohmann::json conv = nlohmann::json::object();
  for (const auto& [k, v] : conventions(meta)) conv[k] = v;
  nlohmann::json settings = nlohmann::json::object();
  for (const auto& [k, v] : meta.extra) settings[k] = v;
  return {{"tool", "ecogrid"},
          {"version", version()},
          {"case", meta.case_path},
          {"case_sha256", meta.case_sha256},
          {"solver", {{"tolerance", meta.solver.tolerance}, {"max_iterations", meta.solver.max_iterations}}},
          {"conventions", std::move(conv)},
          {"settings", std::move(settings)}};
}

std::vector<std::pair<std::string, std::string>> flatten(const RunMetadata& meta) {
  std::vector<std::pair<std::string, std::string>> out{
      {"tool", fmt::format("ecogrid {}", version())},
      {"case", meta.case_path},
      {"case_sha256", meta.case_sha256},
      {"tolerance", fmt::format("{}", meta.solver.tolerance)},
  };
  for (auto& kv : conventions(meta)) out.push_back(std::move(kv));
  for (const auto& kv : meta.extra) out.push_back(kv);
  return out;
}

}  // namespace ecogrid
