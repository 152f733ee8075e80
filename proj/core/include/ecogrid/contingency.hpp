#pragma once

// N-x contingency enumeration, evaluation and survivability counting.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecogrid/case_model.hpp"
#include "ecogrid/powerflow.hpp"

namespace ecogrid {

struct ElementClasses {
  bool branches = true;
  bool generators = false;

  /// Parses a comma list such as "branch,gen".
  static ElementClasses parse(std::string_view text);
  [[nodiscard]] std::string text() const;
};

struct ContingencySpec {
  OutageSet outage;
  [[nodiscard]] std::size_t depth() const { return outage.depth(); }
  /// e.g. "br7+gen12"
  [[nodiscard]] std::string text() const;
};

enum class ViolationKind { VoltageLow, VoltageHigh, BranchOverload, IslandLoadShed };

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind = ViolationKind::VoltageLow;
  int element = 0;         // bus id, branch id, or smallest bus id of the island
  double magnitude = 0.0;  // pu, MVA or MW beyond the limit
};

enum class ContingencyStatus { Solved, Unsolved };

struct ContingencyResult {
  ContingencySpec spec;
  ContingencyStatus status = ContingencyStatus::Unsolved;
  std::vector<Violation> violations;  // empty when unsolved
  int iterations = 0;
  std::string reason;  // why a contingency is unsolved

  /// Most severe violation, if any: island load shed outranks overloads,
  /// which outrank voltage excursions; ties go to the larger magnitude.
  [[nodiscard]] const Violation* worst() const;
};

struct ContingencyOptions {
  SolverOptions solver;
  double default_v_min = 0.95;  // used when a bus has no limits (both 0)
  double default_v_max = 1.05;
  bool override_voltage_limits = false;  // apply defaults to every bus
  int jobs = 1;
};

/// All depth-sized combinations of in-service elements of the chosen classes,
/// in lexicographic order over (branches by id, then generators by id). With
/// `cap` set and more combinations than `cap`, a seeded uniform sample of
/// `cap` distinct combinations, still returned in lexicographic order.
std::vector<ContingencySpec> enumerate(const Network& network, int depth, const ElementClasses& classes,
                                       std::optional<std::uint64_t> cap = std::nullopt, std::uint64_t seed = 0);

/// Outage, island analysis, solve and limit checks for one contingency.
/// `base` (the intact solution) is used as the first starting point; a flat
/// start is the retry.
ContingencyResult evaluate(const Network& network, const ContingencySpec& spec, const ContingencyOptions& options,
                           const PowerFlowSolution* base = nullptr);

/// Evaluates many specs, optionally on `options.jobs` threads. Results come
/// back in input order regardless of the thread count.
std::vector<ContingencyResult> evaluate_all(const Network& network, const std::vector<ContingencySpec>& specs,
                                            const ContingencyOptions& options);

struct DepthSummary {
  int depth = 0;
  std::uint64_t total_contingencies = 0;
  std::uint64_t num_violations = 0;
  std::uint64_t num_violated_contingencies = 0;
  std::uint64_t num_unsolved = 0;
};

struct SurvivabilityReport {
  std::vector<DepthSummary> depths;
  std::vector<ContingencyResult> results;  // all evaluated contingencies, by depth then order
};

SurvivabilityReport survivability(const Network& network, int max_depth, const ElementClasses& classes,
                                  const ContingencyOptions& options, std::optional<std::uint64_t> cap = std::nullopt,
                                  std::uint64_t seed = 0);

DepthSummary summarize(int depth, const std::vector<ContingencyResult>& results);

nlohmann::json to_json(const SurvivabilityReport& report);

/// One row per contingency: depth, outage ids, status, violation count, worst violation.
std::string results_csv(const std::vector<ContingencyResult>& results);

}  // namespace ecogrid
