#pragma once

// AC power flow in polar coordinates (Newton-Raphson) and the flow
// quantities extracted from a solved state.

#include <complex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "ecogrid/case_model.hpp"

namespace ecogrid {

using Complex = std::complex<double>;

struct SolverOptions {
  double tolerance = 1e-8;  // max |mismatch|, pu
  int max_iterations = 30;
  bool flat_start = true;   // angles 0, PQ magnitudes 1.0
  bool enforce_q_limits = true;

  /// Throws std::invalid_argument when tolerance <= 0 or max_iterations < 1.
  void check() const;
};

/// Bus admittance matrix over all buses of a network, indexed by bus
/// position (not id). Only in-service branches contribute.
struct AdmittanceMatrix {
  Eigen::SparseMatrix<Complex> Y;
  std::vector<int> bus_ids;
};

AdmittanceMatrix build_admittance(const Network& network);

enum class SolveStatus { Converged, Diverged, SingularJacobian, NoGeneration };

std::string_view to_string(SolveStatus status);

struct BusResult {
  int id = 0;
  bool energized = false;  // false for buses outside the solved island
  BusKind solved_kind = BusKind::PQ;  // kind after PV->PQ switching
  double voltage_magnitude = 0.0;     // pu
  double voltage_angle = 0.0;         // rad
  double shunt_P_consumed = 0.0;      // MW
  double shunt_Q_injected = 0.0;      // Mvar
};

struct GeneratorResult {
  int id = 0;
  int bus = 0;
  bool active = false;  // in service and inside the solved island
  double P_out = 0.0;   // MW
  double Q_out = 0.0;   // Mvar
};

/// Flows into the branch at each terminal (MW / Mvar / MVA).
struct BranchFlow {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  bool active = false;
  double P_from = 0.0;
  double Q_from = 0.0;
  double P_to = 0.0;
  double Q_to = 0.0;
  double S_from = 0.0;
  double S_to = 0.0;

  [[nodiscard]] double loss_P() const { return P_from + P_to; }
  [[nodiscard]] double loss_Q() const { return Q_from + Q_to; }
};

struct PowerFlowSolution {
  SolveStatus status = SolveStatus::Diverged;
  bool converged = false;
  int iterations = 0;
  double max_mismatch = 0.0;  // pu, at the final iterate
  int slack_bus = 0;          // reference bus actually used
  std::vector<int> island;    // ids of the solved buses, ascending
  std::vector<BusResult> buses;            // same order as Network::buses
  std::vector<GeneratorResult> generators; // same order as Network::generators
  std::vector<BranchFlow> branches;        // same order as Network::branches
  std::string message;

  /// Complex bus voltages by bus position; zero for de-energized buses.
  [[nodiscard]] std::vector<Complex> phasors() const;
};

/// Solves the island containing the slack bus. Numeric failures are
/// reported through `status`; structural problems (no slack bus, zero
/// impedance) throw std::invalid_argument.
PowerFlowSolution solve(const Network& network, const SolverOptions& options = {});

/// As above, starting from the voltages of `warm_start` where available.
PowerFlowSolution solve(const Network& network, const SolverOptions& options, const PowerFlowSolution& warm_start);

/// Terminal flows of every branch for the given bus phasors. Out-of-service
/// branches, or branches touching a zero-voltage bus, are marked inactive.
std::vector<BranchFlow> branch_flows(const Network& network, std::span<const Complex> voltages);

/// Net generation per bus, MW / Mvar.
struct BusInjection {
  double P_gen = 0.0;
  double Q_gen = 0.0;
};

/// Scheduled generation from the case dispatch (in-service units only).
std::vector<BusInjection> scheduled_injections(const Network& network);

struct NodalMismatch {
  double dP = 0.0;  // pu
  double dQ = 0.0;  // pu
};

/// dP_i = P_gen_i - P_load_i - P_i(V), likewise for Q, where P_i(V) includes
/// the bus shunt. Indexed by bus position.
std::vector<NodalMismatch> nodal_mismatch(const Network& network, std::span<const Complex> voltages,
                                          std::span<const BusInjection> injections);

/// Mismatch of a solution using its own generator outputs.
std::vector<NodalMismatch> nodal_mismatch(const Network& network, const PowerFlowSolution& solution);

/// Jacobian of the calculated injections S_i(V) = V_i conj((Y V)_i) with
/// respect to [angles; magnitudes]. Rows are [P_0..P_n-1, Q_0..Q_n-1], pu.
Eigen::SparseMatrix<double> injection_jacobian(const AdmittanceMatrix& ybus, std::span<const Complex> voltages);

}  // namespace ecogrid
