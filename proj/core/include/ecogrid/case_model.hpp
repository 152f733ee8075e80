#pragma once

// Static grid description: buses, generators, branches, and the operations
// that read, check, and modify them (outage flags only).

#include <cstddef>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace ecogrid {

enum class BusKind { PQ, PV, Slack };

std::string_view to_string(BusKind kind);

struct Bus {
  int id = 0;
  BusKind kind = BusKind::PQ;
  double voltage_magnitude_setpoint = 1.0;  // pu
  double load_P = 0.0;                      // MW
  double load_Q = 0.0;                      // Mvar
  double shunt_G = 0.0;                     // MW consumed at V = 1 pu
  double shunt_B = 0.0;                     // Mvar injected at V = 1 pu
  double v_min = 0.95;
  double v_max = 1.05;
  double base_kV = 0.0;

  bool operator==(const Bus&) const = default;
};

struct Generator {
  int id = 0;
  int bus = 0;
  double P_out = 0.0;  // MW
  double Q_out = 0.0;  // Mvar
  double Q_min = 0.0;
  double Q_max = 0.0;
  double P_min = 0.0;
  double P_max = 0.0;
  bool in_service = true;
  double voltage_setpoint = 1.0;  // pu

  bool operator==(const Generator&) const = default;
};

struct Branch {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;           // pu
  double x = 0.0;           // pu
  double b_charging = 0.0;  // pu, total
  double rate_MVA = 0.0;    // 0 = unlimited
  double tap_ratio = 0.0;   // 0 means 1.0
  double phase_shift = 0.0; // degrees
  bool in_service = true;

  /// Off-nominal ratio with the format convention (0 -> 1.0) applied.
  [[nodiscard]] double effective_tap() const { return tap_ratio == 0.0 ? 1.0 : tap_ratio; }

  bool operator==(const Branch&) const = default;
};

/// Grid container. Treated as immutable once built; outage studies work on
/// copies produced by apply_outage().
struct Network {
  std::string name;
  double base_MVA = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Branch> branches;

  bool operator==(const Network&) const = default;

  /// Position of bus `id` in `buses`; throws std::out_of_range if absent.
  [[nodiscard]] std::size_t bus_index(int id) const;
  [[nodiscard]] bool has_bus(int id) const;
  [[nodiscard]] const Generator& generator(int id) const;
  [[nodiscard]] const Branch& branch(int id) const;

  /// Map from bus id to position, rebuilt on each call.
  [[nodiscard]] std::unordered_map<int, std::size_t> bus_positions() const;
};

struct OutageSet {
  std::set<int> branch_ids;
  std::set<int> generator_ids;

  [[nodiscard]] std::size_t depth() const { return branch_ids.size() + generator_ids.size(); }
  bool operator==(const OutageSet&) const = default;
};

/// Error raised while reading a case file. line() is 1-based, 0 when the
/// problem is not tied to a single line (e.g. a missing slack bus).
class CaseError : public std::runtime_error {
 public:
  CaseError(const std::string& message, int line = 0);
  [[nodiscard]] int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Parses a MATPOWER-style matrix-block case (version 2): `mpc.baseMVA`,
/// `mpc.bus`, `mpc.gen`, `mpc.branch`. Other blocks (gencost, areas, ...)
/// are skipped. Generator and branch ids are their 1-based row numbers.
Network parse_case(std::string_view text, std::string name = {});

/// Reads a case file from disk; the network name defaults to the file stem.
Network load_case(const std::string& path);

/// Writes `network` back in the same matrix-block dialect. Values are printed
/// with round-trip precision so parse_case(write_case(n)) == n.
std::string write_case(const Network& network);

/// Returns every violated invariant as a readable message naming the element.
std::vector<std::string> validate(const Network& network);

/// Copy of `network` with the listed elements flagged out of service.
/// Throws std::invalid_argument naming the first unknown id.
Network apply_outage(const Network& network, const OutageSet& outage);

/// Islands over in-service branches. Each island lists bus ids in ascending
/// order; islands are ordered by their smallest bus id.
std::vector<std::vector<int>> connected_components(const Network& network);

nlohmann::json to_json(const Network& network);

/// Lowercase hex SHA-256 of the raw case-file bytes.
std::string sha256_hex(std::string_view bytes);

}  // namespace ecogrid
