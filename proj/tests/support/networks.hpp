#pragma once

// Small fixture networks shared by the unit and acceptance tests.

#include <random>
#include <string>

#include "ecogrid/case_model.hpp"

namespace ecogrid::testing {

/// Path of a file under the repository's data/ directory.
std::string data_file(const std::string& name);

/// IEEE 24-bus RTS as shipped in data/.
Network ieee24();

/// Slack bus 1 (V = 1.0, generator 1) feeding `load_MW` at bus 2 over a
/// single branch with impedance r + j0.1 pu. With `hold_voltage` bus 2 is a
/// PV bus held at 1.0 pu by a zero-P condenser (generator 2); otherwise it
/// is a plain PQ load bus.
Network two_bus(double load_MW = 100.0, double r = 0.0, bool hold_voltage = true);

/// Case-file text of a minimal slack + PQ network.
std::string two_bus_text();

/// `n` buses in a ring, slack generator at bus 1, `load_MW` at every other bus.
Network ring(int n, double load_MW = 10.0);

struct RandomNetworkOptions {
  int min_buses = 3;
  int max_buses = 8;
  double max_load_MW = 40.0;
  bool shunts = true;
  bool line_charging = true;
  bool multi_unit_buses = true;
};

/// Connected, lightly loaded network that solves from a flat start. Bus 1
/// is the slack; some buses carry several generators, shunts and negative
/// or reactive-only loads to exercise the flow-direction rules.
Network random_network(std::mt19937_64& rng, const RandomNetworkOptions& options = {});

}  // namespace ecogrid::testing
