#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include "ecogrid/eco_matrix.hpp"
#include "ecogrid/eco_metrics.hpp"
#include "networks.hpp"

using namespace ecogrid;
using ecogrid::testing::ieee24;
using ecogrid::testing::random_network;
using ecogrid::testing::two_bus;
using doctest::Approx;

namespace {

constexpr FlowType kFlows[] = {FlowType::Real, FlowType::Reactive, FlowType::Apparent};
constexpr RedundancyMode kModes[] = {RedundancyMode::Aggregate, RedundancyMode::Split};

Eigen::Index at(const EcoFlowMatrix& m, ActorKind kind, int id, bool aggregated = false) {
  const auto idx = m.find({kind, id, aggregated});
  REQUIRE(idx.has_value());
  return *idx;
}

// Sum of all entries except the listed (row, col) cells.
double rest(const EcoFlowMatrix& m, std::initializer_list<std::pair<Eigen::Index, Eigen::Index>> cells) {
  double total = m.T.sum();
  for (auto [r, c] : cells) total -= m.T(r, c);
  return total;
}

Eigen::MatrixXd bus_block(const EcoFlowMatrix& m) {
  Eigen::Index first = 0;
  while (m.actors[static_cast<std::size_t>(first)].kind != ActorKind::Bus) ++first;
  const auto n = m.actor_count() - first;
  return m.T.block(first, first, n, n);
}

void check_structure(const EcoFlowMatrix& m) {
  CHECK((m.T.array() >= 0.0).all());
  CHECK(m.T.col(m.input()).sum() == 0.0);
  CHECK(m.T.row(m.useful_export()).sum() == 0.0);
  CHECK(m.T.row(m.dissipation()).sum() == 0.0);
  CHECK(m.T.diagonal().sum() == 0.0);
}

}  // namespace

TEST_CASE("lossless 2-bus real matrix") {
  const auto net = two_bus(100.0, 0.0, true);
  const auto sol = solve(net);
  REQUIRE(sol.converged);
  const auto m = build_eco_matrix(net, sol, FlowType::Real, RedundancyMode::Aggregate);

  REQUIRE(m.actor_count() == 4);  // generator actors at buses 1 and 2, two buses
  CHECK(m.T.rows() == 7);
  const auto g1 = at(m, ActorKind::Generator, 1, true);
  const auto b1 = at(m, ActorKind::Bus, 1);
  const auto b2 = at(m, ActorKind::Bus, 2);
  CHECK(m.T(m.input(), g1) == Approx(100.0).epsilon(1e-9));
  CHECK(m.T(g1, b1) == Approx(100.0).epsilon(1e-9));
  CHECK(m.T(b1, b2) == Approx(100.0).epsilon(1e-9));
  CHECK(m.T(b2, m.useful_export()) == 100.0);
  CHECK(rest(m, {{m.input(), g1}, {g1, b1}, {b1, b2}, {b2, m.useful_export()}}) == Approx(0.0).epsilon(1e-9));
  check_structure(m);
  CHECK(m.units() == "MW");
}

TEST_CASE("branch loss goes to the receiving bus dissipation") {
  const auto net = two_bus(100.0, 0.02, false);
  const auto sol = solve(net);
  REQUIRE(sol.converged);
  const auto m = build_eco_matrix(net, sol, FlowType::Real, RedundancyMode::Aggregate);
  const auto& f = sol.branches[0];
  const double loss = f.P_from + f.P_to;
  REQUIRE(loss > 0.0);
  const auto b1 = at(m, ActorKind::Bus, 1);
  const auto b2 = at(m, ActorKind::Bus, 2);
  CHECK(m.T(b1, b2) == f.P_from);
  CHECK(m.T(b2, m.dissipation()) == Approx(loss).epsilon(1e-12));
  CHECK(m.T(b2, m.useful_export()) == Approx(f.P_from - loss).epsilon(1e-9));
  CHECK(m.T(b1, m.dissipation()) == 0.0);
}

TEST_CASE("two generators at one bus: aggregate vs split") {
  auto net = two_bus(100.0, 0.0, true);
  net.generators[0].P_out = 0.0;
  net.generators[1].P_out = 30.0;
  net.generators[1].P_max = 50.0;
  Generator extra = net.generators[1];
  extra.id = 3;
  extra.P_out = 70.0;
  extra.P_max = 100.0;
  net.generators.push_back(extra);
  const auto sol = solve(net);
  REQUIRE(sol.converged);

  const auto agg = build_eco_matrix(net, sol, FlowType::Real, RedundancyMode::Aggregate);
  const auto split = build_eco_matrix(net, sol, FlowType::Real, RedundancyMode::Split);
  CHECK(agg.T(agg.input(), at(agg, ActorKind::Generator, 2, true)) == Approx(100.0));
  CHECK(split.T(split.input(), at(split, ActorKind::Generator, 2)) == Approx(30.0));
  CHECK(split.T(split.input(), at(split, ActorKind::Generator, 3)) == Approx(70.0));
  CHECK(split.actor_count() == agg.actor_count() + 1);
  CHECK(tstp(agg.T) == Approx(tstp(split.T)).epsilon(1e-14));
}

TEST_CASE("absorbing generators and shunts") {
  auto net = two_bus(100.0, 0.01, true);
  net.buses[1].load_Q = -60.0;  // bus 2 generates reactive power, so the condenser absorbs
  net.buses[1].shunt_B = -10.0;
  net.buses[0].shunt_B = 15.0;
  net.buses[0].shunt_G = 2.0;
  const auto sol = solve(net);
  REQUIRE(sol.converged);
  REQUIRE(sol.generators[1].Q_out < 0.0);

  const auto m = build_eco_matrix(net, sol, FlowType::Reactive, RedundancyMode::Split);
  const auto g2 = at(m, ActorKind::Generator, 2);
  const auto b2 = at(m, ActorKind::Bus, 2);
  const auto b1 = at(m, ActorKind::Bus, 1);
  const auto s1 = at(m, ActorKind::Shunt, 1);
  const auto s2 = at(m, ActorKind::Shunt, 2);
  const double absorbed = -sol.generators[1].Q_out;
  CHECK(m.T(b2, g2) == Approx(absorbed));
  CHECK(m.T(g2, m.dissipation()) == Approx(absorbed));
  CHECK(m.T(m.input(), b2) == Approx(60.0));  // negative load enters as input

  const auto& r1 = sol.buses[0];
  const auto& r2 = sol.buses[1];
  CHECK(m.T(m.input(), s1) == Approx(r1.shunt_Q_injected));
  CHECK(m.T(s1, b1) == Approx(r1.shunt_Q_injected));
  CHECK(m.T(b2, s2) == Approx(-r2.shunt_Q_injected));
  CHECK(m.T(s2, m.dissipation()) == Approx(-r2.shunt_Q_injected));

  MatrixOptions to_export;
  to_export.absorbed_reactive = AbsorbedReactive::Export;
  const auto e = build_eco_matrix(net, sol, FlowType::Reactive, RedundancyMode::Split, to_export);
  CHECK(e.T(g2, e.useful_export()) == Approx(absorbed));
  CHECK(e.T(g2, e.dissipation()) == 0.0);

  const auto real = build_eco_matrix(net, sol, FlowType::Real, RedundancyMode::Split);
  CHECK(real.T.row(s1).sum() == 0.0);
  CHECK(real.T.col(s1).sum() == 0.0);
  CHECK(real.T(b1, real.dissipation()) == Approx(r1.shunt_P_consumed));
}

TEST_CASE("charging-dominated branch enters both buses from input") {
  auto net = two_bus(0.0, 0.0, true);
  net.branches[0].b_charging = 0.5;
  const auto sol = solve(net);
  REQUIRE(sol.converged);
  const auto& f = sol.branches[0];
  REQUIRE(f.Q_from < 0.0);
  REQUIRE(f.Q_to < 0.0);
  const auto m = build_eco_matrix(net, sol, FlowType::Reactive, RedundancyMode::Split);
  const auto b1 = at(m, ActorKind::Bus, 1);
  const auto b2 = at(m, ActorKind::Bus, 2);
  CHECK(m.T(m.input(), b1) == Approx(-f.Q_from));
  CHECK(m.T(m.input(), b2) == Approx(-f.Q_to));
  CHECK(m.T(b1, b2) == 0.0);
  CHECK(m.T(b2, b1) == 0.0);
  CHECK(conservation_report(m).ok());
}

TEST_CASE("conservation report") {
  const auto net = two_bus(100.0, 0.02, true);
  const auto sol = solve(net);
  auto m = build_eco_matrix(net, sol, FlowType::Real, RedundancyMode::Split);
  const auto ok = conservation_report(m);
  CHECK(ok.ok());
  CHECK(ok.actors.size() == 4);
  CHECK(ok.worst() <= 1e-6 * ok.tstp);

  const auto b1 = at(m, ActorKind::Bus, 1);
  const auto b2 = at(m, ActorKind::Bus, 2);
  m.T(b1, b2) += 1.0;
  const auto bad = conservation_report(m);
  CHECK(bad.violations == std::vector<Eigen::Index>{b1, b2});
}

TEST_CASE("IEEE 24-bus matrices") {
  const auto net = ieee24();
  const auto sol = solve(net);
  REQUIRE(sol.converged);

  const auto split = build_eco_matrix(net, sol, FlowType::Reactive, RedundancyMode::Split);
  // 33 units, 1 shunt (bus 6), 24 buses, 3 environs
  CHECK(split.T.rows() == 33 + 1 + 24 + 3);
  const auto agg = build_eco_matrix(net, sol, FlowType::Reactive, RedundancyMode::Aggregate);
  CHECK(agg.T.rows() == 11 + 1 + 24 + 3);

  for (auto flow : kFlows) {
    for (auto mode : kModes) {
      const auto m = build_eco_matrix(net, sol, flow, mode);
      check_structure(m);
      const auto report = conservation_report(m, 1e-6);
      CHECK(report.ok());
    }
  }
}

TEST_CASE("invariants over random networks") {
  std::mt19937_64 rng(31);
  int checked = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const auto net = random_network(rng);
    const auto sol = solve(net);
    if (!sol.converged) continue;
    ++checked;
    std::map<std::pair<FlowType, RedundancyMode>, EcoFlowMatrix> built;
    for (auto flow : kFlows) {
      for (auto mode : kModes) {
        auto m = build_eco_matrix(net, sol, flow, mode);
        check_structure(m);
        CHECK(conservation_report(m).ok());
        built.emplace(std::pair{flow, mode}, std::move(m));
      }
    }
    for (auto flow : kFlows) {
      const auto& a = built.at({flow, RedundancyMode::Aggregate});
      const auto& s = built.at({flow, RedundancyMode::Split});
      if (flow != FlowType::Apparent) CHECK(bus_block(a) == bus_block(s));
    }
    const auto& real = built.at({FlowType::Real, RedundancyMode::Split});
    const auto& apparent = built.at({FlowType::Apparent, RedundancyMode::Split});
    const double t = tstp(real.T);
    CHECK(std::abs(real.T.row(real.input()).sum() - real.T.col(real.useful_export()).sum() -
                   real.T.col(real.dissipation()).sum()) <= 1e-6 * t);
    CHECK(((bus_block(apparent) - bus_block(real)).array() >= -1e-9).all());
    for (Eigen::Index i = 0; i < real.actor_count(); ++i) {
      if (real.actors[static_cast<std::size_t>(i)].kind != ActorKind::Shunt) continue;
      CHECK(real.T.row(i).sum() == 0.0);
      CHECK(real.T.col(i).sum() == 0.0);
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("CSV export and import") {
  const auto net = two_bus(100.0, 0.013, true);
  const auto sol = solve(net);
  const auto m = build_eco_matrix(net, sol, FlowType::Apparent, RedundancyMode::Split);
  const auto csv = export_matrix_csv(m, {{"case", "two_bus"}});

  std::vector<std::string> grid;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') grid.push_back(line);
  }
  REQUIRE(grid.size() == 8);  // header + 7 rows
  CHECK(std::count(grid[0].begin(), grid[0].end(), ',') == 7);
  CHECK(grid[0].find("gen:1") != std::string::npos);
  CHECK(grid[0].find("bus:2") != std::string::npos);
  CHECK(grid[0].find("dissipation") != std::string::npos);
  CHECK(csv.find("# units: MVA") != std::string::npos);

  const auto back = import_matrix_csv(csv);
  CHECK(back.flow == m.flow);
  CHECK(back.mode == m.mode);
  CHECK(back.actors == m.actors);
  CHECK(back.T == m.T);

  const auto rts = ieee24();
  const auto rsol = solve(rts);
  const auto agg = build_eco_matrix(rts, rsol, FlowType::Reactive, RedundancyMode::Aggregate);
  CHECK(import_matrix_csv(export_matrix_csv(agg)).T == agg.T);
  CHECK_THROWS(import_matrix_csv("T,bus:1\nbus:1,x\n"));
}

TEST_CASE("labels and parsing helpers") {
  CHECK(ActorLabel{ActorKind::Generator, 4, false}.text() == "gen:4");
  CHECK(ActorLabel{ActorKind::Generator, 13, true}.text() == "gen:bus13");
  CHECK(ActorLabel::parse("gen:bus13") == ActorLabel{ActorKind::Generator, 13, true});
  CHECK(ActorLabel::parse("shunt:6") == ActorLabel{ActorKind::Shunt, 6, false});
  CHECK_THROWS(ActorLabel::parse("load:3"));
  CHECK(parse_flow_type("reactive") == FlowType::Reactive);
  CHECK(parse_redundancy_mode("split") == RedundancyMode::Split);
  CHECK_THROWS(parse_flow_type("watts"));

  PowerFlowSolution unsolved;
  CHECK_THROWS_AS(build_eco_matrix(two_bus(), unsolved, FlowType::Real, RedundancyMode::Split),
                  std::invalid_argument);
}
