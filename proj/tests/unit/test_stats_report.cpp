#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "ecogrid/stats_report.hpp"
#include "networks.hpp"

using namespace ecogrid;
using ecogrid::testing::ieee24;
using doctest::Approx;

namespace {

std::vector<BranchFlow> real_flows(std::initializer_list<double> values) {
  std::vector<BranchFlow> out;
  int id = 0;
  for (double v : values) {
    BranchFlow f;
    f.id = ++id;
    f.active = true;
    f.P_from = v;
    f.P_to = -v;
    out.push_back(f);
  }
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

}  // namespace

TEST_CASE("flow statistics on hand-made flows") {
  const auto same = flow_stats(real_flows({100, 100, 100}), FlowType::Real);
  CHECK(same.mean == 100.0);
  CHECK(same.std == 0.0);
  CHECK(same.sample_count == 3);

  const auto spread = flow_stats(real_flows({0, 200}), FlowType::Real);
  CHECK(spread.mean == 100.0);
  CHECK(spread.std == 100.0);

  auto mixed = real_flows({-50, 50, 10});
  mixed[2].active = false;
  const auto magnitudes = flow_stats(mixed, FlowType::Real);
  CHECK(magnitudes.mean == 50.0);
  CHECK(magnitudes.std == 0.0);
  CHECK(magnitudes.sample_count == 2);

  CHECK_THROWS_AS(flow_stats(std::vector<BranchFlow>{}, FlowType::Real), std::invalid_argument);
  CHECK_THROWS_AS(flow_stats(PowerFlowSolution{}, FlowType::Real), std::invalid_argument);
}

TEST_CASE("IEEE 24-bus flow statistics") {
  const auto net = ieee24();
  const auto sol = solve(net);
  REQUIRE(sol.converged);
  const auto s = all_flow_stats(sol);
  CHECK(s[0].sample_count == 38);

  // Published table row: 117.19 / 86.74 / 27.95 / 23.52 / 124.07 / 84.84.
  CHECK(s[0].mean == Approx(117.19).epsilon(5e-4));
  CHECK(s[0].std == Approx(86.74).epsilon(5e-4));
  CHECK(s[1].mean == Approx(27.95).epsilon(5e-4));
  CHECK(s[1].std == Approx(23.52).epsilon(5e-4));
  CHECK(s[2].mean == Approx(124.07).epsilon(5e-4));
  CHECK(s[2].std == Approx(84.84).epsilon(5e-4));

  // Independent power-flow run on the same file.
  CHECK(s[0].mean == Approx(117.19138570723642).epsilon(1e-9));
  CHECK(s[0].std == Approx(86.73651788387063).epsilon(1e-9));
  CHECK(s[1].mean == Approx(27.95387964751939).epsilon(1e-9));
  CHECK(s[1].std == Approx(23.523622837552473).epsilon(1e-9));
  CHECK(s[2].mean == Approx(124.07338131179743).epsilon(1e-9));
  CHECK(s[2].std == Approx(84.83879234884236).epsilon(1e-9));
}

TEST_CASE("statistics ignore branch order") {
  const auto sol = solve(ieee24());
  auto flows = sol.branches;
  std::mt19937_64 rng(3);
  std::shuffle(flows.begin(), flows.end(), rng);
  for (auto flow : {FlowType::Real, FlowType::Reactive, FlowType::Apparent}) {
    const auto a = flow_stats(sol.branches, flow);
    const auto b = flow_stats(flows, flow);
    CHECK(a.mean == Approx(b.mean).epsilon(1e-14));
    CHECK(a.std == Approx(b.std).epsilon(1e-12));
  }
}

TEST_CASE("comparison table") {
  const auto net = ieee24();
  const auto sol = solve(net);
  const auto row = compare_case(net, sol, "abc123");
  REQUIRE(row.reco.size() == 6);
  CHECK(row.reco[0].flow == FlowType::Real);
  CHECK(row.reco[0].mode == RedundancyMode::Aggregate);
  CHECK(row.reco[5].flow == FlowType::Apparent);
  CHECK(row.reco[5].mode == RedundancyMode::Split);

  auto r = [&](FlowType f, RedundancyMode m) {
    for (const auto& e : row.reco) {
      if (e.flow == f && e.mode == m) return e.metrics.robustness;
    }
    FAIL("missing entry");
    return 0.0;
  };
  for (auto f : {FlowType::Real, FlowType::Reactive, FlowType::Apparent}) {
    CHECK(r(f, RedundancyMode::Split) >= r(f, RedundancyMode::Aggregate));
  }
  for (auto m : {RedundancyMode::Aggregate, RedundancyMode::Split}) {
    CHECK(r(FlowType::Reactive, m) > r(FlowType::Apparent, m));
    CHECK(r(FlowType::Apparent, m) > r(FlowType::Real, m));
  }

  const auto csv = comparison_csv({row});
  std::stringstream ss(csv);
  std::string header, line;
  std::getline(ss, header);
  std::getline(ss, line);
  CHECK(split(header).size() >= 12);
  CHECK(split(header).size() == split(line).size());
  CHECK(header.find("R_reactive_split") != std::string::npos);
  CHECK(line.rfind("case24_ieee_rts,abc123,", 0) == 0);

  const auto stats = stats_csv({row});
  CHECK(stats.rfind("case,Mean(pf),STD(pf),Mean(rf),STD(rf),Mean(MVA),STD(MVA)\n", 0) == 0);

  auto with_surv = row;
  with_surv.survivability = std::vector<DepthSummary>{{1, 38, 4, 3, 1}};
  const auto j = comparison_json({with_surv});
  CHECK(j[0].at("survivability")[0].at("num_unsolved") == 1);
  CHECK(j[0].at("reco").size() == 6);
  CHECK(comparison_csv({with_surv}).find("N1_unsolved") != std::string::npos);
}

TEST_CASE("statistics from exported CSV flows equal in-memory statistics") {
  const auto sol = solve(ieee24());
  std::ostringstream csv;
  csv.precision(17);
  for (const auto& f : sol.branches) csv << f.P_from << ',' << f.Q_from << ',' << f.S_from << '\n';

  std::vector<BranchFlow> reread;
  std::istringstream in(csv.str());
  for (std::string line; std::getline(in, line);) {
    const auto cells = split(line);
    BranchFlow f;
    f.active = true;
    f.P_from = std::stod(cells[0]);
    f.Q_from = std::stod(cells[1]);
    f.S_from = std::stod(cells[2]);
    reread.push_back(f);
  }
  for (auto flow : {FlowType::Real, FlowType::Reactive, FlowType::Apparent}) {
    const auto a = flow_stats(sol, flow);
    const auto b = flow_stats(reread, flow);
    CHECK(std::abs(a.mean - b.mean) <= 1e-9);
    CHECK(std::abs(a.std - b.std) <= 1e-9);
  }
}
