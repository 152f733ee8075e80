// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "ecogrid/contingency.hpp"
#include "ecogrid/eco_matrix.hpp"
#include "ecogrid/eco_metrics.hpp"
#include "ecogrid/powerflow.hpp"
#include "ecogrid/stats_report.hpp"
#include "networks.hpp"
#include "oracle.hpp"

using namespace ecogrid;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool rel_close(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), 1e-300});
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Outcome two_bus_analytic() {
  const auto start = Clock::now();
  const auto net = testing::two_bus(100.0, 0.0, true);
  const auto sol = solve(net);
  double worst = 0.0;
  for (const auto& m : nodal_mismatch(net, sol)) worst = std::max({worst, std::abs(m.dP), std::abs(m.dQ)});
  const double angle = sol.buses[1].voltage_angle;
  const double err = std::abs(angle + std::asin(0.1));
  const double t = seconds_since(start);
  return {sol.converged && err < 1e-8 && worst < 1e-8 && t < 1.0,
          fmt::format("theta2={:.12f} rad, |err|={:.2e}, mismatch={:.2e} pu, {:.3f}s", angle, err, worst, t)};
}

Outcome flow_statistics_table() {
  const auto start = Clock::now();
  const auto path = testing::data_file("case24_ieee_rts.m");
  const auto checksum = sha256_hex(read_file(path));
  const auto sol = solve(load_case(path));
  if (!sol.converged) return {false, "IEEE 24-bus power flow did not converge"};
  const auto s = all_flow_stats(sol);
  const double got[] = {s[0].mean, s[0].std, s[1].mean, s[1].std, s[2].mean, s[2].std};
  const double published[] = {117.19, 86.74, 27.95, 23.52, 124.07, 84.84};
  double worst = 0.0;
  for (int i = 0; i < 6; ++i) worst = std::max(worst, std::abs(got[i] - published[i]) / published[i]);
  const double t = seconds_since(start);
  return {worst <= 0.05 && t < 5.0,
          fmt::format("{:.2f}/{:.2f}/{:.2f}/{:.2f}/{:.2f}/{:.2f}, max rel dev {:.2e}, sha256 {}, "
                      "from-bus magnitudes, population STD, {:.3f}s",
                      got[0], got[1], got[2], got[3], got[4], got[5], worst, checksum.substr(0, 12), t)};
}

Outcome metric_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = testing::random_sparse_grid(rng, 5, 8);
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd t(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) t(i, j) = g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    const auto lib = metrics(t);
    const auto ref = testing::oracle_metrics(g);
    for (auto [a, b] : {std::pair{lib.tstp, ref.tstp}, {lib.asc, ref.asc}, {lib.dc, ref.dc},
                        {lib.robustness, ref.robustness}}) {
      const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
      worst = std::max(worst, std::abs(a - b) / scale);
    }
  }
  const double t = seconds_since(start);
  return {worst <= 1e-9 && t < 10.0, fmt::format("200 matrices, max rel dev {:.2e}, {:.3f}s", worst, t)};
}

Outcome invariant_suite() {
  std::mt19937_64 rng(77);
  int networks = 0;
  int matrices = 0;
  std::string first_failure;
  auto fail = [&first_failure](std::string what) {
    if (first_failure.empty()) first_failure = std::move(what);
  };
  for (int trial = 0; trial < 150; ++trial) {
    const auto net = testing::random_network(rng);
    const auto sol = solve(net);
    if (!sol.converged) continue;
    ++networks;
    for (auto flow : {FlowType::Real, FlowType::Reactive, FlowType::Apparent}) {
      for (auto mode : {RedundancyMode::Aggregate, RedundancyMode::Split}) {
        const auto m = build_eco_matrix(net, sol, flow, mode);
        ++matrices;
        const auto tag = fmt::format("network {} {}/{}", trial, to_string(flow), to_string(mode));
        if (!(m.T.array() >= 0.0).all()) fail(tag + ": negative entry");
        if (!conservation_report(m, 1e-6).ok()) fail(tag + ": conservation");
        const auto base = metrics(m);
        if (base.asc < 0.0 || base.asc > base.dc) fail(tag + ": ASC outside [0, DC]");
        if (base.robustness < 0.0 || base.robustness > 1.0 / std::numbers::e) fail(tag + ": R outside [0, 1/e]");
        for (double c : {1e-3, 1.0, 1e3}) {
          const auto scaled = metrics(Eigen::MatrixXd(c * m.T));
          if (!rel_close(scaled.ratio, base.ratio, 1e-12) || !rel_close(scaled.robustness, base.robustness, 1e-12)) {
            fail(fmt::format("{}: scale {} changed ratio or R", tag, c));
          }
        }
      }
    }
  }
  if (networks < 100) fail(fmt::format("only {} random networks solved", networks));
  return {first_failure.empty(),
          first_failure.empty() ? fmt::format("{} networks, {} matrices", networks, matrices) : first_failure};
}

Outcome ordering_findings() {
  const auto net = testing::ieee24();
  const auto sol = solve(net);
  if (!sol.converged) return {false, "IEEE 24-bus power flow did not converge"};
  const auto table = reco_table(net, sol);
  auto r = [&table](FlowType f, RedundancyMode m) {
    for (const auto& e : table) {
      if (e.flow == f && e.mode == m) return e.metrics.robustness;
    }
    return std::nan("");
  };
  bool ok = true;
  for (auto f : {FlowType::Real, FlowType::Reactive, FlowType::Apparent}) {
    ok = ok && r(f, RedundancyMode::Split) >= r(f, RedundancyMode::Aggregate);
  }
  for (auto m : {RedundancyMode::Aggregate, RedundancyMode::Split}) {
    ok = ok && r(FlowType::Reactive, m) > r(FlowType::Apparent, m) && r(FlowType::Apparent, m) > r(FlowType::Real, m);
  }
  return {ok, fmt::format("R aggregate/split: real {:.5f}/{:.5f}, reactive {:.5f}/{:.5f}, apparent {:.5f}/{:.5f}",
                          r(FlowType::Real, RedundancyMode::Aggregate), r(FlowType::Real, RedundancyMode::Split),
                          r(FlowType::Reactive, RedundancyMode::Aggregate),
                          r(FlowType::Reactive, RedundancyMode::Split),
                          r(FlowType::Apparent, RedundancyMode::Aggregate),
                          r(FlowType::Apparent, RedundancyMode::Split))};
}

Outcome contingency_engine() {
  const auto net = testing::ieee24();
  const auto both = ElementClasses::parse("branch,gen");
  ContingencyOptions single;
  single.jobs = 1;

  const auto start = Clock::now();
  const auto n1 = survivability(net, 1, both, single);
  const double t = seconds_since(start);
  const auto n1_again = survivability(net, 1, both, single);
  const bool n1_deterministic = to_json(n1).dump() == to_json(n1_again).dump();

  bool counts_ok = true;
  for (const auto& d : n1.depths) {
    counts_ok = counts_ok && d.num_violated_contingencies <= d.total_contingencies - d.num_unsolved;
  }

  const auto branches = ElementClasses::parse("branch");
  const auto n2_a = survivability(net, 2, branches, single, 500, 0);
  const auto n2_b = survivability(net, 2, branches, single, 500, 0);
  ContingencyOptions parallel = single;
  parallel.jobs = 4;
  const auto n2_c = survivability(net, 2, branches, parallel, 500, 0);
  const auto reference = to_json(n2_a).dump(2) + results_csv(n2_a.results);
  const bool n2_identical = reference == to_json(n2_b).dump(2) + results_csv(n2_b.results) &&
                            reference == to_json(n2_c).dump(2) + results_csv(n2_c.results);
  for (const auto& d : n2_a.depths) {
    counts_ok = counts_ok && d.num_violated_contingencies <= d.total_contingencies - d.num_unsolved;
  }

  const auto& d1 = n1.depths.front();
  const auto& d2 = n2_a.depths.back();
  return {t < 60.0 && n1_deterministic && counts_ok && n2_identical && d1.total_contingencies == 71 &&
              d2.total_contingencies == 500,
          fmt::format("N-1 {} cases ({} violations, {} violated, {} unsolved) in {:.2f}s single-threaded; "
                      "N-2 cap 500: {} violated, {} unsolved; deterministic={}, jobs-invariant={}",
                      d1.total_contingencies, d1.num_violations, d1.num_violated_contingencies, d1.num_unsolved, t,
                      d2.num_violated_contingencies, d2.num_unsolved, n1_deterministic, n2_identical)};
}

Outcome window_of_vitality() {
  // Coarse grid a = 0.01 .. 1.00, then golden-section refinement inside the
  // bracket around the best grid point.
  int best_k = 1;
  for (int k = 1; k <= 100; ++k) {
    if (robustness(k / 100.0, 1.0) > robustness(best_k / 100.0, 1.0)) best_k = k;
  }
  double lo = (best_k - 1) / 100.0;
  double hi = (best_k + 1) / 100.0;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  while (hi - lo > 1e-12) {
    const double a = hi - phi * (hi - lo);
    const double b = lo + phi * (hi - lo);
    if (robustness(a, 1.0) < robustness(b, 1.0)) lo = a;
    else hi = b;
  }
  const double a_star = 0.5 * (lo + hi);
  const double r_star = robustness(a_star, 1.0);
  const double inv_e = 1.0 / std::numbers::e;
  bool dominates = true;
  for (int k = 1; k <= 100; ++k) dominates = dominates && robustness(k / 100.0, 1.0) <= r_star;
  const bool brackets = (best_k - 1) / 100.0 < inv_e && inv_e < (best_k + 1) / 100.0;
  return {brackets && dominates && std::abs(a_star - inv_e) < 1e-6 && std::abs(r_star - inv_e) <= 1e-12,
          fmt::format("grid peak a={:.2f} (R={:.12f}); refined a*={:.9f}, R(a*)={:.15f}, |R-1/e|={:.1e}",
                      best_k / 100.0, robustness(best_k / 100.0, 1.0), a_star, r_star, std::abs(r_star - inv_e))};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"power flow: 2-bus analytic angle", two_bus_analytic},
      {"IEEE 24-bus branch-flow statistics within 5%", flow_statistics_table},
      {"metrics match brute-force oracle", metric_oracle},
      {"invariants over random networks", invariant_suite},
      {"IEEE 24-bus R_ECO orderings", ordering_findings},
      {"contingency engine timing and determinism", contingency_engine},
      {"robustness peaks at 1/e", window_of_vitality},
  };
  int failed = 0;
  int index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    if (!o.pass) ++failed;
    std::cout << fmt::format("{} [{}] {}: {}\n", o.pass ? "PASS" : "FAIL", index, name, o.detail);
  }
  std::cout << fmt::format("{}/{} criteria passed\n", index - failed, index);
  return failed == 0 ? 0 : 1;
}
