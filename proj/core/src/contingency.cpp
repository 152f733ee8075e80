#include "ecogrid/contingency.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <mutex>
#include <random>
#include <set>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

namespace ecogrid {

namespace {

// Limit excursions below this size (pu, MVA) are numerical noise.
constexpr double kViolationFloor = 1e-6;

struct Element {
  bool generator = false;
  int id = 0;
};

std::vector<Element> candidate_elements(const Network& network, const ElementClasses& classes) {
  std::vector<Element> out;
  if (classes.branches) {
    for (const auto& br : network.branches) {
      if (br.in_service) out.push_back({false, br.id});
    }
    std::sort(out.begin(), out.end(), [](const Element& a, const Element& b) { return a.id < b.id; });
  }
  if (classes.generators) {
    std::vector<Element> gens;
    for (const auto& g : network.generators) {
      if (g.in_service) gens.push_back({true, g.id});
    }
    std::sort(gens.begin(), gens.end(), [](const Element& a, const Element& b) { return a.id < b.id; });
    out.insert(out.end(), gens.begin(), gens.end());
  }
  return out;
}

__extension__ using u128 = unsigned __int128;

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  u128 acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    acc = acc * (n - k + i) / i;
    if (acc > kSaturated) return kSaturated;
  }
  return static_cast<std::uint64_t>(acc);
}

// Uniform integer in [0, bound] from raw engine output (portable, unlike
// std::uniform_int_distribution).
std::uint64_t uniform_upto(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == kSaturated) return rng();
  const std::uint64_t range = bound + 1;
  const std::uint64_t limit = kSaturated - (kSaturated % range + 1) % range;
  std::uint64_t draw = 0;
  do {
    draw = rng();
  } while (draw > limit);
  return draw % range;
}

// Combination of `k` indices out of `n` with lexicographic rank `rank`.
std::vector<std::size_t> unrank(std::uint64_t rank, std::size_t n, std::size_t k) {
  std::vector<std::size_t> combo;
  combo.reserve(k);
  std::size_t c = 0;
  for (std::size_t p = 0; p < k; ++p) {
    while (true) {
      const auto count = binomial(n - c - 1, k - p - 1);
      if (rank < count) {
        combo.push_back(c++);
        break;
      }
      rank -= count;
      ++c;
    }
  }
  return combo;
}

ContingencySpec make_spec(const std::vector<Element>& elements, const std::vector<std::size_t>& combo) {
  ContingencySpec spec;
  for (auto idx : combo) {
    const auto& e = elements[idx];
    (e.generator ? spec.outage.generator_ids : spec.outage.branch_ids).insert(e.id);
  }
  return spec;
}

int severity(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::IslandLoadShed: return 3;
    case ViolationKind::BranchOverload: return 2;
    case ViolationKind::VoltageLow:
    case ViolationKind::VoltageHigh: return 1;
  }
  return 0;
}

}  // namespace

ElementClasses ElementClasses::parse(std::string_view text) {
  ElementClasses c{false, false};
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    auto item = text.substr(start, comma == std::string_view::npos ? text.npos : comma - start);
    if (item == "branch" || item == "branches") {
      c.branches = true;
    } else if (item == "gen" || item == "generator" || item == "generators") {
      c.generators = true;
    } else if (!item.empty()) {
      throw std::invalid_argument(fmt::format("unknown element class '{}' (expected branch or gen)", item));
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (!c.branches && !c.generators) throw std::invalid_argument("no element class selected");
  return c;
}

std::string ElementClasses::text() const {
  if (branches && generators) return "branch,gen";
  return branches ? "branch" : "gen";
}

std::string ContingencySpec::text() const {
  std::string out;
  for (int id : outage.branch_ids) out += fmt::format("{}br{}", out.empty() ? "" : "+", id);
  for (int id : outage.generator_ids) out += fmt::format("{}gen{}", out.empty() ? "" : "+", id);
  return out;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::VoltageLow: return "voltage_low";
    case ViolationKind::VoltageHigh: return "voltage_high";
    case ViolationKind::BranchOverload: return "branch_overload";
    case ViolationKind::IslandLoadShed: return "island_load_shed";
  }
  return "voltage_low";
}

const Violation* ContingencyResult::worst() const {
  const Violation* best = nullptr;
  for (const auto& v : violations) {
    if (!best || severity(v.kind) > severity(best->kind) ||
        (severity(v.kind) == severity(best->kind) && v.magnitude > best->magnitude)) {
      best = &v;
    }
  }
  return best;
}

std::vector<ContingencySpec> enumerate(const Network& network, int depth, const ElementClasses& classes,
                                       std::optional<std::uint64_t> cap, std::uint64_t seed) {
  if (depth < 1) throw std::invalid_argument(fmt::format("contingency depth must be >= 1 (got {})", depth));
  const auto elements = candidate_elements(network, classes);
  const auto n = elements.size();
  const auto k = static_cast<std::size_t>(depth);
  if (k > n) throw std::invalid_argument(fmt::format("depth {} exceeds the {} available elements", depth, n));

  const auto total = binomial(n, k);
  std::vector<ContingencySpec> specs;

  if (!cap || total <= *cap) {
    if (total == kSaturated) throw std::invalid_argument("too many combinations to enumerate; set a cap");
    specs.reserve(total);
    std::vector<std::size_t> combo(k);
    for (std::size_t i = 0; i < k; ++i) combo[i] = i;
    while (true) {
      specs.push_back(make_spec(elements, combo));
      // Advance to the next combination in lexicographic order.
      std::size_t i = k;
      while (i > 0 && combo[i - 1] == n - k + i - 1) --i;
      if (i == 0) break;
      ++combo[i - 1];
      for (std::size_t j = i; j < k; ++j) combo[j] = combo[j - 1] + 1;
    }
    return specs;
  }

  // Floyd's algorithm: `cap` distinct ranks, uniform over all subsets.
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(depth)};
  std::mt19937_64 rng(seq);
  std::set<std::uint64_t> ranks;
  for (std::uint64_t j = total - *cap; j < total; ++j) {
    const auto t = uniform_upto(rng, j);
    if (!ranks.insert(t).second) ranks.insert(j);
  }
  specs.reserve(ranks.size());
  for (auto r : ranks) specs.push_back(make_spec(elements, unrank(r, n, k)));
  return specs;
}

ContingencyResult evaluate(const Network& network, const ContingencySpec& spec, const ContingencyOptions& options,
                           const PowerFlowSolution* base) {
  for (int id : spec.outage.branch_ids) {
    if (!network.branch(id).in_service) throw std::invalid_argument(fmt::format("branch {} is already out of service", id));
  }
  for (int id : spec.outage.generator_ids) {
    if (!network.generator(id).in_service) {
      throw std::invalid_argument(fmt::format("generator {} is already out of service", id));
    }
  }

  ContingencyResult result;
  result.spec = spec;
  const Network net = apply_outage(network, spec.outage);
  const auto pos = net.bus_positions();

  auto slack = std::find_if(net.buses.begin(), net.buses.end(), [](const Bus& b) { return b.kind == BusKind::Slack; });
  if (slack == net.buses.end()) throw std::invalid_argument("network has no slack bus");

  std::vector<Violation> shed;
  const std::vector<int>* slack_island = nullptr;
  const auto islands = connected_components(net);
  for (const auto& island : islands) {
    if (std::binary_search(island.begin(), island.end(), slack->id)) {
      slack_island = &island;
      continue;
    }
    double load = 0.0;
    for (int id : island) load += std::max(net.buses[pos.at(id)].load_P, 0.0);
    if (load > kViolationFloor) shed.push_back({ViolationKind::IslandLoadShed, island.front(), load});
  }

  double capability = 0.0, demand = 0.0;
  bool has_gen = false;
  std::set<int> island_buses(slack_island->begin(), slack_island->end());
  for (const auto& g : net.generators) {
    if (g.in_service && island_buses.contains(g.bus)) {
      has_gen = true;
      capability += g.P_max;
    }
  }
  for (int id : *slack_island) demand += net.buses[pos.at(id)].load_P;
  if (!has_gen) {
    result.reason = "slack island has no in-service generator";
    return result;
  }
  if (capability < demand) {
    result.reason = fmt::format("slack island capability {:.6g} MW below load {:.6g} MW", capability, demand);
    return result;
  }

  PowerFlowSolution sol = base ? solve(net, options.solver, *base) : solve(net, options.solver);
  result.iterations = sol.iterations;
  if (!sol.converged && base) {
    SolverOptions flat = options.solver;
    flat.flat_start = true;
    sol = solve(net, flat);
    result.iterations += sol.iterations;
  }
  if (!sol.converged) {
    result.reason = sol.message;
    return result;
  }

  result.status = ContingencyStatus::Solved;
  result.violations = std::move(shed);
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto& res = sol.buses[i];
    if (!res.energized) continue;
    const auto& bus = net.buses[i];
    const bool missing = bus.v_min == 0.0 && bus.v_max == 0.0;
    const double lo = (options.override_voltage_limits || missing) ? options.default_v_min : bus.v_min;
    const double hi = (options.override_voltage_limits || missing) ? options.default_v_max : bus.v_max;
    if (res.voltage_magnitude < lo - kViolationFloor) {
      result.violations.push_back({ViolationKind::VoltageLow, bus.id, lo - res.voltage_magnitude});
    } else if (res.voltage_magnitude > hi + kViolationFloor) {
      result.violations.push_back({ViolationKind::VoltageHigh, bus.id, res.voltage_magnitude - hi});
    }
  }
  for (std::size_t i = 0; i < net.branches.size(); ++i) {
    const auto& flow = sol.branches[i];
    const double rate = net.branches[i].rate_MVA;
    if (!flow.active || !(rate > 0.0)) continue;
    const double loading = std::max(flow.S_from, flow.S_to);
    if (loading > rate + kViolationFloor) {
      result.violations.push_back({ViolationKind::BranchOverload, flow.id, loading - rate});
    }
  }
  return result;
}

std::vector<ContingencyResult> evaluate_all(const Network& network, const std::vector<ContingencySpec>& specs,
                                            const ContingencyOptions& options) {
  const PowerFlowSolution base = solve(network, options.solver);
  const PowerFlowSolution* warm = base.converged ? &base : nullptr;

  std::vector<ContingencyResult> results(specs.size());
  const auto workers = static_cast<std::size_t>(std::max(1, options.jobs));
  if (workers == 1 || specs.size() < 2) {
    for (std::size_t i = 0; i < specs.size(); ++i) results[i] = evaluate(network, specs[i], options, warm);
    return results;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        results[i] = evaluate(network, specs[i], options, warm);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, specs.size()); ++w) pool.emplace_back(work);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  return results;
}

DepthSummary summarize(int depth, const std::vector<ContingencyResult>& results) {
  DepthSummary s;
  s.depth = depth;
  for (const auto& r : results) {
    if (static_cast<int>(r.spec.depth()) != depth) continue;
    ++s.total_contingencies;
    if (r.status == ContingencyStatus::Unsolved) {
      ++s.num_unsolved;
      continue;
    }
    s.num_violations += r.violations.size();
    if (!r.violations.empty()) ++s.num_violated_contingencies;
  }
  return s;
}

SurvivabilityReport survivability(const Network& network, int max_depth, const ElementClasses& classes,
                                  const ContingencyOptions& options, std::optional<std::uint64_t> cap,
                                  std::uint64_t seed) {
  if (max_depth < 1) throw std::invalid_argument(fmt::format("max depth must be >= 1 (got {})", max_depth));
  SurvivabilityReport report;
  for (int x = 1; x <= max_depth; ++x) {
    const auto specs = enumerate(network, x, classes, cap, seed);
    auto results = evaluate_all(network, specs, options);
    report.depths.push_back(summarize(x, results));
    std::move(results.begin(), results.end(), std::back_inserter(report.results));
  }
  return report;
}

nlohmann::json to_json(const SurvivabilityReport& report) {
  using nlohmann::json;
  json depths = json::array();
  for (const auto& d : report.depths) {
    depths.push_back({{"depth", d.depth},
                      {"total_contingencies", d.total_contingencies},
                      {"num_violations", d.num_violations},
                      {"num_violated_contingencies", d.num_violated_contingencies},
                      {"num_unsolved", d.num_unsolved}});
  }
  json items = json::array();
  for (const auto& r : report.results) {
    json violations = json::array();
    for (const auto& v : r.violations) {
      violations.push_back({{"kind", to_string(v.kind)}, {"element", v.element}, {"magnitude", v.magnitude}});
    }
    json item = {{"depth", r.spec.depth()},
                 {"branches", r.spec.outage.branch_ids},
                 {"generators", r.spec.outage.generator_ids},
                 {"status", r.status == ContingencyStatus::Solved ? "solved" : "unsolved"},
                 {"iterations", r.iterations},
                 {"violations", std::move(violations)}};
    if (!r.reason.empty()) item["reason"] = r.reason;
    items.push_back(std::move(item));
  }
  return json{{"depths", std::move(depths)}, {"contingencies", std::move(items)}};
}

std::string results_csv(const std::vector<ContingencyResult>& results) {
  std::string out = "depth,outage,status,violation_count,worst_violation\n";
  for (const auto& r : results) {
    std::string worst;
    if (const auto* w = r.worst()) worst = fmt::format("{}:{}:{:.6g}", to_string(w->kind), w->element, w->magnitude);
    out += fmt::format("{},{},{},{},{}\n", r.spec.depth(), r.spec.text(),
                       r.status == ContingencyStatus::Solved ? "solved" : "unsolved", r.violations.size(), worst);
  }
  return out;
}

}  // namespace ecogrid
