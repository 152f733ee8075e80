#include "ecogrid/case_model.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <openssl/evp.h>

namespace ecogrid {

std::string_view to_string(BusKind kind) {
  switch (kind) {
    case BusKind::PQ: return "PQ";
    case BusKind::PV: return "PV";
    case BusKind::Slack: return "slack";
  }
  return "PQ";
}

CaseError::CaseError(const std::string& message, int line)
    : std::runtime_error(line > 0 ? fmt::format("line {}: {}", line, message) : message), line_(line) {}

std::size_t Network::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw std::out_of_range(fmt::format("bus {} not found", id));
}

bool Network::has_bus(int id) const {
  return std::any_of(buses.begin(), buses.end(), [id](const Bus& b) { return b.id == id; });
}

const Generator& Network::generator(int id) const {
  auto it = std::find_if(generators.begin(), generators.end(), [id](const Generator& g) { return g.id == id; });
  if (it == generators.end()) throw std::out_of_range(fmt::format("generator {} not found", id));
  return *it;
}

const Branch& Network::branch(int id) const {
  auto it = std::find_if(branches.begin(), branches.end(), [id](const Branch& b) { return b.id == id; });
  if (it == branches.end()) throw std::out_of_range(fmt::format("branch {} not found", id));
  return *it;
}

std::unordered_map<int, std::size_t> Network::bus_positions() const {
  std::unordered_map<int, std::size_t> pos;
  pos.reserve(buses.size());
  for (std::size_t i = 0; i < buses.size(); ++i) pos.emplace(buses[i].id, i);
  return pos;
}

std::vector<std::string> validate(const Network& network) {
  std::vector<std::string> issues;
  if (!(network.base_MVA > 0.0)) issues.push_back(fmt::format("base_MVA must be positive (got {})", network.base_MVA));

  std::set<int> bus_ids;
  std::vector<int> slacks;
  for (const auto& bus : network.buses) {
    if (bus.id <= 0) issues.push_back(fmt::format("bus {}: id must be a positive integer", bus.id));
    if (!bus_ids.insert(bus.id).second) issues.push_back(fmt::format("bus {}: duplicate id", bus.id));
    if (!(bus.v_min < bus.v_max))
      issues.push_back(fmt::format("bus {}: v_min ({}) must be below v_max ({})", bus.id, bus.v_min, bus.v_max));
    if (bus.kind == BusKind::Slack) slacks.push_back(bus.id);
  }
  if (slacks.empty()) {
    issues.emplace_back("network has no slack bus");
  } else if (slacks.size() > 1) {
    issues.push_back(fmt::format("multiple slack buses: {}", fmt::join(slacks, ", ")));
  }

  std::set<int> gen_ids;
  bool any_in_service = false;
  for (const auto& gen : network.generators) {
    if (!gen_ids.insert(gen.id).second) issues.push_back(fmt::format("generator {}: duplicate id", gen.id));
    if (!bus_ids.contains(gen.bus))
      issues.push_back(fmt::format("generator {}: attached to unknown bus {}", gen.id, gen.bus));
    if (gen.Q_min > gen.Q_max)
      issues.push_back(fmt::format("generator {}: Q_min ({}) exceeds Q_max ({})", gen.id, gen.Q_min, gen.Q_max));
    any_in_service = any_in_service || gen.in_service;
  }
  if (!any_in_service) issues.emplace_back("network has no in-service generator");

  std::set<int> branch_ids;
  for (const auto& br : network.branches) {
    if (!branch_ids.insert(br.id).second) issues.push_back(fmt::format("branch {}: duplicate id", br.id));
    if (!bus_ids.contains(br.from_bus))
      issues.push_back(fmt::format("branch {}: from_bus {} does not exist", br.id, br.from_bus));
    if (!bus_ids.contains(br.to_bus))
      issues.push_back(fmt::format("branch {}: to_bus {} does not exist", br.id, br.to_bus));
    if (br.from_bus == br.to_bus) issues.push_back(fmt::format("branch {}: from_bus equals to_bus ({})", br.id, br.from_bus));
    if (br.r < 0.0) issues.push_back(fmt::format("branch {}: negative resistance r = {}", br.id, br.r));
    if (br.in_service && br.x == 0.0) issues.push_back(fmt::format("branch {}: in service with x = 0", br.id));
  }
  return issues;
}

Network apply_outage(const Network& network, const OutageSet& outage) {
  Network out = network;
  for (int id : outage.branch_ids) {
    auto it = std::find_if(out.branches.begin(), out.branches.end(), [id](const Branch& b) { return b.id == id; });
    if (it == out.branches.end()) throw std::invalid_argument(fmt::format("outage names unknown branch {}", id));
    it->in_service = false;
  }
  for (int id : outage.generator_ids) {
    auto it = std::find_if(out.generators.begin(), out.generators.end(), [id](const Generator& g) { return g.id == id; });
    if (it == out.generators.end()) throw std::invalid_argument(fmt::format("outage names unknown generator {}", id));
    it->in_service = false;
  }
  return out;
}

namespace {

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> parent;
};

}  // namespace

std::vector<std::vector<int>> connected_components(const Network& network) {
  const auto pos = network.bus_positions();
  DisjointSets sets(network.buses.size());
  for (const auto& br : network.branches) {
    if (!br.in_service) continue;
    auto f = pos.find(br.from_bus);
    auto t = pos.find(br.to_bus);
    if (f == pos.end() || t == pos.end()) continue;
    sets.unite(f->second, t->second);
  }
  std::unordered_map<std::size_t, std::vector<int>> groups;
  for (std::size_t i = 0; i < network.buses.size(); ++i) groups[sets.find(i)].push_back(network.buses[i].id);

  std::vector<std::vector<int>> islands;
  islands.reserve(groups.size());
  for (auto& [root, ids] : groups) {
    std::sort(ids.begin(), ids.end());
    islands.push_back(std::move(ids));
  }
  std::sort(islands.begin(), islands.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return islands;
}

nlohmann::json to_json(const Network& network) {
  using nlohmann::json;
  json buses = json::array();
  for (const auto& b : network.buses) {
    buses.push_back({{"id", b.id},
                     {"kind", to_string(b.kind)},
                     {"voltage_magnitude_setpoint", b.voltage_magnitude_setpoint},
                     {"load_P", b.load_P},
                     {"load_Q", b.load_Q},
                     {"shunt_G", b.shunt_G},
                     {"shunt_B", b.shunt_B},
                     {"v_min", b.v_min},
                     {"v_max", b.v_max},
                     {"base_kV", b.base_kV}});
  }
  json gens = json::array();
  for (const auto& g : network.generators) {
    gens.push_back({{"id", g.id},
                    {"bus", g.bus},
                    {"P_out", g.P_out},
                    {"Q_out", g.Q_out},
                    {"Q_min", g.Q_min},
                    {"Q_max", g.Q_max},
                    {"P_min", g.P_min},
                    {"P_max", g.P_max},
                    {"in_service", g.in_service},
                    {"voltage_setpoint", g.voltage_setpoint}});
  }
  json branches = json::array();
  for (const auto& br : network.branches) {
    branches.push_back({{"id", br.id},
                        {"from_bus", br.from_bus},
                        {"to_bus", br.to_bus},
                        {"r", br.r},
                        {"x", br.x},
                        {"b_charging", br.b_charging},
                        {"rate_MVA", br.rate_MVA},
                        {"tap_ratio", br.tap_ratio},
                        {"phase_shift", br.phase_shift},
                        {"in_service", br.in_service}});
  }
  return json{{"name", network.name},
              {"base_MVA", network.base_MVA},
              {"buses", std::move(buses)},
              {"generators", std::move(gens)},
              {"branches", std::move(branches)}};
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace ecogrid
