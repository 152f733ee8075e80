#include "ecogrid/eco_matrix.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <stdexcept>

#include <fmt/format.h>

namespace ecogrid {

std::string_view to_string(FlowType flow) {
  switch (flow) {
    case FlowType::Real: return "real";
    case FlowType::Reactive: return "reactive";
    case FlowType::Apparent: return "apparent";
  }
  return "real";
}

std::string_view to_string(RedundancyMode mode) {
  return mode == RedundancyMode::Split ? "split" : "aggregate";
}

std::string_view units_of(FlowType flow) {
  switch (flow) {
    case FlowType::Real: return "MW";
    case FlowType::Reactive: return "Mvar";
    case FlowType::Apparent: return "MVA";
  }
  return "MW";
}

FlowType parse_flow_type(std::string_view text) {
  if (text == "real" || text == "P" || text == "pf") return FlowType::Real;
  if (text == "reactive" || text == "Q" || text == "rf") return FlowType::Reactive;
  if (text == "apparent" || text == "S" || text == "MVA") return FlowType::Apparent;
  throw std::invalid_argument(fmt::format("unknown flow type '{}' (expected real, reactive or apparent)", text));
}

RedundancyMode parse_redundancy_mode(std::string_view text) {
  if (text == "aggregate") return RedundancyMode::Aggregate;
  if (text == "split") return RedundancyMode::Split;
  throw std::invalid_argument(fmt::format("unknown redundancy mode '{}' (expected aggregate or split)", text));
}

std::string ActorLabel::text() const {
  switch (kind) {
    case ActorKind::Generator: return aggregated ? fmt::format("gen:bus{}", id) : fmt::format("gen:{}", id);
    case ActorKind::Shunt: return fmt::format("shunt:{}", id);
    case ActorKind::Bus: return fmt::format("bus:{}", id);
  }
  return {};
}

namespace {

int parse_int(std::string_view s, std::string_view whole) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw std::runtime_error(fmt::format("bad actor label '{}'", whole));
  return v;
}

}  // namespace

ActorLabel ActorLabel::parse(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) throw std::runtime_error(fmt::format("bad actor label '{}'", text));
  const auto kind = text.substr(0, colon);
  auto rest = text.substr(colon + 1);
  ActorLabel label;
  if (kind == "gen") {
    label.kind = ActorKind::Generator;
    if (rest.starts_with("bus")) {
      label.aggregated = true;
      rest.remove_prefix(3);
    }
  } else if (kind == "shunt") {
    label.kind = ActorKind::Shunt;
  } else if (kind == "bus") {
    label.kind = ActorKind::Bus;
  } else {
    throw std::runtime_error(fmt::format("bad actor label '{}'", text));
  }
  label.id = parse_int(rest, text);
  return label;
}

std::vector<std::string> EcoFlowMatrix::labels() const {
  std::vector<std::string> out;
  out.reserve(actors.size() + 3);
  for (const auto& a : actors) out.push_back(a.text());
  out.emplace_back("input");
  out.emplace_back("export");
  out.emplace_back("dissipation");
  return out;
}

std::optional<Eigen::Index> EcoFlowMatrix::find(const ActorLabel& label) const {
  auto it = std::find(actors.begin(), actors.end(), label);
  if (it == actors.end()) return std::nullopt;
  return static_cast<Eigen::Index>(it - actors.begin());
}

namespace {

double sign_or(double primary, double fallback) {
  if (primary > 0.0) return 1.0;
  if (primary < 0.0) return -1.0;
  if (fallback > 0.0) return 1.0;
  if (fallback < 0.0) return -1.0;
  return 0.0;
}

class MatrixBuilder {
 public:
  MatrixBuilder(EcoFlowMatrix& m, const MatrixOptions& options) : m_(m), options_(options) {
    const auto n = m.actor_count() + 3;
    m_.T = Eigen::MatrixXd::Zero(n, n);
  }

  void add(Eigen::Index from, Eigen::Index to, double amount) {
    if (amount > 0.0) m_.T(from, to) += amount;
  }

  // Signed injection of a device actor into its bus: positive enters from the
  // input environ, negative leaves through `sink`.
  void device(Eigen::Index actor, Eigen::Index bus, double signed_amount, Eigen::Index sink) {
    if (signed_amount > 0.0) {
      add(m_.input(), actor, signed_amount);
      add(actor, bus, signed_amount);
    } else if (signed_amount < 0.0) {
      add(bus, actor, -signed_amount);
      add(actor, sink, -signed_amount);
    }
  }

  Eigen::Index generator_sink() const {
    if (m_.flow != FlowType::Real && options_.absorbed_reactive == AbsorbedReactive::Export) return m_.useful_export();
    return m_.dissipation();
  }

  // Positive consumption goes to `sink`; negative consumption is a system input.
  void consumption(Eigen::Index bus, double amount, Eigen::Index sink) {
    if (amount > 0.0) {
      add(bus, sink, amount);
    } else if (amount < 0.0) {
      add(m_.input(), bus, -amount);
    }
  }

  // xf, xt: signed flow into the branch at each terminal.
  void branch(Eigen::Index f, Eigen::Index t, double xf, double xt) {
    if (xf > 0.0 && xt <= 0.0) {
      add(f, t, xf);
      consumption(t, xf + xt, m_.dissipation());
    } else if (xt > 0.0 && xf <= 0.0) {
      add(t, f, xt);
      consumption(f, xf + xt, m_.dissipation());
    } else if (xf > 0.0 && xt > 0.0) {
      add(f, m_.dissipation(), xf);
      add(t, m_.dissipation(), xt);
    } else {
      add(m_.input(), f, -xf);
      add(m_.input(), t, -xt);
    }
  }

  // Apparent power is not conserved at a node; close each bus against the
  // environs so that inflow equals outflow.
  void close_bus(Eigen::Index bus) {
    const double in = m_.T.col(bus).sum();
    const double out = m_.T.row(bus).sum();
    consumption(bus, in - out, m_.dissipation());
  }

 private:
  EcoFlowMatrix& m_;
  const MatrixOptions& options_;
};

}  // namespace

EcoFlowMatrix build_eco_matrix(const Network& network, const PowerFlowSolution& solution, FlowType flow,
                               RedundancyMode mode, const MatrixOptions& options) {
  if (!solution.converged) throw std::invalid_argument("eco matrix requires a converged power-flow solution");
  if (solution.buses.size() != network.buses.size() || solution.generators.size() != network.generators.size() ||
      solution.branches.size() != network.branches.size()) {
    throw std::invalid_argument("solution does not belong to this network");
  }

  EcoFlowMatrix m;
  m.flow = flow;
  m.mode = mode;

  // Generator actors with their signed (P, Q) outputs.
  struct Device {
    Eigen::Index bus_actor = 0;
    int bus = 0;
    double P = 0.0;
    double Q = 0.0;
  };
  std::vector<Device> gens;
  if (mode == RedundancyMode::Split) {
    for (const auto& g : solution.generators) {
      if (!g.active) continue;
      m.actors.push_back({ActorKind::Generator, g.id, false});
      gens.push_back({0, g.bus, g.P_out, g.Q_out});
    }
  } else {
    std::map<int, std::size_t> by_bus;
    for (const auto& bus : network.buses) {
      for (const auto& g : solution.generators) {
        if (!g.active || g.bus != bus.id) continue;
        auto [it, fresh] = by_bus.emplace(bus.id, gens.size());
        if (fresh) {
          m.actors.push_back({ActorKind::Generator, bus.id, true});
          gens.push_back({0, bus.id, 0.0, 0.0});
        }
        gens[it->second].P += g.P_out;
        gens[it->second].Q += g.Q_out;
      }
    }
  }

  std::vector<std::size_t> shunt_buses;
  for (std::size_t i = 0; i < network.buses.size(); ++i) {
    const auto& b = network.buses[i];
    if (solution.buses[i].energized && (b.shunt_G != 0.0 || b.shunt_B != 0.0)) {
      m.actors.push_back({ActorKind::Shunt, b.id, false});
      shunt_buses.push_back(i);
    }
  }
  const auto first_shunt = static_cast<Eigen::Index>(gens.size());

  std::map<int, Eigen::Index> bus_actor;
  for (std::size_t i = 0; i < network.buses.size(); ++i) {
    if (!solution.buses[i].energized) continue;
    bus_actor[network.buses[i].id] = static_cast<Eigen::Index>(m.actors.size());
    m.actors.push_back({ActorKind::Bus, network.buses[i].id, false});
  }
  if (bus_actor.empty()) throw std::invalid_argument("solved island is empty");

  MatrixBuilder builder(m, options);

  for (std::size_t k = 0; k < gens.size(); ++k) {
    const auto& d = gens[k];
    double amount = 0.0;
    switch (flow) {
      case FlowType::Real: amount = d.P; break;
      case FlowType::Reactive: amount = d.Q; break;
      case FlowType::Apparent: amount = sign_or(d.P, d.Q) * std::hypot(d.P, d.Q); break;
    }
    builder.device(static_cast<Eigen::Index>(k), bus_actor.at(d.bus), amount, builder.generator_sink());
  }

  for (std::size_t k = 0; k < shunt_buses.size(); ++k) {
    const auto& res = solution.buses[shunt_buses[k]];
    const auto actor = first_shunt + static_cast<Eigen::Index>(k);
    const auto bus = bus_actor.at(res.id);
    switch (flow) {
      case FlowType::Real:
        // Shunts are passive for real power; their consumption is bus dissipation.
        builder.consumption(bus, res.shunt_P_consumed, m.dissipation());
        break;
      case FlowType::Reactive:
        builder.device(actor, bus, res.shunt_Q_injected, m.dissipation());
        break;
      case FlowType::Apparent: {
        const double s = std::hypot(res.shunt_P_consumed, res.shunt_Q_injected);
        builder.device(actor, bus, sign_or(res.shunt_Q_injected, -res.shunt_P_consumed) * s, m.dissipation());
        break;
      }
    }
  }

  for (std::size_t i = 0; i < network.buses.size(); ++i) {
    if (!solution.buses[i].energized) continue;
    const auto& b = network.buses[i];
    double amount = 0.0;
    switch (flow) {
      case FlowType::Real: amount = b.load_P; break;
      case FlowType::Reactive: amount = b.load_Q; break;
      case FlowType::Apparent: amount = sign_or(b.load_P, b.load_Q) * std::hypot(b.load_P, b.load_Q); break;
    }
    builder.consumption(bus_actor.at(b.id), amount, m.useful_export());
  }

  for (const auto& br : solution.branches) {
    if (!br.active) continue;
    const auto f = bus_actor.at(br.from_bus);
    const auto t = bus_actor.at(br.to_bus);
    switch (flow) {
      case FlowType::Real: builder.branch(f, t, br.P_from, br.P_to); break;
      case FlowType::Reactive: builder.branch(f, t, br.Q_from, br.Q_to); break;
      case FlowType::Apparent:
        // Direction follows the real-power flow at each terminal.
        builder.branch(f, t, sign_or(br.P_from, br.Q_from) * br.S_from, sign_or(br.P_to, br.Q_to) * br.S_to);
        break;
    }
  }

  if (flow == FlowType::Apparent) {
    for (const auto& [id, actor] : bus_actor) builder.close_bus(actor);
  }
  return m;
}

double ConservationReport::worst() const {
  double w = 0.0;
  for (const auto& a : actors) w = std::max(w, a.imbalance());
  return w;
}

ConservationReport conservation_report(const EcoFlowMatrix& matrix, double rel_tol) {
  ConservationReport report;
  report.tstp = matrix.T.sum();
  report.rel_tol = rel_tol;
  const double bound = rel_tol * report.tstp;
  for (Eigen::Index a = 0; a < matrix.actor_count(); ++a) {
    ActorBalance bal{a, matrix.T.col(a).sum(), matrix.T.row(a).sum()};
    if (bal.imbalance() > bound) report.violations.push_back(a);
    report.actors.push_back(bal);
  }
  return report;
}

std::string export_matrix_csv(const EcoFlowMatrix& matrix,
                              const std::vector<std::pair<std::string, std::string>>& metadata) {
  std::string out;
  out += fmt::format("# flow: {}\n# mode: {}\n# units: {}\n", to_string(matrix.flow), to_string(matrix.mode),
                     matrix.units());
  for (const auto& [k, v] : metadata) out += fmt::format("# {}: {}\n", k, v);

  const auto labels = matrix.labels();
  out += "T";
  for (const auto& l : labels) out += "," + l;
  out += '\n';
  for (Eigen::Index i = 0; i < matrix.T.rows(); ++i) {
    out += labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < matrix.T.cols(); ++j) out += fmt::format(",{:.17g}", matrix.T(i, j));
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

EcoFlowMatrix import_matrix_csv(std::string_view text) {
  EcoFlowMatrix m;
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto colon = line.find(':');
      if (colon == std::string_view::npos) continue;
      auto key = line.substr(1, colon - 1);
      auto value = line.substr(colon + 1);
      while (!key.empty() && key.front() == ' ') key.remove_prefix(1);
      while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
      if (key == "flow") m.flow = parse_flow_type(value);
      if (key == "mode") m.mode = parse_redundancy_mode(value);
      continue;
    }
    lines.push_back(line);
  }
  if (lines.empty()) throw std::runtime_error("matrix CSV has no header");

  const auto header = split_csv(lines.front());
  if (header.size() < 4) throw std::runtime_error("matrix CSV header too short");
  const std::size_t n = header.size() - 1;
  if (header[n - 2] != "input" || header[n - 1] != "export" || header[n] != "dissipation") {
    throw std::runtime_error("matrix CSV header must end with input,export,dissipation");
  }
  for (std::size_t k = 1; k + 3 <= n; ++k) m.actors.push_back(ActorLabel::parse(header[k]));
  if (lines.size() != n + 1) throw std::runtime_error(fmt::format("matrix CSV has {} rows, expected {}", lines.size() - 1, n));

  m.T = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto cells = split_csv(lines[i + 1]);
    if (cells.size() != n + 1 || cells.front() != header[i + 1]) {
      throw std::runtime_error(fmt::format("matrix CSV row {} is malformed", i + 1));
    }
    for (std::size_t j = 0; j < n; ++j) {
      double v = 0.0;
      auto cell = cells[j + 1];
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw std::runtime_error(fmt::format("matrix CSV cell ({}, {}) is not a number", i + 1, j + 1));
      }
      m.T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return m;
}

}  // namespace ecogrid
