#include "ecogrid/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/SparseLU>
#include <fmt/format.h>

namespace ecogrid {

void SolverOptions::check() const {
  if (!(tolerance > 0.0)) throw std::invalid_argument(fmt::format("solver tolerance must be positive (got {})", tolerance));
  if (max_iterations < 1) throw std::invalid_argument(fmt::format("max_iterations must be >= 1 (got {})", max_iterations));
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::Diverged: return "diverged";
    case SolveStatus::SingularJacobian: return "singular_jacobian";
    case SolveStatus::NoGeneration: return "no_generation";
  }
  return "diverged";
}

std::vector<Complex> PowerFlowSolution::phasors() const {
  std::vector<Complex> v(buses.size());
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].energized) v[i] = std::polar(buses[i].voltage_magnitude, buses[i].voltage_angle);
  }
  return v;
}

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Two-port admittances of a pi-model branch with an ideal transformer on the
// from side.
struct BranchAdmittance {
  Complex ff, ft, tf, tt;
};

BranchAdmittance branch_admittance(const Branch& br) {
  const Complex z(br.r, br.x);
  if (z == Complex(0.0, 0.0)) throw std::invalid_argument(fmt::format("branch {} has zero series impedance", br.id));
  const Complex ys = 1.0 / z;
  const Complex tap = std::polar(br.effective_tap(), br.phase_shift * kDegToRad);
  const Complex ytt = ys + Complex(0.0, br.b_charging / 2.0);
  return {ytt / std::norm(tap), -ys / std::conj(tap), -ys / tap, ytt};
}

}  // namespace

AdmittanceMatrix build_admittance(const Network& network) {
  const auto pos = network.bus_positions();
  const auto n = static_cast<Eigen::Index>(network.buses.size());
  std::vector<Eigen::Triplet<Complex>> triplets;
  triplets.reserve(4 * network.branches.size() + network.buses.size());

  for (const auto& br : network.branches) {
    if (!br.in_service) continue;
    const auto f = static_cast<Eigen::Index>(pos.at(br.from_bus));
    const auto t = static_cast<Eigen::Index>(pos.at(br.to_bus));
    const auto y = branch_admittance(br);
    triplets.emplace_back(f, f, y.ff);
    triplets.emplace_back(f, t, y.ft);
    triplets.emplace_back(t, f, y.tf);
    triplets.emplace_back(t, t, y.tt);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& bus = network.buses[static_cast<std::size_t>(i)];
    if (bus.shunt_G != 0.0 || bus.shunt_B != 0.0) {
      triplets.emplace_back(i, i, Complex(bus.shunt_G, bus.shunt_B) / network.base_MVA);
    }
  }

  AdmittanceMatrix out;
  out.Y.resize(n, n);
  out.Y.setFromTriplets(triplets.begin(), triplets.end());
  out.Y.makeCompressed();
  out.bus_ids.reserve(network.buses.size());
  for (const auto& b : network.buses) out.bus_ids.push_back(b.id);
  return out;
}

Eigen::SparseMatrix<double> injection_jacobian(const AdmittanceMatrix& ybus, std::span<const Complex> voltages) {
  const Eigen::Index n = ybus.Y.rows();
  if (static_cast<Eigen::Index>(voltages.size()) != n) throw std::invalid_argument("voltage vector does not match admittance size");

  std::vector<Complex> current(voltages.size(), Complex{});
  std::vector<Complex> unit(voltages.size());
  for (std::size_t i = 0; i < voltages.size(); ++i) {
    const double mag = std::abs(voltages[i]);
    unit[i] = mag > 0.0 ? voltages[i] / mag : Complex(1.0, 0.0);
  }
  for (Eigen::Index k = 0; k < ybus.Y.outerSize(); ++k) {
    for (Eigen::SparseMatrix<Complex>::InnerIterator it(ybus.Y, k); it; ++it) {
      current[static_cast<std::size_t>(it.row())] += it.value() * voltages[static_cast<std::size_t>(it.col())];
    }
  }

  // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
  // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(4 * static_cast<std::size_t>(ybus.Y.nonZeros() + n));
  auto emit = [&](Eigen::Index row, Eigen::Index col, Complex d_angle, Complex d_mag) {
    triplets.emplace_back(row, col, d_angle.real());
    triplets.emplace_back(n + row, col, d_angle.imag());
    triplets.emplace_back(row, n + col, d_mag.real());
    triplets.emplace_back(n + row, n + col, d_mag.imag());
  };
  const Complex j(0.0, 1.0);
  for (Eigen::Index k = 0; k < ybus.Y.outerSize(); ++k) {
    for (Eigen::SparseMatrix<Complex>::InnerIterator it(ybus.Y, k); it; ++it) {
      const auto i = static_cast<std::size_t>(it.row());
      const auto c = static_cast<std::size_t>(it.col());
      emit(it.row(), it.col(), -j * voltages[i] * std::conj(it.value() * voltages[c]),
           voltages[i] * std::conj(it.value() * unit[c]));
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    emit(i, i, j * voltages[s] * std::conj(current[s]), std::conj(current[s]) * unit[s]);
  }

  Eigen::SparseMatrix<double> jac(2 * n, 2 * n);
  jac.setFromTriplets(triplets.begin(), triplets.end());
  jac.makeCompressed();
  return jac;
}

std::vector<BranchFlow> branch_flows(const Network& network, std::span<const Complex> voltages) {
  const auto pos = network.bus_positions();
  std::vector<BranchFlow> flows;
  flows.reserve(network.branches.size());
  for (const auto& br : network.branches) {
    BranchFlow flow{.id = br.id, .from_bus = br.from_bus, .to_bus = br.to_bus};
    if (br.in_service) {
      const Complex vf = voltages[pos.at(br.from_bus)];
      const Complex vt = voltages[pos.at(br.to_bus)];
      if (vf != Complex{} && vt != Complex{}) {
        const auto y = branch_admittance(br);
        const Complex sf = vf * std::conj(y.ff * vf + y.ft * vt) * network.base_MVA;
        const Complex st = vt * std::conj(y.tf * vf + y.tt * vt) * network.base_MVA;
        flow.active = true;
        flow.P_from = sf.real();
        flow.Q_from = sf.imag();
        flow.P_to = st.real();
        flow.Q_to = st.imag();
        flow.S_from = std::sqrt(flow.P_from * flow.P_from + flow.Q_from * flow.Q_from);
        flow.S_to = std::sqrt(flow.P_to * flow.P_to + flow.Q_to * flow.Q_to);
      }
    }
    flows.push_back(flow);
  }
  return flows;
}

std::vector<BusInjection> scheduled_injections(const Network& network) {
  const auto pos = network.bus_positions();
  std::vector<BusInjection> inj(network.buses.size());
  for (const auto& g : network.generators) {
    if (!g.in_service) continue;
    auto& b = inj[pos.at(g.bus)];
    b.P_gen += g.P_out;
    b.Q_gen += g.Q_out;
  }
  return inj;
}

namespace {

std::vector<Complex> calculated_injections(const Eigen::SparseMatrix<Complex>& Y, std::span<const Complex> v) {
  std::vector<Complex> current(v.size(), Complex{});
  for (Eigen::Index k = 0; k < Y.outerSize(); ++k) {
    for (Eigen::SparseMatrix<Complex>::InnerIterator it(Y, k); it; ++it) {
      current[static_cast<std::size_t>(it.row())] += it.value() * v[static_cast<std::size_t>(it.col())];
    }
  }
  std::vector<Complex> s(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) s[i] = v[i] * std::conj(current[i]);
  return s;
}

}  // namespace

std::vector<NodalMismatch> nodal_mismatch(const Network& network, std::span<const Complex> voltages,
                                          std::span<const BusInjection> injections) {
  if (voltages.size() != network.buses.size() || injections.size() != network.buses.size()) {
    throw std::invalid_argument("state must be dimensioned to the bus count");
  }
  const auto ybus = build_admittance(network);
  const auto s = calculated_injections(ybus.Y, voltages);
  std::vector<NodalMismatch> out(network.buses.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& bus = network.buses[i];
    out[i].dP = (injections[i].P_gen - bus.load_P) / network.base_MVA - s[i].real();
    out[i].dQ = (injections[i].Q_gen - bus.load_Q) / network.base_MVA - s[i].imag();
  }
  return out;
}

std::vector<NodalMismatch> nodal_mismatch(const Network& network, const PowerFlowSolution& solution) {
  const auto pos = network.bus_positions();
  std::vector<BusInjection> inj(network.buses.size());
  for (const auto& g : solution.generators) {
    if (!g.active) continue;
    auto& b = inj[pos.at(g.bus)];
    b.P_gen += g.P_out;
    b.Q_gen += g.Q_out;
  }
  const auto v = solution.phasors();
  return nodal_mismatch(network, v, inj);
}

namespace {

enum class Role { None, Ref, PV, PQ };

// Splits `total` across units: Q_min + share of each unit's range, so that
// every unit stays inside its limits whenever the total does.
void allocate_by_range(const std::vector<const Generator*>& units, double total, std::vector<double>& out) {
  double qmin_sum = 0.0, range_sum = 0.0;
  for (const auto* g : units) {
    qmin_sum += g->Q_min;
    range_sum += g->Q_max - g->Q_min;
  }
  out.assign(units.size(), total / static_cast<double>(units.size()));
  if (!(range_sum > 0.0) || !std::isfinite(range_sum) || !std::isfinite(qmin_sum)) return;
  for (std::size_t k = 0; k < units.size(); ++k) {
    out[k] = units[k]->Q_min + (total - qmin_sum) * (units[k]->Q_max - units[k]->Q_min) / range_sum;
  }
}

void allocate_by_capacity(const std::vector<const Generator*>& units, double total, std::vector<double>& out) {
  double cap = 0.0;
  for (const auto* g : units) cap += std::max(g->P_max, 0.0);
  out.assign(units.size(), total / static_cast<double>(units.size()));
  if (!(cap > 0.0)) return;
  for (std::size_t k = 0; k < units.size(); ++k) out[k] = total * std::max(units[k]->P_max, 0.0) / cap;
}

class NewtonSolver {
 public:
  NewtonSolver(const Network& network, const SolverOptions& options) : net_(network), opt_(options) {}

  PowerFlowSolution run(const PowerFlowSolution* warm_start);

 private:
  bool setup(PowerFlowSolution& sol);
  void initial_state(const PowerFlowSolution* warm_start);
  SolveStatus newton(int& iterations, double& mismatch);
  void finish(PowerFlowSolution& sol);

  std::vector<double> mismatch_vector(const std::vector<Complex>& s) const;

  const Network& net_;
  SolverOptions opt_;
  std::size_t n_ = 0;
  std::size_t ref_ = 0;
  AdmittanceMatrix ybus_;
  std::vector<Role> role_;
  std::vector<bool> switched_;
  std::vector<std::vector<const Generator*>> units_;
  std::vector<Complex> spec_;  // pu
  std::vector<double> vm_, va_;
  std::vector<Eigen::Index> col_angle_, col_mag_;
  std::vector<std::size_t> pvpq_, pq_;
};

bool NewtonSolver::setup(PowerFlowSolution& sol) {
  n_ = net_.buses.size();
  const auto pos = net_.bus_positions();
  auto slack = std::find_if(net_.buses.begin(), net_.buses.end(), [](const Bus& b) { return b.kind == BusKind::Slack; });
  if (slack == net_.buses.end()) throw std::invalid_argument("network has no slack bus");

  const auto islands = connected_components(net_);
  const auto& island = *std::find_if(islands.begin(), islands.end(), [&](const auto& isl) {
    return std::binary_search(isl.begin(), isl.end(), slack->id);
  });
  sol.island = island;

  units_.assign(n_, {});
  for (const auto& g : net_.generators) {
    if (g.in_service) units_[pos.at(g.bus)].push_back(&g);
  }

  role_.assign(n_, Role::None);
  for (int id : island) role_[pos.at(id)] = Role::PQ;

  // A slack bus that lost all of its units hands the reference to the
  // island bus with the most generating capacity (lowest id on ties).
  ref_ = pos.at(slack->id);
  if (units_[ref_].empty()) {
    double best = -1.0;
    bool found = false;
    for (int id : island) {
      const auto p = pos.at(id);
      if (units_[p].empty()) continue;
      double cap = 0.0;
      for (const auto* g : units_[p]) cap += g->P_max;
      if (!found || cap > best) {
        best = cap;
        ref_ = p;
        found = true;
      }
    }
    if (!found) {
      sol.status = SolveStatus::NoGeneration;
      sol.message = fmt::format("island of slack bus {} has no in-service generator", slack->id);
      return false;
    }
  }
  sol.slack_bus = net_.buses[ref_].id;

  for (int id : island) {
    const auto p = pos.at(id);
    const auto kind = net_.buses[p].kind;
    if (p == ref_) {
      role_[p] = Role::Ref;
    } else if ((kind == BusKind::PV || kind == BusKind::Slack) && !units_[p].empty()) {
      role_[p] = Role::PV;
    }
  }

  spec_.assign(n_, Complex{});
  for (std::size_t i = 0; i < n_; ++i) {
    if (role_[i] == Role::None) continue;
    Complex s(-net_.buses[i].load_P, -net_.buses[i].load_Q);
    for (const auto* g : units_[i]) s += Complex(g->P_out, g->Q_out);
    spec_[i] = s / net_.base_MVA;
  }
  switched_.assign(n_, false);
  ybus_ = build_admittance(net_);
  return true;
}

void NewtonSolver::initial_state(const PowerFlowSolution* warm_start) {
  vm_.assign(n_, 0.0);
  va_.assign(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    switch (role_[i]) {
      case Role::None: break;
      case Role::Ref:
      case Role::PV: vm_[i] = units_[i].front()->voltage_setpoint; break;
      case Role::PQ: vm_[i] = opt_.flat_start ? 1.0 : net_.buses[i].voltage_magnitude_setpoint; break;
    }
    if (warm_start && role_[i] != Role::None && i < warm_start->buses.size() && warm_start->buses[i].energized) {
      va_[i] = warm_start->buses[i].voltage_angle;
      if (role_[i] == Role::PQ) vm_[i] = warm_start->buses[i].voltage_magnitude;
    }
  }
  if (warm_start) {
    // Re-reference angles if the reference bus changed.
    const double shift = va_[ref_];
    for (std::size_t i = 0; i < n_; ++i) {
      if (role_[i] != Role::None) va_[i] -= shift;
    }
  }
}

std::vector<double> NewtonSolver::mismatch_vector(const std::vector<Complex>& s) const {
  std::vector<double> f;
  f.reserve(pvpq_.size() + pq_.size());
  for (auto i : pvpq_) f.push_back(s[i].real() - spec_[i].real());
  for (auto i : pq_) f.push_back(s[i].imag() - spec_[i].imag());
  return f;
}

SolveStatus NewtonSolver::newton(int& iterations, double& mismatch) {
  pvpq_.clear();
  pq_.clear();
  for (std::size_t i = 0; i < n_; ++i) {
    if (role_[i] == Role::PV || role_[i] == Role::PQ) pvpq_.push_back(i);
    if (role_[i] == Role::PQ) pq_.push_back(i);
  }
  col_angle_.assign(n_, -1);
  col_mag_.assign(n_, -1);
  Eigen::Index next = 0;
  for (auto i : pvpq_) col_angle_[i] = next++;
  for (auto i : pq_) col_mag_[i] = next++;
  const Eigen::Index dim = next;

  std::vector<Complex> v(n_);
  auto refresh = [&] {
    for (std::size_t i = 0; i < n_; ++i) v[i] = role_[i] == Role::None ? Complex{} : std::polar(vm_[i], va_[i]);
  };
  auto max_abs = [](const std::vector<double>& f) {
    double m = 0.0;
    for (double x : f) m = std::max(m, std::isfinite(x) ? std::abs(x) : HUGE_VAL);
    return m;
  };

  refresh();
  auto f = mismatch_vector(calculated_injections(ybus_.Y, v));
  mismatch = max_abs(f);
  if (mismatch < opt_.tolerance) return SolveStatus::Converged;

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  for (int it = 0; it < opt_.max_iterations; ++it) {
    const auto full = injection_jacobian(ybus_, v);
    const auto n = static_cast<Eigen::Index>(n_);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(full.nonZeros()));
    for (Eigen::Index k = 0; k < full.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator e(full, k); e; ++e) {
        const bool q_row = e.row() >= n;
        const bool mag_col = e.col() >= n;
        const auto bi = static_cast<std::size_t>(q_row ? e.row() - n : e.row());
        const auto bj = static_cast<std::size_t>(mag_col ? e.col() - n : e.col());
        const Eigen::Index row = q_row ? (role_[bi] == Role::PQ ? col_mag_[bi] : -1) : col_angle_[bi];
        const Eigen::Index col = mag_col ? col_mag_[bj] : col_angle_[bj];
        if (row >= 0 && col >= 0) triplets.emplace_back(row, col, e.value());
      }
    }
    Eigen::SparseMatrix<double> jac(dim, dim);
    jac.setFromTriplets(triplets.begin(), triplets.end());
    jac.makeCompressed();

    lu.compute(jac);
    if (lu.info() != Eigen::Success) return SolveStatus::SingularJacobian;
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(f.data(), dim);
    const Eigen::VectorXd dx = lu.solve(-rhs);
    if (lu.info() != Eigen::Success || !dx.allFinite()) return SolveStatus::SingularJacobian;

    for (auto i : pvpq_) va_[i] += dx(col_angle_[i]);
    for (auto i : pq_) vm_[i] += dx(col_mag_[i]);
    ++iterations;

    refresh();
    f = mismatch_vector(calculated_injections(ybus_.Y, v));
    mismatch = max_abs(f);
    if (mismatch < opt_.tolerance) return SolveStatus::Converged;
    if (!std::isfinite(mismatch) || mismatch > 1e10) return SolveStatus::Diverged;
  }
  return SolveStatus::Diverged;
}

void NewtonSolver::finish(PowerFlowSolution& sol) {
  std::vector<Complex> v(n_);
  for (std::size_t i = 0; i < n_; ++i) v[i] = role_[i] == Role::None ? Complex{} : std::polar(vm_[i], va_[i]);
  const auto s = calculated_injections(ybus_.Y, v);
  const double base = net_.base_MVA;

  for (std::size_t i = 0; i < n_; ++i) {
    auto& out = sol.buses[i];
    const auto& bus = net_.buses[i];
    if (role_[i] == Role::None) continue;
    out.energized = true;
    out.solved_kind = role_[i] == Role::Ref ? BusKind::Slack : (role_[i] == Role::PV ? BusKind::PV : BusKind::PQ);
    out.voltage_magnitude = vm_[i];
    out.voltage_angle = va_[i];
    out.shunt_P_consumed = bus.shunt_G * vm_[i] * vm_[i];
    out.shunt_Q_injected = bus.shunt_B * vm_[i] * vm_[i];
  }

  for (std::size_t i = 0; i < n_; ++i) {
    if (role_[i] == Role::None || units_[i].empty()) continue;
    const auto& units = units_[i];
    const auto& bus = net_.buses[i];
    std::vector<double> p(units.size()), q(units.size());
    for (std::size_t k = 0; k < units.size(); ++k) {
      p[k] = units[k]->P_out;
      q[k] = units[k]->Q_out;
    }
    if (role_[i] == Role::Ref) allocate_by_capacity(units, s[i].real() * base + bus.load_P, p);
    if (role_[i] == Role::Ref || role_[i] == Role::PV || switched_[i]) {
      allocate_by_range(units, s[i].imag() * base + bus.load_Q, q);
    }
    for (std::size_t k = 0; k < units.size(); ++k) {
      const auto gi = static_cast<std::size_t>(units[k] - net_.generators.data());
      auto& g = sol.generators[gi];
      g.active = true;
      g.P_out = p[k];
      g.Q_out = q[k];
    }
  }
  sol.branches = branch_flows(net_, v);
}

PowerFlowSolution NewtonSolver::run(const PowerFlowSolution* warm_start) {
  opt_.check();
  PowerFlowSolution sol;
  sol.buses.resize(net_.buses.size());
  for (std::size_t i = 0; i < net_.buses.size(); ++i) sol.buses[i].id = net_.buses[i].id;
  sol.generators.resize(net_.generators.size());
  for (std::size_t i = 0; i < net_.generators.size(); ++i) {
    sol.generators[i].id = net_.generators[i].id;
    sol.generators[i].bus = net_.generators[i].bus;
  }

  if (!setup(sol)) {
    sol.branches = branch_flows(net_, std::vector<Complex>(n_));
    return sol;
  }
  initial_state(warm_start);

  int iterations = 0;
  double mismatch = 0.0;
  SolveStatus status = newton(iterations, mismatch);

  // One PV->PQ switching round per converged Newton solve; each round
  // removes at least one PV bus, so the loop terminates.
  while (status == SolveStatus::Converged && opt_.enforce_q_limits) {
    std::vector<Complex> v(n_);
    for (std::size_t i = 0; i < n_; ++i) v[i] = role_[i] == Role::None ? Complex{} : std::polar(vm_[i], va_[i]);
    const auto s = calculated_injections(ybus_.Y, v);
    const double slackness = opt_.tolerance * net_.base_MVA;
    bool any = false;
    for (std::size_t i = 0; i < n_; ++i) {
      if (role_[i] != Role::PV) continue;
      double qmin = 0.0, qmax = 0.0;
      for (const auto* g : units_[i]) {
        qmin += g->Q_min;
        qmax += g->Q_max;
      }
      const double qgen = s[i].imag() * net_.base_MVA + net_.buses[i].load_Q;
      double limit = 0.0;
      if (qgen > qmax + slackness) {
        limit = qmax;
      } else if (qgen < qmin - slackness) {
        limit = qmin;
      } else {
        continue;
      }
      role_[i] = Role::PQ;
      switched_[i] = true;
      spec_[i] = Complex(spec_[i].real(), (limit - net_.buses[i].load_Q) / net_.base_MVA);
      any = true;
    }
    if (!any) break;
    status = newton(iterations, mismatch);
  }

  sol.status = status;
  sol.converged = status == SolveStatus::Converged;
  sol.iterations = iterations;
  sol.max_mismatch = mismatch;
  if (!sol.converged) {
    sol.message = fmt::format("{} after {} iterations, max mismatch {:.3e} pu", to_string(status), iterations, mismatch);
  }
  finish(sol);
  return sol;
}

}  // namespace

PowerFlowSolution solve(const Network& network, const SolverOptions& options) {
  return NewtonSolver(network, options).run(nullptr);
}

PowerFlowSolution solve(const Network& network, const SolverOptions& options, const PowerFlowSolution& warm_start) {
  return NewtonSolver(network, options).run(&warm_start);
}

}  // namespace ecogrid
