// ecogrid: power-flow, ecological flow matrix, R_ECO and contingency runs
// from the command line. Exit status: 0 success, 1 data error, 2 solver
// divergence.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ecogrid/case_model.hpp"
#include "ecogrid/contingency.hpp"
#include "ecogrid/eco_matrix.hpp"
#include "ecogrid/eco_metrics.hpp"
#include "ecogrid/metadata.hpp"
#include "ecogrid/powerflow.hpp"
#include "ecogrid/stats_report.hpp"

namespace {

using namespace ecogrid;
using nlohmann::json;

struct ExitError {
  int code;
  std::string message;
};

struct LoadedCase {
  std::string path;
  std::string checksum;
  Network network;
};

LoadedCase read_case(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ExitError{1, fmt::format("cannot open case file '{}'", path)};
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  LoadedCase c;
  c.path = path;
  c.checksum = sha256_hex(text);
  try {
    c.network = parse_case(text, std::filesystem::path(path).stem().string());
  } catch (const CaseError& e) {
    throw ExitError{1, fmt::format("{}: {}", path, e.what())};
  }
  if (auto issues = validate(c.network); !issues.empty()) {
    std::string msg = fmt::format("{}: invalid network", path);
    for (const auto& i : issues) msg += "\n  " + i;
    throw ExitError{1, msg};
  }
  return c;
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExitError{1, fmt::format("cannot write '{}'", path)};
  out << content;
}

struct Common {
  std::string case_path;
  double tolerance = 1e-8;
  int max_iterations = 30;
  bool no_q_limits = false;
  std::string absorbed = "dissipation";

  [[nodiscard]] SolverOptions solver() const {
    SolverOptions o;
    o.tolerance = tolerance;
    o.max_iterations = max_iterations;
    o.enforce_q_limits = !no_q_limits;
    return o;
  }
  [[nodiscard]] MatrixOptions matrix() const {
    MatrixOptions m;
    m.absorbed_reactive = absorbed == "export" ? AbsorbedReactive::Export : AbsorbedReactive::Dissipation;
    return m;
  }
  [[nodiscard]] RunMetadata metadata(const LoadedCase& c) const {
    return RunMetadata{c.path, c.checksum, solver(), matrix(), {}};
  }
};

void add_solver_flags(CLI::App* cmd, Common& common) {
  cmd->add_option("--tol", common.tolerance, "Newton mismatch tolerance, pu")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iter", common.max_iterations, "Newton iteration limit")->check(CLI::Range(1, 10000));
  cmd->add_flag("--no-q-limits", common.no_q_limits, "Skip PV-to-PQ switching at generator Q limits");
}

void add_matrix_flags(CLI::App* cmd, Common& common) {
  cmd->add_option("--absorbed-reactive", common.absorbed, "Destination of generator reactive absorption")
      ->check(CLI::IsMember({"dissipation", "export"}));
}

PowerFlowSolution solve_or_fail(const LoadedCase& c, const SolverOptions& options) {
  auto sol = solve(c.network, options);
  if (!sol.converged) throw ExitError{2, fmt::format("{}: power flow failed: {}", c.path, sol.message)};
  return sol;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json metrics_json(const EcoMetrics& m) {
  return {{"tstp", m.tstp}, {"asc", m.asc}, {"dc", m.dc}, {"ratio", m.ratio}, {"robustness", m.robustness}};
}

std::string comment_block(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += fmt::format("# {}: {}\n", k, v);
  return out;
}

// --- pf -------------------------------------------------------------------

struct PfArgs {
  Common common;
  std::string out;
  std::string csv;
};

void run_pf(const PfArgs& a) {
  const auto c = read_case(a.common.case_path);
  const auto sol = solve(c.network, a.common.solver());

  json buses = json::array();
  for (const auto& b : sol.buses) {
    json row = {{"id", b.id}, {"energized", b.energized}};
    if (b.energized) {
      row["kind"] = to_string(b.solved_kind);
      row["voltage_magnitude"] = b.voltage_magnitude;
      row["voltage_angle"] = b.voltage_angle;
      row["shunt_P_consumed"] = b.shunt_P_consumed;
      row["shunt_Q_injected"] = b.shunt_Q_injected;
    }
    buses.push_back(std::move(row));
  }
  json gens = json::array();
  for (const auto& g : sol.generators) {
    gens.push_back({{"id", g.id}, {"bus", g.bus}, {"active", g.active}, {"P_out", g.P_out}, {"Q_out", g.Q_out}});
  }
  json branches = json::array();
  for (const auto& f : sol.branches) {
    branches.push_back({{"id", f.id},
                        {"from_bus", f.from_bus},
                        {"to_bus", f.to_bus},
                        {"active", f.active},
                        {"P_from", f.P_from},
                        {"Q_from", f.Q_from},
                        {"P_to", f.P_to},
                        {"Q_to", f.Q_to},
                        {"S_from", f.S_from},
                        {"S_to", f.S_to}});
  }
  json doc = {{"metadata", to_json(a.common.metadata(c))},
              {"status", to_string(sol.status)},
              {"converged", sol.converged},
              {"iterations", sol.iterations},
              {"max_mismatch_pu", sol.max_mismatch},
              {"slack_bus", sol.slack_bus},
              {"buses", std::move(buses)},
              {"generators", std::move(gens)},
              {"branches", std::move(branches)}};
  emit(a.out, dump(doc));

  if (!a.csv.empty()) {
    std::string csv = comment_block(flatten(a.common.metadata(c)));
    csv += "id,from_bus,to_bus,active,P_from,Q_from,P_to,Q_to,S_from,S_to\n";
    for (const auto& f : sol.branches) {
      csv += fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", f.id, f.from_bus, f.to_bus,
                         f.active ? 1 : 0, f.P_from, f.Q_from, f.P_to, f.Q_to, f.S_from, f.S_to);
    }
    emit(a.csv, csv);
  }
  if (!sol.converged) throw ExitError{2, fmt::format("{}: power flow failed: {}", c.path, sol.message)};
}

// --- matrix ---------------------------------------------------------------

struct MatrixArgs {
  Common common;
  std::string flow = "real";
  std::string mode = "aggregate";
  std::string out;
};

void run_matrix(const MatrixArgs& a) {
  const auto c = read_case(a.common.case_path);
  const auto sol = solve_or_fail(c, a.common.solver());
  const auto m = build_eco_matrix(c.network, sol, parse_flow_type(a.flow), parse_redundancy_mode(a.mode),
                                  a.common.matrix());
  emit(a.out, export_matrix_csv(m, flatten(a.common.metadata(c))));
}

// --- reco -----------------------------------------------------------------

struct RecoArgs {
  Common common;
  std::string flow = "reactive";
  std::string mode = "split";
  std::string format = "json";
  bool all = false;
  std::string out;
};

void run_reco(const RecoArgs& a) {
  const auto c = read_case(a.common.case_path);
  const auto sol = solve_or_fail(c, a.common.solver());
  auto meta = a.common.metadata(c);

  std::vector<RecoEntry> rows;
  if (a.all) {
    rows = reco_table(c.network, sol, a.common.matrix());
  } else {
    const auto flow = parse_flow_type(a.flow);
    const auto mode = parse_redundancy_mode(a.mode);
    rows.push_back({flow, mode, metrics(build_eco_matrix(c.network, sol, flow, mode, a.common.matrix()))});
  }

  if (a.format == "csv") {
    std::string csv = comment_block(flatten(meta));
    csv += "flow,mode,units,tstp,asc,dc,ratio,robustness\n";
    for (const auto& r : rows) {
      csv += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", to_string(r.flow), to_string(r.mode),
                         units_of(r.flow), r.metrics.tstp, r.metrics.asc, r.metrics.dc, r.metrics.ratio,
                         r.metrics.robustness);
    }
    emit(a.out, csv);
    return;
  }

  json doc;
  doc["metadata"] = to_json(meta);
  if (a.all) {
    json table = json::array();
    for (const auto& r : rows) {
      json row = metrics_json(r.metrics);
      row["flow"] = to_string(r.flow);
      row["mode"] = to_string(r.mode);
      row["units"] = units_of(r.flow);
      table.push_back(std::move(row));
    }
    doc["rows"] = std::move(table);
  } else {
    const auto& r = rows.front();
    doc.update(metrics_json(r.metrics));
    doc["flow"] = to_string(r.flow);
    doc["mode"] = to_string(r.mode);
    doc["units"] = units_of(r.flow);
  }
  emit(a.out, dump(doc));
}

// --- stats / report -------------------------------------------------------

struct ReportArgs {
  Common common;
  std::vector<std::string> cases;
  std::string format = "csv";
  std::string out;
  int depth = 0;
  std::string classes = "branch";
  std::optional<std::uint64_t> cap;
  std::uint64_t seed = 0;
  int jobs = 1;
};

void run_stats(const ReportArgs& a) {
  std::vector<CaseComparison> rows;
  json meta = json::array();
  std::vector<std::pair<std::string, std::string>> comments;
  for (const auto& path : a.cases) {
    const auto c = read_case(path);
    const auto sol = solve_or_fail(c, a.common.solver());
    CaseComparison row;
    row.case_name = c.network.name;
    row.checksum = c.checksum;
    row.stats = all_flow_stats(sol);
    rows.push_back(std::move(row));
    meta.push_back(to_json(a.common.metadata(c)));
    if (comments.empty()) comments = flatten(a.common.metadata(c));
    else comments.emplace_back("case_sha256", c.checksum);
  }
  if (a.format == "json") {
    json out = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      json stats = json::object();
      const char* keys[] = {"pf", "rf", "MVA"};
      for (std::size_t k = 0; k < 3; ++k) {
        stats[fmt::format("Mean({})", keys[k])] = rows[i].stats[k].mean;
        stats[fmt::format("STD({})", keys[k])] = rows[i].stats[k].std;
      }
      out.push_back({{"case", rows[i].case_name},
                     {"sample_count", rows[i].stats[0].sample_count},
                     {"stats", std::move(stats)},
                     {"metadata", meta[i]}});
    }
    emit(a.out, dump(out));
    return;
  }
  emit(a.out, comment_block(comments) + stats_csv(rows));
}

void run_report(const ReportArgs& a) {
  std::vector<CaseComparison> rows;
  json meta = json::array();
  std::vector<std::pair<std::string, std::string>> comments;
  for (const auto& path : a.cases) {
    const auto c = read_case(path);
    const auto sol = solve_or_fail(c, a.common.solver());
    auto row = compare_case(c.network, sol, c.checksum, a.common.matrix());
    auto md = a.common.metadata(c);
    if (a.depth > 0) {
      ContingencyOptions opts;
      opts.solver = a.common.solver();
      opts.jobs = a.jobs;
      const auto report = survivability(c.network, a.depth, ElementClasses::parse(a.classes), opts, a.cap, a.seed);
      row.survivability = report.depths;
      md.extra = {{"depth", std::to_string(a.depth)},
                  {"classes", a.classes},
                  {"cap", a.cap ? std::to_string(*a.cap) : "none"},
                  {"seed", std::to_string(a.seed)}};
    }
    rows.push_back(std::move(row));
    meta.push_back(to_json(md));
    if (comments.empty()) comments = flatten(md);
    else comments.emplace_back("case_sha256", c.checksum);
  }
  if (a.format == "json") {
    json doc = comparison_json(rows);
    for (std::size_t i = 0; i < doc.size(); ++i) doc[i]["metadata"] = meta[i];
    emit(a.out, dump(doc));
    return;
  }
  emit(a.out, comment_block(comments) + comparison_csv(rows));
}

// --- contingency ----------------------------------------------------------

struct ContingencyArgs {
  Common common;
  int depth = 1;
  std::string classes = "branch";
  std::optional<std::uint64_t> cap;
  std::uint64_t seed = 0;
  std::string out;
  std::string csv;
  int jobs = 0;
  std::optional<double> vmin;
  std::optional<double> vmax;
};

int jobs_from_env() {
  if (const char* env = std::getenv("ECOGRID_JOBS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw ExitError{1, fmt::format("ECOGRID_JOBS must be an integer (got '{}')", env)};
    }
  }
  return 1;
}

void run_contingency(const ContingencyArgs& a) {
  const auto c = read_case(a.common.case_path);
  const auto classes = ElementClasses::parse(a.classes);

  ContingencyOptions opts;
  opts.solver = a.common.solver();
  opts.jobs = a.jobs > 0 ? a.jobs : jobs_from_env();
  if (a.vmin || a.vmax) {
    opts.override_voltage_limits = true;
    opts.default_v_min = a.vmin.value_or(opts.default_v_min);
    opts.default_v_max = a.vmax.value_or(opts.default_v_max);
  }

  const auto report = survivability(c.network, a.depth, classes, opts, a.cap, a.seed);

  auto meta = a.common.metadata(c);
  meta.extra = {{"depth", std::to_string(a.depth)},
                {"classes", classes.text()},
                {"cap", a.cap ? std::to_string(*a.cap) : "none"},
                {"seed", std::to_string(a.seed)},
                {"voltage_limits", opts.override_voltage_limits
                                       ? fmt::format("override [{}, {}]", opts.default_v_min, opts.default_v_max)
                                       : "case file (defaults 0.95/1.05 where absent)"},
                {"unsolved_rule", "divergence after flat-start retry, no generation, or P_max below load"}};

  json doc = to_json(report);
  doc["metadata"] = to_json(meta);
  emit(a.out, dump(doc));
  if (!a.csv.empty()) emit(a.csv, comment_block(flatten(meta)) + results_csv(report.results));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ecogrid: ecological robustness of power-system operating points"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  PfArgs pf;
  auto* pf_cmd = app.add_subcommand("pf", "Solve the AC power flow and print voltages and branch flows");
  pf_cmd->add_option("--case", pf.common.case_path, "Case file")->required();
  add_solver_flags(pf_cmd, pf.common);
  pf_cmd->add_option("--out", pf.out, "JSON output path (default stdout)");
  pf_cmd->add_option("--csv", pf.csv, "Also write branch flows as CSV");

  MatrixArgs mx;
  auto* mx_cmd = app.add_subcommand("matrix", "Write the ecological flow matrix as CSV");
  mx_cmd->add_option("--case", mx.common.case_path, "Case file")->required();
  mx_cmd->add_option("--flow", mx.flow, "real | reactive | apparent")->check(CLI::IsMember({"real", "reactive", "apparent"}));
  mx_cmd->add_option("--mode", mx.mode, "aggregate | split")->check(CLI::IsMember({"aggregate", "split"}));
  mx_cmd->add_option("--out", mx.out, "CSV output path (default stdout)");
  add_solver_flags(mx_cmd, mx.common);
  add_matrix_flags(mx_cmd, mx.common);

  RecoArgs rc;
  auto* rc_cmd = app.add_subcommand("reco", "Compute TSTp, ASC, DC and R_ECO");
  rc_cmd->add_option("--case", rc.common.case_path, "Case file")->required();
  rc_cmd->add_option("--flow", rc.flow, "real | reactive | apparent")->check(CLI::IsMember({"real", "reactive", "apparent"}));
  rc_cmd->add_option("--mode", rc.mode, "aggregate | split")->check(CLI::IsMember({"aggregate", "split"}));
  rc_cmd->add_flag("--all", rc.all, "All three flow types in both redundancy modes");
  auto* rc_fmt = rc_cmd->add_option("--format", rc.format, "json | csv")->check(CLI::IsMember({"json", "csv"}));
  rc_cmd->add_flag_callback("--json", [&rc] { rc.format = "json"; }, "Same as --format json")->excludes(rc_fmt);
  rc_cmd->add_flag_callback("--csv", [&rc] { rc.format = "csv"; }, "Same as --format csv")->excludes(rc_fmt);
  rc_cmd->add_option("--out", rc.out, "Output path (default stdout)");
  add_solver_flags(rc_cmd, rc.common);
  add_matrix_flags(rc_cmd, rc.common);

  ReportArgs st;
  auto* st_cmd = app.add_subcommand("stats", "Branch-flow distribution statistics");
  st_cmd->add_option("--case", st.cases, "Case file (repeatable)")->required();
  st_cmd->add_option("--format", st.format, "csv | json")->check(CLI::IsMember({"json", "csv"}));
  st_cmd->add_option("--out", st.out, "Output path (default stdout)");
  add_solver_flags(st_cmd, st.common);

  ReportArgs rp;
  auto* rp_cmd = app.add_subcommand("report", "Per-case R_ECO table, flow statistics and survivability");
  rp_cmd->add_option("--case", rp.cases, "Case file (repeatable)")->required();
  rp_cmd->add_option("--format", rp.format, "csv | json")->check(CLI::IsMember({"json", "csv"}));
  rp_cmd->add_option("--out", rp.out, "Output path (default stdout)");
  rp_cmd->add_option("--depth", rp.depth, "Include survivability up to this contingency depth (0 = none)")
      ->check(CLI::NonNegativeNumber);
  rp_cmd->add_option("--classes", rp.classes, "Element classes for contingencies: branch,gen");
  rp_cmd->add_option("--cap", rp.cap, "Sample at most this many contingencies per depth");
  rp_cmd->add_option("--seed", rp.seed, "Sampling seed");
  rp_cmd->add_option("--jobs", rp.jobs, "Worker threads")->check(CLI::PositiveNumber);
  add_solver_flags(rp_cmd, rp.common);
  add_matrix_flags(rp_cmd, rp.common);

  ContingencyArgs ct;
  auto* ct_cmd = app.add_subcommand("contingency", "N-x survivability analysis");
  ct_cmd->add_option("--case", ct.common.case_path, "Case file")->required();
  ct_cmd->add_option("--depth", ct.depth, "Maximum contingency depth x")->check(CLI::PositiveNumber);
  ct_cmd->add_option("--classes", ct.classes, "Element classes: branch,gen");
  ct_cmd->add_option("--cap", ct.cap, "Sample at most this many contingencies per depth");
  ct_cmd->add_option("--seed", ct.seed, "Sampling seed");
  ct_cmd->add_option("--out", ct.out, "Report JSON path (default stdout)");
  ct_cmd->add_option("--csv", ct.csv, "Per-contingency CSV path");
  ct_cmd->add_option("--jobs", ct.jobs, "Worker threads (default $ECOGRID_JOBS or 1)")->check(CLI::PositiveNumber);
  ct_cmd->add_option("--vmin", ct.vmin, "Override lower voltage limit for all buses, pu");
  ct_cmd->add_option("--vmax", ct.vmax, "Override upper voltage limit for all buses, pu");
  add_solver_flags(ct_cmd, ct.common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pf_cmd) run_pf(pf);
    else if (*mx_cmd) run_matrix(mx);
    else if (*rc_cmd) run_reco(rc);
    else if (*st_cmd) run_stats(st);
    else if (*rp_cmd) run_report(rp);
    else if (*ct_cmd) run_contingency(ct);
  } catch (const ExitError& e) {
    std::cerr << "ecogrid: " << e.message << '\n';
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "ecogrid: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
