#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <fmt/format.h>

#include "ecogrid/case_model.hpp"

namespace ecogrid {

namespace {

struct Row {
  int line = 0;
  std::vector<double> values;
};

struct Block {
  int line = 0;
  std::vector<Row> rows;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Drops a trailing `% ...` comment, ignoring '%' inside single-quoted strings.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\'') quoted = !quoted;
    if (line[i] == '%' && !quoted) return line.substr(0, i);
  }
  return line;
}

double parse_number(std::string_view token, int line) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && token.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    if (token == "Inf" || token == "inf") return HUGE_VAL;
    if (token == "-Inf" || token == "-inf") return -HUGE_VAL;
    throw CaseError(fmt::format("malformed number '{}'", token), line);
  }
  return value;
}

// Accumulates the body of a `[ ... ]` or `{ ... }` block. Rows end at ';' or
// at a line break.
class BlockReader {
 public:
  BlockReader(std::string name, char close, int line, bool numeric)
      : name_(std::move(name)), close_(close), numeric_(numeric) {
    block_.line = line;
  }

  // Returns true once the closing bracket has been consumed.
  bool feed(std::string_view text, int line) {
    bool closed = false;
    auto end = text.find(close_);
    if (end != std::string_view::npos) {
      std::string_view rest = trim(text.substr(end + 1));
      if (!rest.empty() && rest != ";") throw CaseError(fmt::format("unexpected text '{}' after block", rest), line);
      text = text.substr(0, end);
      closed = true;
    }
    if (numeric_) {
      std::size_t start = 0;
      while (start <= text.size()) {
        auto semi = text.find(';', start);
        std::string_view segment = text.substr(start, semi == std::string_view::npos ? text.npos : semi - start);
        add_tokens(segment, line);
        if (semi == std::string_view::npos) break;
        finish_row();
        start = semi + 1;
      }
      finish_row();
    }
    return closed;
  }

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] bool numeric() const { return numeric_; }
  Block take() { return std::move(block_); }

 private:
  void add_tokens(std::string_view segment, int line) {
    std::size_t i = 0;
    while (i < segment.size()) {
      while (i < segment.size() && (std::isspace(static_cast<unsigned char>(segment[i])) || segment[i] == ',')) ++i;
      std::size_t j = i;
      while (j < segment.size() && !std::isspace(static_cast<unsigned char>(segment[j])) && segment[j] != ',') ++j;
      if (j > i) {
        if (current_.values.empty()) current_.line = line;
        current_.values.push_back(parse_number(segment.substr(i, j - i), line));
      }
      i = j;
    }
  }

  void finish_row() {
    if (!current_.values.empty()) block_.rows.push_back(std::move(current_));
    current_ = Row{};
  }

  std::string name_;
  char close_;
  bool numeric_;
  Block block_;
  Row current_;
};

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return true;
}

int as_int(double v, int line, std::string_view what) {
  if (v != std::floor(v) || std::abs(v) > 2e9) throw CaseError(fmt::format("{} must be an integer (got {})", what, v), line);
  return static_cast<int>(v);
}

void require_columns(const Row& row, std::size_t n, std::string_view table) {
  if (row.values.size() < n) {
    throw CaseError(fmt::format("{} row has {} columns, expected at least {}", table, row.values.size(), n), row.line);
  }
}

}  // namespace

Network parse_case(std::string_view text, std::string name) {
  std::map<std::string, Block> blocks;
  std::optional<double> base_mva;
  std::optional<BlockReader> open;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;

    std::string_view line = trim(strip_comment(raw));
    if (open) {
      if (open->feed(line, line_no)) {
        if (open->numeric()) blocks[open->name()] = open->take();
        open.reset();
      }
      continue;
    }
    if (line.empty()) continue;

    if (line.starts_with("function")) {
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw CaseError("malformed function header", line_no);
      if (name.empty()) name = std::string(trim(line.substr(eq + 1)));
      continue;
    }
    if (!line.starts_with("mpc.")) throw CaseError(fmt::format("unrecognized statement '{}'", line), line_no);

    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw CaseError("expected '=' in assignment", line_no);
    std::string field(trim(line.substr(4, eq - 4)));
    if (!is_identifier(field)) throw CaseError(fmt::format("invalid field name '{}'", field), line_no);
    std::string_view value = trim(line.substr(eq + 1));

    if (value.starts_with('[') || value.starts_with('{')) {
      const char close = value.front() == '[' ? ']' : '}';
      const bool numeric = close == ']' && (field == "bus" || field == "gen" || field == "branch");
      BlockReader reader(field, close, line_no, numeric);
      if (reader.feed(value.substr(1), line_no)) {
        if (numeric) blocks[field] = reader.take();
      } else {
        open.emplace(std::move(reader));
      }
      continue;
    }

    if (value.ends_with(';')) value.remove_suffix(1);
    value = trim(value);
    if (field == "baseMVA") base_mva = parse_number(value, line_no);
    // Other scalars (version strings etc.) carry nothing we use.
  }
  if (open) throw CaseError(fmt::format("block mpc.{} is never closed", open->name()), line_no);
  if (!base_mva) throw CaseError("missing mpc.baseMVA");
  for (const char* required : {"bus", "gen", "branch"}) {
    if (!blocks.contains(required)) throw CaseError(fmt::format("missing mpc.{} table", required));
  }

  Network net;
  net.name = std::move(name);
  net.base_MVA = *base_mva;

  std::map<int, int> bus_lines;
  bool has_slack = false;
  for (const auto& row : blocks["bus"].rows) {
    require_columns(row, 13, "bus");
    const auto& v = row.values;
    Bus bus;
    bus.id = as_int(v[0], row.line, "bus id");
    if (bus.id <= 0) throw CaseError(fmt::format("bus id {} must be positive", bus.id), row.line);
    if (auto [it, fresh] = bus_lines.emplace(bus.id, row.line); !fresh) {
      throw CaseError(fmt::format("duplicate bus id {} (first defined on line {})", bus.id, it->second), row.line);
    }
    switch (as_int(v[1], row.line, "bus type")) {
      case 1: bus.kind = BusKind::PQ; break;
      case 2: bus.kind = BusKind::PV; break;
      case 3: bus.kind = BusKind::Slack; break;
      case 4: bus.kind = BusKind::PQ; break;  // isolated: solved only if connected to the slack
      default: throw CaseError(fmt::format("bus {} has unknown type code {}", bus.id, v[1]), row.line);
    }
    has_slack = has_slack || bus.kind == BusKind::Slack;
    bus.load_P = v[2];
    bus.load_Q = v[3];
    bus.shunt_G = v[4];
    bus.shunt_B = v[5];
    bus.voltage_magnitude_setpoint = v[7];
    bus.base_kV = v[9];
    bus.v_max = v[11];
    bus.v_min = v[12];
    net.buses.push_back(bus);
  }
  if (!has_slack) throw CaseError("no slack bus (type 3) in bus table", blocks["bus"].line);

  int gen_id = 0;
  for (const auto& row : blocks["gen"].rows) {
    require_columns(row, 10, "gen");
    const auto& v = row.values;
    Generator gen;
    gen.id = ++gen_id;
    gen.bus = as_int(v[0], row.line, "generator bus");
    if (!bus_lines.contains(gen.bus))
      throw CaseError(fmt::format("generator {} references unknown bus {}", gen.id, gen.bus), row.line);
    gen.P_out = v[1];
    gen.Q_out = v[2];
    gen.Q_max = v[3];
    gen.Q_min = v[4];
    gen.voltage_setpoint = v[5];
    gen.in_service = v[7] > 0;
    gen.P_max = v[8];
    gen.P_min = v[9];
    net.generators.push_back(gen);
  }

  int branch_id = 0;
  for (const auto& row : blocks["branch"].rows) {
    require_columns(row, 11, "branch");
    const auto& v = row.values;
    Branch br;
    br.id = ++branch_id;
    br.from_bus = as_int(v[0], row.line, "branch from bus");
    br.to_bus = as_int(v[1], row.line, "branch to bus");
    for (int b : {br.from_bus, br.to_bus}) {
      if (!bus_lines.contains(b)) throw CaseError(fmt::format("branch {} references unknown bus {}", br.id, b), row.line);
    }
    br.r = v[2];
    br.x = v[3];
    br.b_charging = v[4];
    br.rate_MVA = v[5];
    br.tap_ratio = v[8];
    br.phase_shift = v[9];
    br.in_service = v[10] > 0;
    net.branches.push_back(br);
  }
  return net;
}

Network load_case(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CaseError(fmt::format("cannot open case file '{}'", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_case(buf.str(), std::filesystem::path(path).stem().string());
  } catch (const CaseError& e) {
    throw CaseError(fmt::format("{}: {}", path, e.what()));
  }
}

std::string write_case(const Network& network) {
  std::string out;
  auto append = [&out](std::string_view s) { out.append(s); };
  const std::string name = network.name.empty() ? std::string("ecogrid_case") : network.name;

  append(fmt::format("function mpc = {}\n", name));
  append("mpc.version = '2';\n");
  append(fmt::format("mpc.baseMVA = {};\n\n", network.base_MVA));

  append("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n");
  append("mpc.bus = [\n");
  for (const auto& b : network.buses) {
    const int type = b.kind == BusKind::Slack ? 3 : (b.kind == BusKind::PV ? 2 : 1);
    // {} prints the shortest representation that round-trips exactly.
    append(fmt::format("\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t0\t{}\t1\t{}\t{};\n", b.id, type, b.load_P, b.load_Q,
                       b.shunt_G, b.shunt_B, b.voltage_magnitude_setpoint, b.base_kV, b.v_max, b.v_min));
  }
  append("];\n\n");

  // Ids are implied by row order on re-read.
  append("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n");
  append("mpc.gen = [\n");
  for (const auto& g : network.generators) {
    append(fmt::format("\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};\n", g.bus, g.P_out, g.Q_out, g.Q_max, g.Q_min,
                       g.voltage_setpoint, network.base_MVA, g.in_service ? 1 : 0, g.P_max, g.P_min));
  }
  append("];\n\n");

  append("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n");
  append("mpc.branch = [\n");
  for (const auto& br : network.branches) {
    append(fmt::format("\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t-360\t360;\n", br.from_bus, br.to_bus, br.r, br.x,
                       br.b_charging, br.rate_MVA, br.rate_MVA, br.rate_MVA, br.tap_ratio, br.phase_shift,
                       br.in_service ? 1 : 0));
  }
  append("];\n");
  return out;
}

}  // namespace ecogrid
