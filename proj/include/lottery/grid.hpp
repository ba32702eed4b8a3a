#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lottery/design.hpp"
#include "lottery/errors.hpp"

namespace lottery {

struct Bus {
  int id = 0;
  int type = 1;  // 3 = reference (slack)
  double demand_mw = 0.0;
  friend bool operator==(const Bus&, const Bus&) = default;
};

struct Generator {
  int bus = 0;
  double output_mw = 0.0;
  friend bool operator==(const Generator&, const Generator&) = default;
};

struct Branch {
  int from = 0;
  int to = 0;
  double reactance = 0.0;  // p.u.
  double rate_mw = 0.0;    // 0 means unlimited
  friend bool operator==(const Branch&, const Branch&) = default;
};

// In-service DC network data. Bus order follows the source table and fixes
// the column order of the shift-factor matrix.
struct GridCase {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Branch> branches;

  friend bool operator==(const GridCase&, const GridCase&) = default;

  std::size_t bus_index(int id) const {
    for (std::size_t k = 0; k < buses.size(); ++k) {
      if (buses[k].id == id) return k;
    }
    throw ValidationError("unknown bus " + std::to_string(id));
  }

  int slack_bus() const {
    for (const auto& b : buses) {
      if (b.type == 3) return b.id;
    }
    throw ValidationError("case has no reference bus");
  }

  // Buses with positive demand, in table order.
  std::vector<int> load_buses() const {
    std::vector<int> out;
    for (const auto& b : buses) {
      if (b.demand_mw > 0.0) out.push_back(b.id);
    }
    return out;
  }

  double total_demand_mw() const {
    double s = 0.0;
    for (const auto& b : buses) s += b.demand_mw;
    return s;
  }

  double total_generation_mw() const {
    double s = 0.0;
    for (const auto& g : generators) s += g.output_mw;
    return s;
  }
};

namespace detail {

// Source line of each parsed row, for error messages.
struct CaseLines {
  std::size_t bus_table = 0;
  std::vector<std::size_t> bus;
  std::vector<std::size_t> gen;
  std::vector<std::size_t> branch;
};

[[noreturn]] inline void case_error(const CaseLines* lines, std::size_t line, const std::string& what) {
  if (lines) throw ParseError(line, what);
  throw ValidationError(what);
}

inline void validate_case(const GridCase& g, const CaseLines* lines) {
  auto at = [&](const std::vector<std::size_t>& v, std::size_t k) { return lines && k < v.size() ? v[k] : 0; };
  const std::size_t table = lines ? lines->bus_table : 0;
  if (g.buses.empty()) case_error(lines, table, "bus table is empty");
  if (!(g.base_mva > 0.0)) case_error(lines, table, "baseMVA must be positive");
  std::map<int, std::size_t> index;
  int slacks = 0;
  for (std::size_t k = 0; k < g.buses.size(); ++k) {
    const auto& b = g.buses[k];
    const std::size_t line = lines ? at(lines->bus, k) : 0;
    if (!index.emplace(b.id, k).second) case_error(lines, line, "duplicate bus " + std::to_string(b.id));
    if (!(b.demand_mw >= 0.0) || !std::isfinite(b.demand_mw)) {
      case_error(lines, line, "bus " + std::to_string(b.id) + " has negative or nonfinite demand");
    }
    if (b.type == 3) ++slacks;
  }
  if (slacks != 1) case_error(lines, table, "expected exactly one reference bus (type 3), found " + std::to_string(slacks));
  for (std::size_t k = 0; k < g.generators.size(); ++k) {
    const auto& gen = g.generators[k];
    const std::size_t line = lines ? at(lines->gen, k) : 0;
    if (!index.count(gen.bus)) case_error(lines, line, "generator at unknown bus " + std::to_string(gen.bus));
    if (!(gen.output_mw >= 0.0) || !std::isfinite(gen.output_mw)) case_error(lines, line, "generator output must be nonnegative");
  }
  std::vector<std::vector<std::size_t>> adj(g.buses.size());
  for (std::size_t k = 0; k < g.branches.size(); ++k) {
    const auto& br = g.branches[k];
    const std::size_t line = lines ? at(lines->branch, k) : 0;
    if (!index.count(br.from) || !index.count(br.to)) case_error(lines, line, "branch references an unknown bus");
    if (br.from == br.to) case_error(lines, line, "branch connects bus " + std::to_string(br.from) + " to itself");
    if (!(br.reactance > 0.0) || !std::isfinite(br.reactance)) case_error(lines, line, "branch reactance must be positive");
    if (!(br.rate_mw >= 0.0) || !std::isfinite(br.rate_mw)) case_error(lines, line, "branch rating must be nonnegative");
    adj[index[br.from]].push_back(index[br.to]);
    adj[index[br.to]].push_back(index[br.from]);
  }
  std::vector<bool> seen(g.buses.size(), false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (!seen[k]) case_error(lines, lines ? at(lines->bus, k) : 0, "network is disconnected at bus " + std::to_string(g.buses[k].id));
  }
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_number(std::string_view tok, std::size_t line, const std::string& table) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(line, "non-numeric field '" + std::string(tok) + "' in " + table + " table");
  }
  return v;
}

struct RawRow {
  std::size_t line;
  std::vector<double> values;
};

}  // namespace detail

inline void validate_case(const GridCase& g) { detail::validate_case(g, nullptr); }

// Parses the bus, gen and branch tables (and baseMVA) of a MATPOWER-style
// text case. Columns beyond those used are ignored; out-of-service
// generators and branches are skipped.
inline GridCase parse_case(std::string_view text) {
  std::map<std::string, std::vector<detail::RawRow>> tables;
  std::map<std::string, std::size_t> table_lines;
  std::optional<double> base_mva;
  std::string open_table;
  std::size_t line_no = 0;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto pct = line.find('%'); pct != std::string_view::npos) line = line.substr(0, pct);
    line = detail::trim(line);
    if (line.empty()) continue;

    if (open_table.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos || line.substr(0, 4) != "mpc.") continue;
      const std::string name(detail::trim(line.substr(4, eq - 4)));
      std::string_view rhs = detail::trim(line.substr(eq + 1));
      if (name == "baseMVA") {
        if (!rhs.empty() && rhs.back() == ';') rhs.remove_suffix(1);
        base_mva = detail::parse_number(detail::trim(rhs), line_no, "baseMVA");
        continue;
      }
      if (rhs.empty() || rhs.front() != '[') continue;
      if (tables.count(name)) throw ParseError(line_no, "table '" + name + "' defined twice");
      open_table = name;
      tables[name];
      table_lines[name] = line_no;
      line = detail::trim(rhs.substr(1));
      if (line.empty()) continue;
    }

    bool closes = false;
    if (const auto close = line.find(']'); close != std::string_view::npos) {
      closes = true;
      line = line.substr(0, close);
    }
    std::size_t rp = 0;
    while (rp <= line.size()) {
      const std::size_t semi = line.find(';', rp);
      const std::string_view row = detail::trim(line.substr(rp, semi == std::string_view::npos ? std::string_view::npos : semi - rp));
      rp = semi == std::string_view::npos ? line.size() + 1 : semi + 1;
      if (row.empty()) continue;
      detail::RawRow raw{line_no, {}};
      std::size_t tp = 0;
      while (tp < row.size()) {
        const std::size_t start = row.find_first_not_of(" \t,", tp);
        if (start == std::string_view::npos) break;
        std::size_t end = row.find_first_of(" \t,", start);
        if (end == std::string_view::npos) end = row.size();
        raw.values.push_back(detail::parse_number(row.substr(start, end - start), line_no, open_table));
        tp = end;
      }
      tables[open_table].push_back(std::move(raw));
    }
    if (closes) open_table.clear();
  }
  if (!open_table.empty()) throw ParseError(line_no, "table '" + open_table + "' is not closed");
  for (const char* required : {"bus", "gen", "branch"}) {
    if (!tables.count(required)) throw ParseError(line_no, std::string("missing table '") + required + "'");
  }

  GridCase g;
  detail::CaseLines lines;
  g.base_mva = base_mva.value_or(100.0);
  lines.bus_table = table_lines["bus"];
  auto width = [](const detail::RawRow& r, std::size_t need, const char* table) {
    if (r.values.size() < need) {
      throw ParseError(r.line, std::string(table) + " row needs at least " + std::to_string(need) + " columns");
    }
  };
  auto as_int = [](const detail::RawRow& r, std::size_t col, const char* what) {
    const double v = r.values[col];
    if (v != std::floor(v)) throw ParseError(r.line, std::string(what) + " must be an integer");
    return static_cast<int>(v);
  };
  for (const auto& r : tables["bus"]) {
    width(r, 3, "bus");
    g.buses.push_back({as_int(r, 0, "bus id"), as_int(r, 1, "bus type"), r.values[2]});
    lines.bus.push_back(r.line);
  }
  for (const auto& r : tables["gen"]) {
    width(r, 2, "gen");
    if (r.values.size() > 7 && r.values[7] <= 0.0) continue;
    g.generators.push_back({as_int(r, 0, "generator bus"), r.values[1]});
    lines.gen.push_back(r.line);
  }
  for (const auto& r : tables["branch"]) {
    width(r, 4, "branch");
    if (r.values.size() > 10 && r.values[10] <= 0.0) continue;
    g.branches.push_back({as_int(r, 0, "from bus"), as_int(r, 1, "to bus"), r.values[3], r.values.size() > 5 ? r.values[5] : 0.0});
    lines.branch.push_back(r.line);
  }
  detail::validate_case(g, &lines);
  return g;
}

inline GridCase load_case(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open case file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

// Minimal MATPOWER text holding exactly the fields GridCase keeps; parses back
// to an equal GridCase.
inline std::string serialize_case(const GridCase& g) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "function mpc = exported_case\n";
  os << "mpc.version = '2';\n";
  os << "mpc.baseMVA = " << num(g.base_mva) << ";\n\n";
  os << "%% bus_i type Pd\nmpc.bus = [\n";
  for (const auto& b : g.buses) os << "\t" << b.id << "\t" << b.type << "\t" << num(b.demand_mw) << ";\n";
  os << "];\n\n%% bus Pg\nmpc.gen = [\n";
  for (const auto& gen : g.generators) os << "\t" << gen.bus << "\t" << num(gen.output_mw) << ";\n";
  os << "];\n\n%% fbus tbus r x b rateA\nmpc.branch = [\n";
  for (const auto& br : g.branches) {
    os << "\t" << br.from << "\t" << br.to << "\t0\t" << num(br.reactance) << "\t0\t" << num(br.rate_mw) << ";\n";
  }
  os << "];\n";
  return os.str();
}

// DC injection shift factors, slack-referenced. Entry (l, k) is the MW flow on
// branch l (positive from -> to) per MW injected at bus k and withdrawn at the
// slack bus; the slack column is zero.
inline Eigen::MatrixXd shift_factor_matrix(const GridCase& g) {
  const Eigen::Index n = static_cast<Eigen::Index>(g.buses.size());
  const Eigen::Index m = static_cast<Eigen::Index>(g.branches.size());
  const Eigen::Index slack = static_cast<Eigen::Index>(g.bus_index(g.slack_bus()));
  Eigen::MatrixXd bbus = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd bf = Eigen::MatrixXd::Zero(m, n);
  for (Eigen::Index l = 0; l < m; ++l) {
    const auto& br = g.branches[static_cast<std::size_t>(l)];
    if (!(br.reactance > 0.0)) throw DomainError("branch reactance must be positive");
    const auto f = static_cast<Eigen::Index>(g.bus_index(br.from));
    const auto t = static_cast<Eigen::Index>(g.bus_index(br.to));
    const double b = 1.0 / br.reactance;
    bbus(f, f) += b;
    bbus(t, t) += b;
    bbus(f, t) -= b;
    bbus(t, f) -= b;
    bf(l, f) = b;
    bf(l, t) = -b;
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (k != slack) keep.push_back(k);
  }
  const Eigen::Index r = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, n);
  if (r == 0) return h;
  Eigen::MatrixXd reduced(r, r);
  Eigen::MatrixXd bf_red(m, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < r; ++j) reduced(i, j) = bbus(keep[i], keep[j]);
    bf_red.col(i) = bf.col(keep[i]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(reduced);
  if (!lu.isInvertible()) throw NumericError("reduced susceptance matrix is singular (disconnected network)");
  const Eigen::MatrixXd ptdf = bf_red * lu.inverse();
  for (Eigen::Index i = 0; i < r; ++i) h.col(keep[i]) = ptdf.col(i);
  return h;
}

// Demand-response scenario in money units. Players are the load buses; L is
// the scaled demand, P the (unscaled) generation and f_max the branch ratings,
// all converted at MW x hours x 1000 x rate.
struct DrScenario {
  GridCase grid;
  double scale = 1.0;
  double rate = 0.1;   // $ per kWh
  double hours = 1.0;
  std::vector<int> load_buses;
  Eigen::VectorXd demand;      // L
  Eigen::VectorXd generation;  // P, one entry per generator
  Eigen::VectorXd limits;      // f_max per branch, +inf when unlimited
  Eigen::MatrixXd h_load;      // branches x load buses
  Eigen::MatrixXd h_gen;       // branches x generators

  double money_per_mw() const noexcept { return hours * 1000.0 * rate; }
  std::size_t players() const noexcept { return load_buses.size(); }

  // Branch flows (money units) after load bus i sheds s_i.
  Eigen::VectorXd flows(std::span<const double> s) const {
    if (s.size() != players()) throw ValidationError("shift vector has wrong length");
    Eigen::VectorXd net = demand;
    for (std::size_t i = 0; i < s.size(); ++i) net[static_cast<Eigen::Index>(i)] -= s[i];
    return h_gen * generation - h_load * net;
  }
};

inline DrScenario monetize(const GridCase& g, double scale, double rate, double hours) {
  if (!(scale > 0.0) || !(rate > 0.0) || !(hours > 0.0)) {
    throw DomainError("scale, rate and hours must all be positive");
  }
  validate_case(g);
  DrScenario sc;
  sc.grid = g;
  sc.scale = scale;
  sc.rate = rate;
  sc.hours = hours;
  const double k = sc.money_per_mw();
  sc.load_buses = g.load_buses();
  const Eigen::MatrixXd h = shift_factor_matrix(g);
  const Eigen::Index lines = h.rows();
  sc.demand.resize(static_cast<Eigen::Index>(sc.load_buses.size()));
  sc.h_load.resize(lines, sc.demand.size());
  for (std::size_t i = 0; i < sc.load_buses.size(); ++i) {
    const auto col = g.bus_index(sc.load_buses[i]);
    sc.demand[static_cast<Eigen::Index>(i)] = g.buses[col].demand_mw * scale * k;
    sc.h_load.col(static_cast<Eigen::Index>(i)) = h.col(static_cast<Eigen::Index>(col));
  }
  sc.generation.resize(static_cast<Eigen::Index>(g.generators.size()));
  sc.h_gen.resize(lines, sc.generation.size());
  for (std::size_t j = 0; j < g.generators.size(); ++j) {
    sc.generation[static_cast<Eigen::Index>(j)] = g.generators[j].output_mw * k;
    sc.h_gen.col(static_cast<Eigen::Index>(j)) = h.col(static_cast<Eigen::Index>(g.bus_index(g.generators[j].bus)));
  }
  sc.limits.resize(lines);
  for (Eigen::Index l = 0; l < lines; ++l) {
    const double rate_mw = g.branches[static_cast<std::size_t>(l)].rate_mw;
    sc.limits[l] = rate_mw > 0.0 ? rate_mw * k : std::numeric_limits<double>::infinity();
  }
  return sc;
}

// Affine rows over (s, R) for the load-shifting constraints:
//   s_i <= L_i                                   (demand caps)
//   sum_i (L_i - s_i) <= sum_j P_j               (generation balance)
//   -f_max <= H_p P - H_l (L - s) <= f_max       (rated branches only)
inline ConstraintSet build_dr_constraints(const DrScenario& sc) {
  const Eigen::Index n = static_cast<Eigen::Index>(sc.players());
  if (sc.demand.size() != n || sc.h_load.cols() != n || sc.h_gen.cols() != sc.generation.size() ||
      sc.h_load.rows() != sc.limits.size() || sc.h_gen.rows() != sc.limits.size()) {
    throw ValidationError("demand-response scenario has inconsistent dimensions");
  }
  ConstraintSet out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n + 1);
    row[i] = 1.0;
    out.append(row, sc.demand[i], "demand_cap_bus" + std::to_string(sc.load_buses[static_cast<std::size_t>(i)]));
  }
  {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n + 1);
    row.head(n).setConstant(-1.0);
    out.append(row, sc.generation.sum() - sc.demand.sum(), "generation_balance");
  }
  const Eigen::VectorXd base = sc.h_gen * sc.generation - sc.h_load * sc.demand;
  for (Eigen::Index l = 0; l < sc.limits.size(); ++l) {
    if (!std::isfinite(sc.limits[l])) continue;
    const auto& br = sc.grid.branches[static_cast<std::size_t>(l)];
    const std::string name = "line" + std::to_string(l + 1) + "_" + std::to_string(br.from) + "_" + std::to_string(br.to);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n + 1);
    row.head(n) = sc.h_load.row(l);
    out.append(row, sc.limits[l] - base[l], name + "_upper");
    out.append(-row, sc.limits[l] + base[l], name + "_lower");
  }
  return out;
}

}  // namespace lottery
