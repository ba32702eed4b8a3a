#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lottery/analysis.hpp"
#include "lottery/benefit.hpp"
#include "lottery/design.hpp"
#include "lottery/errors.hpp"
#include "lottery/game.hpp"
#include "lottery/grid.hpp"

namespace lottery {

using Json = nlohmann::ordered_json;

inline void to_json(Json& j, const PropertyOutcome& o) {
  j = Json{{"property", o.property},
           {"holds", o.holds ? Json(*o.holds) : Json(nullptr)},
           {"margin", o.margin ? Json(*o.margin) : Json(nullptr)},
           {"skipped_reason", o.skipped_reason.empty() ? Json(nullptr) : Json(o.skipped_reason)}};
}

inline void to_json(Json& j, const PropertyReport& r) {
  j = Json::array();
  for (const auto& o : r.outcomes) {
    Json e;
    to_json(e, o);
    j.push_back(std::move(e));
  }
}

enum class Pipeline { equilibrium, analyze, design, casestudy };

inline const char* to_string(Pipeline p) {
  switch (p) {
    case Pipeline::equilibrium:
      return "equilibrium";
    case Pipeline::analyze:
      return "analyze";
    case Pipeline::design:
      return "design";
    case Pipeline::casestudy:
      return "casestudy";
  }
  return "unknown";
}

inline Pipeline parse_pipeline(const std::string& name) {
  for (Pipeline p : {Pipeline::equilibrium, Pipeline::analyze, Pipeline::design, Pipeline::casestudy}) {
    if (name == to_string(p)) return p;
  }
  throw ConfigError("unknown pipeline '" + name + "'");
}

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitVerification = 2;

struct BenefitSpec {
  int player_id = 0;
  BenefitFamily family = BenefitFamily::scaled_log;
  double coefficient = 1.0;
};

struct InlineRow {
  std::string label;
  std::vector<double> coefficients;  // N investment columns, then R
  double bound = 0.0;
};

enum class ConstraintSource { none, inline_rows, grid };

struct GridSource {
  std::filesystem::path case_path;
  double scale = 1.0;
  double rate = 0.1;
  double hours = 1.0;
};

struct Tolerances {
  double foc = 1e-8;
  double bound_containment = 1e-7;
  PropertyTolerances property;
  VerificationTolerances verification;
  double simplex = 1e-9;
};

struct ScenarioConfig {
  std::vector<BenefitSpec> benefits;
  double reward = 1.0;
  std::vector<double> perturbation;  // empty means zero
  std::vector<double> sweep_rewards;
  ConstraintSource constraint_source = ConstraintSource::none;
  std::vector<InlineRow> rows;
  GridSource grid;
  std::optional<IrEncoding> individual_rationality;
  double alpha = 1.0;
  double reward_min = 1e-3;
  Tolerances tolerances;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

namespace detail {

inline void require_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
T get_as(const Json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline double get_number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + " must be finite");
  return v;
}

inline std::vector<double> get_numbers(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(get_number(j[k], where + "[" + std::to_string(k) + "]"));
  return out;
}

}  // namespace detail

// Builds a ScenarioConfig from parsed JSON; relative file paths resolve
// against base_dir.
inline ScenarioConfig parse_config(const Json& j, const std::filesystem::path& base_dir) {
  using detail::get_number;
  detail::require_keys(j, "config",
                       {"benefits", "design_point", "sweep", "constraints", "individual_rationality", "alpha",
                        "reward_min", "tolerances", "output_dir", "seed", "workers", "description"});
  ScenarioConfig cfg;
  if (!j.contains("benefits") || !j["benefits"].is_array() || j["benefits"].empty()) {
    throw ConfigError("config.benefits must be a nonempty array");
  }
  std::set<int> ids;
  for (std::size_t k = 0; k < j["benefits"].size(); ++k) {
    const auto& b = j["benefits"][k];
    const std::string where = "benefits[" + std::to_string(k) + "]";
    detail::require_keys(b, where, {"player_id", "family", "coefficient"});
    BenefitSpec spec;
    if (!b.contains("player_id") || !b["player_id"].is_number_integer()) throw ConfigError(where + ".player_id must be an integer");
    spec.player_id = b["player_id"].get<int>();
    if (!ids.insert(spec.player_id).second) throw ConfigError(where + ": duplicate player_id " + std::to_string(spec.player_id));
    const std::string family = b.value("family", std::string("scaled_log"));
    if (family != "scaled_log") throw ConfigError(where + ": unsupported family '" + family + "'");
    if (!b.contains("coefficient")) throw ConfigError(where + ".coefficient is required");
    spec.coefficient = get_number(b["coefficient"], where + ".coefficient");
    if (!(spec.coefficient > 0.0)) throw ConfigError(where + ".coefficient must be positive");
    cfg.benefits.push_back(spec);
  }
  if (j.contains("design_point")) {
    const auto& d = j["design_point"];
    detail::require_keys(d, "design_point", {"reward", "perturbation"});
    if (d.contains("reward")) cfg.reward = get_number(d["reward"], "design_point.reward");
    if (d.contains("perturbation")) cfg.perturbation = detail::get_numbers(d["perturbation"], "design_point.perturbation");
  }
  if (j.contains("sweep")) {
    detail::require_keys(j["sweep"], "sweep", {"rewards"});
    if (j["sweep"].contains("rewards")) cfg.sweep_rewards = detail::get_numbers(j["sweep"]["rewards"], "sweep.rewards");
  }
  if (j.contains("constraints")) {
    const auto& c = j["constraints"];
    detail::require_keys(c, "constraints", {"source", "rows", "case", "scale", "rate", "hours"});
    const std::string source = c.value("source", std::string("none"));
    if (source == "none") {
      cfg.constraint_source = ConstraintSource::none;
    } else if (source == "inline") {
      cfg.constraint_source = ConstraintSource::inline_rows;
      if (!c.contains("rows") || !c["rows"].is_array()) throw ConfigError("constraints.rows must be an array");
      for (std::size_t k = 0; k < c["rows"].size(); ++k) {
        const auto& r = c["rows"][k];
        const std::string where = "constraints.rows[" + std::to_string(k) + "]";
        detail::require_keys(r, where, {"label", "coefficients", "bound"});
        InlineRow row;
        row.label = r.value("label", "row" + std::to_string(k));
        if (!r.contains("coefficients") || !r.contains("bound")) throw ConfigError(where + " needs coefficients and bound");
        row.coefficients = detail::get_numbers(r["coefficients"], where + ".coefficients");
        row.bound = get_number(r["bound"], where + ".bound");
        cfg.rows.push_back(std::move(row));
      }
    } else if (source == "grid") {
      cfg.constraint_source = ConstraintSource::grid;
      if (!c.contains("case") || !c["case"].is_string()) throw ConfigError("constraints.case must be a path string");
      cfg.grid.case_path = base_dir / c["case"].get<std::string>();
      if (!std::filesystem::exists(cfg.grid.case_path)) {
        throw ConfigError("constraints.case '" + cfg.grid.case_path.string() + "' does not exist");
      }
      if (c.contains("scale")) cfg.grid.scale = get_number(c["scale"], "constraints.scale");
      if (c.contains("rate")) cfg.grid.rate = get_number(c["rate"], "constraints.rate");
      if (c.contains("hours")) cfg.grid.hours = get_number(c["hours"], "constraints.hours");
    } else {
      throw ConfigError("constraints.source must be none, inline or grid");
    }
  }
  if (j.contains("individual_rationality")) {
    const std::string ir = detail::get_as<std::string>(j["individual_rationality"], "individual_rationality");
    if (ir == "simplified") {
      cfg.individual_rationality = IrEncoding::simplified;
    } else if (ir == "literal") {
      cfg.individual_rationality = IrEncoding::literal;
    } else if (ir != "none") {
      throw ConfigError("individual_rationality must be none, simplified or literal");
    }
  }
  if (j.contains("alpha")) cfg.alpha = get_number(j["alpha"], "alpha");
  if (j.contains("reward_min")) cfg.reward_min = get_number(j["reward_min"], "reward_min");
  if (j.contains("tolerances")) {
    const auto& t = j["tolerances"];
    detail::require_keys(t, "tolerances", {"foc", "property_margin", "sandwich", "bound_containment", "verification_good",
                                           "verification_investment", "verification_constraint", "verification_payoff",
                                           "simplex"});
    auto set = [&](const char* key, double& field) {
      if (t.contains(key)) field = get_number(t[key], std::string("tolerances.") + key);
    };
    set("foc", cfg.tolerances.foc);
    set("property_margin", cfg.tolerances.property.margin);
    set("sandwich", cfg.tolerances.property.sandwich);
    set("bound_containment", cfg.tolerances.bound_containment);
    set("verification_good", cfg.tolerances.verification.good);
    set("verification_investment", cfg.tolerances.verification.investment);
    set("verification_constraint", cfg.tolerances.verification.constraint);
    set("verification_payoff", cfg.tolerances.verification.payoff);
    set("simplex", cfg.tolerances.simplex);
  }
  if (j.contains("output_dir")) cfg.output_dir = base_dir / detail::get_as<std::string>(j["output_dir"], "output_dir");
  if (j.contains("seed")) cfg.seed = detail::get_as<std::uint64_t>(j["seed"], "seed");
  if (j.contains("workers")) {
    const auto w = detail::get_as<int>(j["workers"], "workers");
    if (w < 1) throw ConfigError("workers must be >= 1");
    cfg.workers = static_cast<unsigned>(w);
  }
  if (!cfg.perturbation.empty() && cfg.perturbation.size() != cfg.benefits.size()) {
    throw ConfigError("design_point.perturbation has " + std::to_string(cfg.perturbation.size()) + " entries for " +
                      std::to_string(cfg.benefits.size()) + " players");
  }
  if (!(cfg.reward > 0.0)) throw ConfigError("design_point.reward must be positive");
  for (double c : cfg.perturbation) {
    if (!(c >= 0.0)) throw ConfigError("design_point.perturbation entries must be nonnegative");
  }
  for (double r : cfg.sweep_rewards) {
    if (!(r > 0.0)) throw ConfigError("sweep.rewards entries must be positive");
  }
  if (!(cfg.alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
  if (!(cfg.reward_min > 0.0)) throw ConfigError("reward_min must be positive");
  for (const auto& r : cfg.rows) {
    if (r.coefficients.size() != cfg.benefits.size() + 1) {
      throw ConfigError("constraint row '" + r.label + "' needs N + 1 = " + std::to_string(cfg.benefits.size() + 1) +
                        " coefficients");
    }
  }
  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path());
}

struct Artifact {
  std::string name;
  std::string content;
};

struct PipelineResult {
  Json report;
  std::vector<Artifact> files;
  int exit_code = kExitSuccess;
};

namespace detail {

inline Json extended(const ExtendedReal& x) { return x.is_infinite() ? Json("+inf") : Json(x.value()); }

inline std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  return s == "-0.00" ? "0.00" : s;
}

inline std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline BenefitProfile build_profile(const std::vector<BenefitSpec>& specs) {
  std::vector<BenefitFunction> fs;
  for (const auto& s : specs) fs.push_back(BenefitFunction::scaled_log(s.coefficient));
  return BenefitProfile(std::move(fs));
}

inline std::vector<int> player_ids(const std::vector<BenefitSpec>& specs) {
  std::vector<int> out;
  for (const auto& s : specs) out.push_back(s.player_id);
  return out;
}

inline Json instance_json(const ScenarioConfig& cfg, const BenefitProfile& p) {
  Json j;
  j["players"] = p.size();
  j["player_ids"] = player_ids(cfg.benefits);
  std::vector<double> coeff;
  for (const auto& f : p.functions()) coeff.push_back(f.coefficient());
  j["family"] = "scaled_log";
  j["coefficients"] = coeff;
  j["optimal_good"] = p.socially_optimal_good();
  j["optimal_payoff"] = p.socially_optimal_payoff();
  return j;
}

inline Json tolerances_json(const Tolerances& t) {
  return Json{{"foc", t.foc},
              {"property_margin", t.property.margin},
              {"sandwich", t.property.sandwich},
              {"optimum_match", t.property.at_optimum},
              {"bound_containment", t.bound_containment},
              {"verification_good", t.verification.good},
              {"verification_investment", t.verification.investment},
              {"verification_constraint", t.verification.constraint},
              {"verification_payoff", t.verification.payoff},
              {"verification_perturbation_sum", t.verification.perturbation_sum},
              {"simplex", t.simplex}};
}

inline Json equilibrium_json(const EquilibriumResult& eq) {
  return Json{{"investments", eq.investments},
              {"active_set", eq.active_set},
              {"public_good", eq.public_good},
              {"pool", eq.pool},
              {"total_investment", eq.total_investment()},
              {"max_foc_violation", eq.max_foc_violation},
              {"iterations", eq.iterations},
              {"warnings", eq.warnings}};
}

inline Json bounds_json(const PoaBounds& b) {
  return Json{{"good_far", b.far_good},
              {"good_near", b.near_good},
              {"good_near_tightened", b.near_good_tightened},
              {"good_lower", b.good_lower()},
              {"good_upper", b.good_upper()},
              {"poa_lower", extended(b.poa_lower)},
              {"poa_lower_tightened", extended(b.poa_lower_tightened)},
              {"poa_upper", extended(b.poa_upper)},
              {"certified_active", b.certified_active},
              {"perturbation_above_optimum", b.perturbation_above_optimum},
              {"diagnostics", b.diagnostics}};
}

inline Json design_json(const DesignSolution& s) {
  Json j{{"status", to_string(s.status)}, {"iterations", s.iterations}};
  if (s.optimal()) {
    j["reward"] = s.reward;
    j["perturbation"] = s.perturbation;
    j["perturbation_sum"] = s.perturbation_sum();
    j["objective"] = s.objective;
    j["predicted_investments"] = s.predicted_investments;
    j["total_investment"] = s.total_investment();
  }
  j["binding"] = s.binding;
  return j;
}

inline Json verification_json(const DesignVerification& v) {
  Json checks = Json::array();
  for (const auto& c : v.checks) {
    checks.push_back(Json{{"check", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"holds", c.holds}});
  }
  return Json{{"passed", v.passed()}, {"checks", checks}, {"equilibrium", equilibrium_json(v.equilibrium)}};
}

inline Json regime_json(const BenefitProfile& p, std::span<const double> c) {
  const RegimeConstants rc = regime_constants(p, c);
  return Json{{"good_upper", rc.good_upper}, {"good_lower", rc.good_lower}, {"reward_threshold", rc.reward_threshold}};
}

inline std::vector<double> perturbation_of(const ScenarioConfig& cfg) {
  return cfg.perturbation.empty() ? std::vector<double>(cfg.benefits.size(), 0.0) : cfg.perturbation;
}

inline Json header(Pipeline p, const ScenarioConfig& cfg) {
  return Json{{"pipeline", to_string(p)}, {"status", "pass"}, {"exit_code", kExitSuccess}, {"seed", cfg.seed}};
}

inline void finish(PipelineResult& r, bool passed, const std::string& reason = {}) {
  r.exit_code = passed ? kExitSuccess : kExitVerification;
  r.report["status"] = passed ? "pass" : "fail";
  r.report["exit_code"] = r.exit_code;
  if (!passed && !reason.empty()) r.report["failure"] = reason;
}

inline std::string allocation_csv(const std::vector<int>& ids, const DesignSolution& s, bool money) {
  std::string out = "bus,c_star,s_star\n";
  if (!s.optimal()) return out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto f = money ? fixed2 : general;
    out += std::to_string(ids[i]) + "," + f(s.perturbation[i]) + "," + f(s.predicted_investments[i]) + "\n";
  }
  return out;
}

// Constraint rows from the config's source, plus IR rows when requested.
inline ConstraintSet scenario_constraints(const ScenarioConfig& cfg, const LotteryInstance& inst,
                                          const std::optional<DrScenario>& grid) {
  const std::size_t n = inst.players();
  ConstraintSet cs(n);
  if (cfg.constraint_source == ConstraintSource::inline_rows) {
    for (const auto& r : cfg.rows) {
      Eigen::RowVectorXd row(static_cast<Eigen::Index>(n) + 1);
      for (std::size_t k = 0; k <= n; ++k) row[static_cast<Eigen::Index>(k)] = r.coefficients[k];
      cs.append(row, r.bound, r.label);
    }
  } else if (cfg.constraint_source == ConstraintSource::grid) {
    cs.append(build_dr_constraints(*grid));
  }
  if (cfg.individual_rationality) {
    const DesignProblem probe(inst, ConstraintSet(n), cfg.alpha, cfg.reward_min);
    cs.append(individual_rationality_rows(probe, *cfg.individual_rationality));
  }
  return cs;
}

// Grid scenario whose load buses must match the configured player ids; the
// benefit list is reordered to bus-table order.
inline DrScenario grid_scenario(ScenarioConfig& cfg) {
  const GridCase g = load_case(cfg.grid.case_path.string());
  DrScenario sc = monetize(g, cfg.grid.scale, cfg.grid.rate, cfg.grid.hours);
  std::map<int, BenefitSpec> by_id;
  for (const auto& b : cfg.benefits) by_id[b.player_id] = b;
  std::vector<BenefitSpec> ordered;
  std::string missing;
  for (int bus : sc.load_buses) {
    auto it = by_id.find(bus);
    if (it == by_id.end()) {
      missing += (missing.empty() ? "" : ",") + std::to_string(bus);
      continue;
    }
    ordered.push_back(it->second);
    by_id.erase(it);
  }
  if (!missing.empty()) throw ConfigError("benefits lack load buses " + missing);
  if (!by_id.empty()) throw ConfigError("benefits name " + std::to_string(by_id.size()) + " players that are not load buses");
  cfg.benefits = std::move(ordered);
  return sc;
}

template <class F>
void parallel_for(std::size_t count, unsigned workers, F&& body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (workers == 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex mu;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          body(k);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

// Solve plus property checks at the configured design point.
inline PipelineResult run_equilibrium(const ScenarioConfig& cfg) {
  PipelineResult r;
  r.report = detail::header(Pipeline::equilibrium, cfg);
  const LotteryInstance inst(detail::build_profile(cfg.benefits));
  const auto& p = inst.benefits();
  const DesignPoint d(cfg.reward, detail::perturbation_of(cfg));
  r.report["instance"] = detail::instance_json(cfg, p);
  r.report["tolerances"] = detail::tolerances_json(cfg.tolerances);
  r.report["design_point"] = Json{{"reward", d.reward()}, {"perturbation", d.perturbation()},
                                  {"perturbation_sum", d.perturbation_sum()}};
  r.report["regime"] = detail::regime_json(p, d.perturbation());
  const EquilibriumResult eq = solve_equilibrium(inst, d);
  r.report["equilibrium"] = detail::equilibrium_json(eq);
  if (eq.all_active()) {
    const Sensitivities s = equilibrium_sensitivities(inst, d, eq);
    r.report["sensitivities"] = Json{{"d_good_d_reward", s.d_reward}, {"d_good_d_perturbation", s.d_perturbation}};
  }
  const PoaBounds b = poa_bounds(p, d);
  r.report["poa"] = Json{{"true", detail::extended(true_poa(inst, eq))}, {"bounds", detail::bounds_json(b)}};
  const PropertyReport props = check_properties(inst, d, eq, cfg.tolerances.property);
  r.report["properties"] = props;
  const bool foc_ok = eq.max_foc_violation <= cfg.tolerances.foc;
  detail::finish(r, foc_ok && props.all_hold(), foc_ok ? "property check failed" : "FOC residual above tolerance");
  return r;
}

// PoA and bounds over a reward sweep at the configured perturbation.
inline PipelineResult run_analyze(const ScenarioConfig& cfg) {
  PipelineResult r;
  r.report = detail::header(Pipeline::analyze, cfg);
  const LotteryInstance inst(detail::build_profile(cfg.benefits));
  const auto& p = inst.benefits();
  const std::vector<double> c = detail::perturbation_of(cfg);
  r.report["instance"] = detail::instance_json(cfg, p);
  r.report["tolerances"] = detail::tolerances_json(cfg.tolerances);
  r.report["perturbation"] = c;
  r.report["regime"] = detail::regime_json(p, c);

  std::vector<double> rewards = cfg.sweep_rewards;
  std::sort(rewards.begin(), rewards.end());
  rewards.erase(std::unique(rewards.begin(), rewards.end()), rewards.end());

  struct Point {
    EquilibriumResult eq;
    ExtendedReal poa;
    PoaBounds bounds;
    PropertyReport props;
    bool contained = false;
  };
  std::vector<Point> points(rewards.size());
  detail::parallel_for(rewards.size(), cfg.workers, [&](std::size_t k) {
    const DesignPoint d(rewards[k], c);
    Point& pt = points[k];
    pt.eq = solve_equilibrium(inst, d);
    pt.poa = true_poa(inst, pt.eq);
    pt.bounds = poa_bounds(p, d);
    pt.props = check_properties(inst, d, pt.eq, cfg.tolerances.property);
    const double v = pt.poa.as_double();
    const double tol = cfg.tolerances.bound_containment;
    pt.contained = v >= pt.bounds.poa_lower.as_double() * (1.0 - tol) && v <= pt.bounds.poa_upper.as_double() * (1.0 + tol);
  });

  std::string csv = "reward,public_good,poa,poa_lower,poa_lower_tightened,poa_upper,good_far,good_near,good_near_tightened\n";
  Json arr = Json::array();
  bool passed = true;
  bool monotone = true;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Point& pt = points[k];
    passed = passed && pt.contained && pt.props.all_hold() && pt.eq.max_foc_violation <= cfg.tolerances.foc;
    if (k > 0 && pt.poa.as_double() > points[k - 1].poa.as_double()) monotone = false;
    csv += detail::general(rewards[k]) + "," + detail::general(pt.eq.public_good) + "," + pt.poa.to_string() + "," +
           pt.bounds.poa_lower.to_string() + "," + pt.bounds.poa_lower_tightened.to_string() + "," +
           pt.bounds.poa_upper.to_string() + "," + detail::general(pt.bounds.far_good) + "," +
           detail::general(pt.bounds.near_good) + "," + detail::general(pt.bounds.near_good_tightened) + "\n";
    arr.push_back(Json{{"reward", rewards[k]},
                       {"equilibrium", detail::equilibrium_json(pt.eq)},
                       {"poa", detail::extended(pt.poa)},
                       {"bounds", detail::bounds_json(pt.bounds)},
                       {"poa_within_bounds", pt.contained},
                       {"properties", pt.props}});
  }
  r.report["sweep"] = arr;
  r.report["poa_nonincreasing_in_reward"] = monotone;
  r.files.push_back({"sweep.csv", csv});
  detail::finish(r, passed, "PoA outside bounds or property check failed");
  return r;
}

namespace detail {

inline PipelineResult run_design_common(Pipeline which, ScenarioConfig cfg) {
  PipelineResult r;
  r.report = header(which, cfg);
  std::optional<DrScenario> grid;
  if (cfg.constraint_source == ConstraintSource::grid) grid = grid_scenario(cfg);
  if (which == Pipeline::casestudy && !grid) throw ConfigError("casestudy needs constraints.source = grid");
  const LotteryInstance inst(build_profile(cfg.benefits));
  const auto& p = inst.benefits();
  const DesignProblem prob(inst, scenario_constraints(cfg, inst, grid), cfg.alpha, cfg.reward_min);
  r.report["instance"] = instance_json(cfg, p);
  r.report["tolerances"] = tolerances_json(cfg.tolerances);
  r.report["problem"] = Json{{"alpha", prob.alpha},
                             {"reward_min", prob.reward_min},
                             {"constraint_rows", prob.constraints.rows()},
                             {"individual_rationality", cfg.individual_rationality ? to_string(*cfg.individual_rationality) : "none"}};
  const LinearProgram lp = build_reformulation(prob);
  SimplexOptions opts;
  opts.tolerance = cfg.tolerances.simplex;
  const DesignSolution sol = solve_lp(prob, lp, opts);
  r.report["design"] = design_json(sol);
  r.files.push_back({"lp.txt", lp.dump()});
  const auto ids = player_ids(cfg.benefits);
  r.files.push_back({"allocation.csv", allocation_csv(ids, sol, grid.has_value())});

  if (grid) {
    const DrScenario& sc = *grid;
    std::string demand = "bus,demand,adjusted\n";
    std::string lines = "line,flow,limit,utilization_pct\n";
    Json gj{{"buses", sc.grid.buses.size()},
            {"generators", sc.grid.generators.size()},
            {"branches", sc.grid.branches.size()},
            {"load_buses", sc.load_buses},
            {"scale", sc.scale},
            {"rate", sc.rate},
            {"hours", sc.hours},
            {"total_demand_mw", sc.grid.total_demand_mw()},
            {"total_generation_mw", sc.grid.total_generation_mw()},
            {"total_demand_scaled", sc.demand.sum()},
            {"total_generation", sc.generation.sum()}};
    if (sol.optimal()) {
      const auto& s = sol.predicted_investments;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double l = sc.demand[static_cast<Eigen::Index>(i)];
        demand += std::to_string(ids[i]) + "," + fixed2(l) + "," + fixed2(l - s[i]) + "\n";
      }
      const Eigen::VectorXd f = sc.flows(s) / sc.money_per_mw();
      double worst = 0.0;
      for (Eigen::Index l = 0; l < f.size(); ++l) {
        const double limit = sc.grid.branches[static_cast<std::size_t>(l)].rate_mw;
        const double util = limit > 0.0 ? 100.0 * std::abs(f[l]) / limit : 0.0;
        worst = std::max(worst, util);
        lines += std::to_string(l + 1) + "," + fixed2(f[l]) + "," + (limit > 0.0 ? fixed2(limit) : std::string("inf")) +
                 "," + fixed2(util) + "\n";
      }
      gj["max_utilization_pct"] = worst;
      gj["served_demand"] = sc.demand.sum() - sol.total_investment();
    }
    r.report["grid"] = gj;
    r.files.push_back({"demand.csv", demand});
    r.files.push_back({"lines.csv", lines});
  }

  if (!sol.optimal()) {
    finish(r, false, std::string("design LP is ") + to_string(sol.status));
    return r;
  }
  const DesignVerification v = audit_design(prob, sol, cfg.tolerances.verification);
  r.report["verification"] = verification_json(v);
  r.report["summary"] = Json{{"optimal_good", p.socially_optimal_good()},
                             {"reward", sol.reward},
                             {"perturbation_sum", sol.perturbation_sum()},
                             {"total_investment", sol.total_investment()},
                             {"objective", sol.objective},
                             {"aggregate_payoff", p.aggregate_payoff(v.equilibrium.public_good)},
                             {"optimal_payoff", p.socially_optimal_payoff()}};
  if (grid) r.report["summary"]["generation_balance"] = grid->demand.sum() - sol.total_investment();
  finish(r, v.passed(), "design verification failed: " + v.failures());
  return r;
}

}  // namespace detail

inline PipelineResult run_design(const ScenarioConfig& cfg) { return detail::run_design_common(Pipeline::design, cfg); }

inline PipelineResult run_casestudy(const ScenarioConfig& cfg) {
  return detail::run_design_common(Pipeline::casestudy, cfg);
}

// Runs a pipeline and maps errors to exit codes: configuration, parse and IO
// problems give 1, any other library failure 2.
inline PipelineResult run_scenario(Pipeline which, const ScenarioConfig& cfg) {
  auto failed = [&](int code, const std::string& kind, const std::string& what) {
    PipelineResult r;
    r.report = detail::header(which, cfg);
    r.report["status"] = "error";
    r.report["exit_code"] = code;
    r.report["failure"] = kind + ": " + what;
    r.exit_code = code;
    return r;
  };
  try {
    switch (which) {
      case Pipeline::equilibrium:
        return run_equilibrium(cfg);
      case Pipeline::analyze:
        return run_analyze(cfg);
      case Pipeline::design:
        return run_design(cfg);
      case Pipeline::casestudy:
        return run_casestudy(cfg);
    }
  } catch (const ConfigError& e) {
    return failed(kExitConfig, "config", e.what());
  } catch (const IoError& e) {
    return failed(kExitConfig, "io", e.what());
  } catch (const ParseError& e) {
    return failed(kExitConfig, "parse", e.what());
  } catch (const ValidationError& e) {
    return failed(kExitConfig, "validation", e.what());
  } catch (const Error& e) {
    return failed(kExitVerification, "solver", e.what());
  }
  return failed(kExitConfig, "config", "unknown pipeline");
}

// Output directory precedence: explicit flag, then LOTTERY_OUTPUT_DIR, then
// the config.
inline std::filesystem::path resolve_output_dir(const ScenarioConfig& cfg, const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("LOTTERY_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

// Writes report.json and every CSV artifact into dir.
inline void emit_report(const PipelineResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  auto write = [&](const std::string& name, const std::string& content) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
  };
  write("report.json", r.report.dump(2) + "\n");
  for (const auto& f : r.files) write(f.name, f.content);
}

}  // namespace lottery
