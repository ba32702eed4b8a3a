#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lottery/benefit.hpp"
#include "lottery/errors.hpp"
#include "lottery/game.hpp"
#include "lottery/numeric.hpp"

namespace lottery {

// G^U = max(G*, c_bar), G^L = min(G*, c_bar) and the reward threshold R_L(c)
// above which every player is certified active.
struct RegimeConstants {
  double good_upper = 0.0;
  double good_lower = 0.0;
  double reward_threshold = 0.0;
};

namespace detail {

inline double sum_of(std::span<const double> c) {
  double s = 0.0;
  for (double x : c) {
    if (!(x >= 0.0)) throw DomainError("perturbations must be nonnegative");
    s += x;
  }
  return s;
}

// max_i (1 - h_i'(G^U))
inline double threshold_target(const BenefitProfile& p, double good_upper) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& f : p.functions()) m = std::max(m, 1.0 - f.slope(good_upper));
  return m;
}

}  // namespace detail

// R_L(c) = m (G^U - c_bar) / (1 - m), the root of R/(R + G^U - c_bar) = m.
inline double reward_threshold_closed_form(const BenefitProfile& p, std::span<const double> c) {
  const double cbar = detail::sum_of(c);
  const double gu = std::max(p.socially_optimal_good(), cbar);
  const double m = detail::threshold_target(p, gu);
  if (m <= 0.0) return 0.0;
  return m * (gu - cbar) / (1.0 - m);
}

// R_L(c) by bisection on R/(R + G^U - c_bar) - m, cross-checked against the
// closed form.
inline double reward_threshold(const BenefitProfile& p, std::span<const double> c) {
  if (c.size() != p.size()) throw ValidationError("perturbation vector has wrong length");
  const double cbar = detail::sum_of(c);
  const double gu = std::max(p.socially_optimal_good(), cbar);
  const double m = detail::threshold_target(p, gu);
  if (m >= 1.0) throw InvariantViolation("max_i (1 - h_i'(G^U)) >= 1 implies a nonpositive slope");
  if (m <= 0.0) return 0.0;
  const double gap = gu - cbar;
  if (gap <= 0.0) return 0.0;
  auto f = [&](double r) { return r / (r + gap) - m; };
  const double hi = expand_upper([&](double r) { return f(r) > 0.0; }, 0.0, gap);
  const double r = bisect(f, 0.0, hi, 1e-15).x;
  const double closed = reward_threshold_closed_form(p, c);
  if (!near(r, closed, 1e-8, closed)) {
    throw NumericError("R_L bisection " + std::to_string(r) + " disagrees with closed form " + std::to_string(closed));
  }
  return r;
}

inline RegimeConstants regime_constants(const BenefitProfile& p, std::span<const double> c) {
  const double cbar = detail::sum_of(c);
  const double g_star = p.socially_optimal_good();
  return {std::max(g_star, cbar), std::min(g_star, cbar), reward_threshold(p, c)};
}

// Public-good bracket and price-of-anarchy bounds that need no equilibrium.
//
// far_good is the bound farther from G* (its aggregate payoff gives the upper
// PoA bound); near_good the one closer to G* (lower PoA bound). For
// c_bar <= G* they bracket G from below and above respectively; for
// c_bar > G* the roles of "below" and "above" swap. near_good_tightened
// replaces (G^L - c_bar) by max(0, far_good - c_bar) in the near-bound
// argument, which is never looser.
struct PoaBounds {
  double far_good = 0.0;
  double near_good = 0.0;
  double near_good_tightened = 0.0;
  ExtendedReal poa_lower{1.0};
  ExtendedReal poa_lower_tightened{1.0};
  ExtendedReal poa_upper{1.0};
  int certified_active = 0;  // |V_bar_a|
  bool perturbation_above_optimum = false;
  std::vector<std::string> diagnostics;

  double good_lower() const { return std::min(far_good, near_good_tightened); }
  double good_upper() const { return std::max(far_good, near_good_tightened); }
};

namespace detail {

// H^-1(argument), with vacuous arguments resolved to `fallback`, an edge of the
// bracket between c_bar and G*.
inline double resolve_bound(const BenefitProfile& p, double argument, double fallback, const char* name,
                            std::vector<std::string>& diagnostics) {
  if (!std::isfinite(argument)) {
    diagnostics.push_back(std::string(name) + ": nonfinite argument, bound replaced by bracket edge");
    return fallback;
  }
  const double h0 = p.aggregate_marginal(0.0);
  if (argument > h0) {
    diagnostics.push_back(std::string(name) + ": argument " + std::to_string(argument) + " exceeds H(0) = " +
                          std::to_string(h0) + "; degenerate bound replaced by bracket edge");
    return fallback;
  }
  const ExtendedReal g = p.invert_aggregate(argument);
  if (g.is_infinite()) {
    diagnostics.push_back(std::string(name) + ": argument <= 0 gives +inf; clamped to bracket edge");
    return fallback;
  }
  return g.value();
}

inline ExtendedReal payoff_ratio(double optimum, double payoff) {
  if (!(payoff > 0.0)) return ExtendedReal::infinity();
  return ExtendedReal(optimum / payoff);
}

}  // namespace detail

inline int certified_active_count(const BenefitProfile& p, double reward, std::span<const double> c) {
  const double cbar = detail::sum_of(c);
  const double gu = std::max(p.socially_optimal_good(), cbar);
  const double share = reward / (reward + gu - cbar);
  int count = 0;
  for (const auto& f : p.functions()) {
    if (share + f.slope(gu) - 1.0 > 0.0) ++count;
  }
  return count;
}

inline PoaBounds public_good_bounds(const BenefitProfile& p, const DesignPoint& d) {
  if (d.perturbation().size() != p.size()) throw ValidationError("perturbation vector has wrong length");
  const double reward = d.reward();
  const double cbar = d.perturbation_sum();
  const double g_star = p.socially_optimal_good();
  const double gu = std::max(g_star, cbar);
  const double gl = std::min(g_star, cbar);
  const double n = static_cast<double>(p.size());

  PoaBounds b;
  b.certified_active = certified_active_count(p, reward, d.perturbation());
  const double k = static_cast<double>(b.certified_active);
  b.perturbation_above_optimum = cbar > g_star;

  if (!b.perturbation_above_optimum) {
    const double far_arg = (n - 1.0) * (gu - cbar) / (reward + gl - cbar) + 1.0;
    b.far_good = detail::resolve_bound(p, far_arg, cbar, "far bound", b.diagnostics);
    const double near_arg = (k - 1.0) * (gl - cbar) / (reward + gu - cbar) + 1.0;
    b.near_good = detail::resolve_bound(p, near_arg, g_star, "near bound", b.diagnostics);
    const double tight_arg = (k - 1.0) * std::max(0.0, b.far_good - cbar) / (reward + gu - cbar) + 1.0;
    b.near_good_tightened = detail::resolve_bound(p, tight_arg, g_star, "near bound (tightened)", b.diagnostics);
  } else {
    const double denom = reward + gl - cbar;
    const double far_arg = denom > 0.0 ? (k - 1.0) * (gl - cbar) / denom + 1.0
                                       : std::numeric_limits<double>::quiet_NaN();
    b.far_good = detail::resolve_bound(p, far_arg, cbar, "far bound", b.diagnostics);
    const double near_arg = (n - 1.0) * (gu - cbar) / (reward + gu - cbar) + 1.0;
    b.near_good = detail::resolve_bound(p, near_arg, g_star, "near bound", b.diagnostics);
    b.near_good_tightened = b.near_good;
  }
  return b;
}

inline PoaBounds poa_bounds(const BenefitProfile& p, const DesignPoint& d) {
  PoaBounds b = public_good_bounds(p, d);
  const double optimum = p.socially_optimal_payoff();
  b.poa_lower = detail::payoff_ratio(optimum, p.aggregate_payoff(b.near_good));
  b.poa_lower_tightened = detail::payoff_ratio(optimum, p.aggregate_payoff(b.near_good_tightened));
  b.poa_upper = detail::payoff_ratio(optimum, p.aggregate_payoff(b.far_good));
  return b;
}

// Socially optimal payoff over the equilibrium aggregate payoff.
inline ExtendedReal true_poa(const LotteryInstance& inst, const EquilibriumResult& eq) {
  const auto& p = inst.benefits();
  return detail::payoff_ratio(p.socially_optimal_payoff(), p.aggregate_payoff(eq.public_good));
}

inline ExtendedReal true_poa(const LotteryInstance& inst, const DesignPoint& d) {
  return true_poa(inst, solve_equilibrium(inst, d));
}

// Per-player investment floor c_i + R (R/(R + G^U - c_bar) + h_i'(G^U) - 1),
// valid whenever R > R_L(c).
inline std::vector<double> investment_lower_bounds(const BenefitProfile& p, const DesignPoint& d) {
  const double reward = d.reward();
  const double cbar = d.perturbation_sum();
  const double gu = std::max(p.socially_optimal_good(), cbar);
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = d.perturbation(i) + reward * (reward / (reward + gu - cbar) + p[i].slope(gu) - 1.0);
  }
  return out;
}

struct PropertyOutcome {
  std::string property;
  std::optional<bool> holds;  // empty when skipped
  std::optional<double> margin;
  std::string skipped_reason;

  bool skipped() const noexcept { return !holds.has_value(); }
};

struct PropertyReport {
  std::vector<PropertyOutcome> outcomes;

  bool all_hold() const {
    return std::all_of(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.holds.value_or(true); });
  }
  const PropertyOutcome* find(const std::string& name) const {
    for (const auto& o : outcomes) {
      if (o.property == name) return &o;
    }
    return nullptr;
  }
};

struct PropertyTolerances {
  double margin = 1e-9;     // structural checks
  double sandwich = 1e-7;   // aggregate-payoff containment
  double at_optimum = 1e-6; // |G - G*| counted as "G = G*"
};

// Checks the equilibrium against the structural properties the theory
// predicts. Report-only: nothing throws on a failed property.
inline PropertyReport check_properties(const LotteryInstance& inst, const DesignPoint& d, const EquilibriumResult& eq,
                                       const PropertyTolerances& tol = {}) {
  const auto& p = inst.benefits();
  const std::size_t n = inst.players();
  const double reward = d.reward();
  const double cbar = d.perturbation_sum();
  const double g = eq.public_good;
  const double g_star = p.socially_optimal_good();
  const bool hypothesis = cbar <= g + reward;

  PropertyReport report;
  auto record = [&](std::string name, double margin, double threshold) {
    report.outcomes.push_back({std::move(name), margin >= -threshold, margin, {}});
  };
  auto skip = [&](std::string name, std::string why) {
    report.outcomes.push_back({std::move(name), std::nullopt, std::nullopt, std::move(why)});
  };

  if (n < 2) {
    skip("pool_covers_perturbation", "single player");
  } else if (!near(g, g_star, tol.at_optimum, g_star)) {
    skip("pool_covers_perturbation", "equilibrium public good differs from G*");
  } else {
    record("pool_covers_perturbation", g + reward - cbar, tol.margin);
  }

  if (!hypothesis) {
    skip("good_bracket", "c_bar > G + R");
  } else {
    record("good_bracket", std::min(g - std::min(cbar, g_star), std::max(cbar, g_star) - g), tol.margin);
  }

  if (!eq.all_active() || !hypothesis) {
    const char* why = eq.all_active() ? "c_bar > G + R" : "inactive players present";
    skip("dG_dR_sign", why);
    skip("dG_dc_positive", why);
  } else {
    const Sensitivities sens = equilibrium_sensitivities(inst, d, eq);
    const double sign = g_star > cbar ? 1.0 : (g_star < cbar ? -1.0 : 0.0);
    record("dG_dR_sign", sign * sens.d_reward, tol.margin);
    if (near(cbar, g_star, tol.margin, g_star)) {
      skip("dG_dc_positive", "c_bar = G*");
    } else {
      const double min_dc = *std::min_element(sens.d_perturbation.begin(), sens.d_perturbation.end());
      report.outcomes.push_back({"dG_dc_positive", min_dc > 0.0, min_dc, {}});
    }
  }

  const double r_l = reward_threshold(p, d.perturbation());
  if (!(reward > r_l)) {
    skip("investment_lower_bound", "R <= R_L(c)");
  } else {
    const auto floor = investment_lower_bounds(p, d);
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) margin = std::min(margin, eq.investments[i] - floor[i]);
    record("investment_lower_bound", margin, tol.margin);
  }

  const PoaBounds bounds = public_good_bounds(p, d);
  const double at_eq = p.aggregate_payoff(g);
  record("payoff_sandwich",
         std::min(at_eq - p.aggregate_payoff(bounds.far_good), p.aggregate_payoff(bounds.near_good) - at_eq),
         tol.sandwich);
  record("payoff_sandwich_tightened",
         std::min(at_eq - p.aggregate_payoff(bounds.far_good),
                  p.aggregate_payoff(bounds.near_good_tightened) - at_eq),
         tol.sandwich);
  return report;
}

}  // namespace lottery
