#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lottery/benefit.hpp"
#include "lottery/errors.hpp"
#include "lottery/numeric.hpp"

namespace lottery {

// A perturbed fixed-prize lottery: N players with benefit functions and,
// optionally, investable wealth. Caps are checked after solving, never imposed.
class LotteryInstance {
 public:
  explicit LotteryInstance(BenefitProfile benefits, std::optional<std::vector<double>> wealth_caps = std::nullopt)
      : benefits_(std::move(benefits)), wealth_caps_(std::move(wealth_caps)) {
    if (wealth_caps_) {
      if (wealth_caps_->size() != benefits_.size()) {
        throw ValidationError("wealth caps: expected " + std::to_string(benefits_.size()) + " entries");
      }
      for (double w : *wealth_caps_) {
        if (!(w > 0.0)) throw ValidationError("wealth caps must be positive");
      }
    }
  }

  const BenefitProfile& benefits() const noexcept { return benefits_; }
  std::size_t players() const noexcept { return benefits_.size(); }
  const std::optional<std::vector<double>>& wealth_caps() const noexcept { return wealth_caps_; }

 private:
  BenefitProfile benefits_;
  std::optional<std::vector<double>> wealth_caps_;
};

// Reward R and per-player perturbations c chosen by the planner.
class DesignPoint {
 public:
  DesignPoint(double reward, std::vector<double> perturbation)
      : reward_(reward), perturbation_(std::move(perturbation)) {
    if (!(reward_ > 0.0) || !std::isfinite(reward_)) {
      throw DomainError("reward must be positive and finite, got " + std::to_string(reward_));
    }
    perturbation_sum_ = 0.0;
    for (double c : perturbation_) {
      if (!(c >= 0.0) || !std::isfinite(c)) throw DomainError("perturbations must be nonnegative and finite");
      perturbation_sum_ += c;
    }
  }

  static DesignPoint unperturbed(double reward, std::size_t players) {
    return DesignPoint(reward, std::vector<double>(players, 0.0));
  }

  double reward() const noexcept { return reward_; }
  const std::vector<double>& perturbation() const noexcept { return perturbation_; }
  double perturbation(std::size_t i) const { return perturbation_.at(i); }
  double perturbation_sum() const noexcept { return perturbation_sum_; }

 private:
  double reward_;
  std::vector<double> perturbation_;
  double perturbation_sum_ = 0.0;
};

struct EquilibriumResult {
  std::vector<double> investments;
  std::vector<std::size_t> active_set;  // players with s_i > tol_active
  double public_good = 0.0;             // G = sum s - R
  double pool = 0.0;                    // S = sum s - c_bar
  double max_foc_violation = 0.0;
  int iterations = 0;                   // active-set changes
  std::vector<std::string> warnings;

  bool all_active() const noexcept { return active_set.size() == investments.size(); }
  double total_investment() const noexcept {
    double s = 0.0;
    for (double x : investments) s += x;
    return s;
  }
};

struct EquilibriumOptions {
  // Starting active set; empty means every player starts active.
  std::vector<bool> initial_active;
  double active_tolerance = 1e-9;
};

namespace detail {

inline void require_dimensions(const LotteryInstance& inst, const DesignPoint& d) {
  if (d.perturbation().size() != inst.players()) {
    throw ValidationError("design point has " + std::to_string(d.perturbation().size()) +
                          " perturbations for " + std::to_string(inst.players()) + " players");
  }
}

inline void require_profile(const LotteryInstance& inst, std::span<const double> s, std::size_t i) {
  if (s.size() != inst.players()) throw ValidationError("investment vector has wrong length");
  if (i >= inst.players()) throw ValidationError("player index out of range");
  for (double x : s) {
    if (!(x >= 0.0)) throw DomainError("investments must be nonnegative");
  }
}

inline double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace detail

// U_i(s, R, c). Zero when the lottery is canceled (sum s < R). With c = 0 this
// is exactly the classic unperturbed payoff.
inline double payoff(const LotteryInstance& inst, const DesignPoint& d, std::span<const double> s, std::size_t i) {
  detail::require_dimensions(inst, d);
  detail::require_profile(inst, s, i);
  const double total = detail::sum(s);
  const double reward = d.reward();
  if (total < reward) return 0.0;
  const double pool = total - d.perturbation_sum();
  if (pool == 0.0) throw SingularPool("payoff: sum s equals sum c, odds undefined");
  return (s[i] - d.perturbation(i)) / pool * reward + inst.benefits()[i].value(total - reward) - s[i];
}

// dU_i/ds_i on the region where the lottery holds and the pool is positive.
inline double foc_residual(const LotteryInstance& inst, const DesignPoint& d, std::span<const double> s,
                           std::size_t i) {
  detail::require_dimensions(inst, d);
  detail::require_profile(inst, s, i);
  const double total = detail::sum(s);
  const double reward = d.reward();
  if (total < reward) throw DomainError("foc_residual: lottery canceled (sum s < R)");
  const double pool = total - d.perturbation_sum();
  if (!(pool > 0.0)) throw SingularPool("foc_residual: nonpositive pool");
  const double own = s[i] - d.perturbation(i);
  return reward * (pool - own) / (pool * pool) + inst.benefits()[i].slope(total - reward) - 1.0;
}

namespace detail {

// Root in G of the aggregate first-order condition of the players in `active`
// (inactive players sit at zero), scaled by S^2/R so it stays finite as the
// pool S = R + G - c_bar shrinks:
//   psi(G) = (k-1) S - C_out + (S^2/R) (sum_{i in A} h_i'(G) - k).
// With no perturbation mass outside A this is sign-equivalent to a strictly
// decreasing function; otherwise it may rise before falling, so the largest
// root is located by a geometric scan in S first.
inline std::optional<double> solve_aggregate_foc(const LotteryInstance& inst, const DesignPoint& d,
                                                 const std::vector<bool>& active) {
  const auto& profile = inst.benefits();
  const double reward = d.reward();
  const double cbar = d.perturbation_sum();
  double k = 0.0;
  double c_out = 0.0;
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (active[i]) {
      k += 1.0;
    } else {
      c_out += d.perturbation(i);
    }
  }
  auto pool_at = [&](double g) { return (reward - cbar) + g; };
  auto psi = [&](double g) {
    const double pool = pool_at(g);
    double slopes = 0.0;
    for (std::size_t i = 0; i < active.size(); ++i) {
      if (active[i]) slopes += profile[i].slope(g);
    }
    return (k - 1.0) * pool - c_out + pool * pool / reward * (slopes - k);
  };

  constexpr double kMinPool = 1e-12;
  double g_lo = std::max(0.0, cbar - reward);
  while (!(pool_at(g_lo) > kMinPool)) {
    const double up = std::nextafter(g_lo, std::numeric_limits<double>::infinity());
    g_lo = std::max(up, g_lo + kMinPool * std::max(1.0, g_lo));
  }
  const double f_lo = psi(g_lo);
  if (f_lo == 0.0) return g_lo;
  const double width = std::max({1.0, profile.socially_optimal_good(), reward});
  const double g_hi = expand_upper([&](double g) { return psi(g) < 0.0; }, g_lo, width);

  if (c_out == 0.0) {
    if (f_lo < 0.0) return std::nullopt;
    return bisect(psi, g_lo, g_hi).x;
  }

  constexpr int kScan = 96;
  const double s_lo = pool_at(g_lo);
  const double ratio = std::pow(pool_at(g_hi) / s_lo, 1.0 / kScan);
  std::vector<double> grid(kScan + 1);
  grid[0] = g_lo;
  grid[kScan] = g_hi;
  for (int j = 1; j < kScan; ++j) grid[j] = g_lo + (s_lo * std::pow(ratio, j) - s_lo);
  for (int j = kScan - 1; j >= 0; --j) {
    if ((j == 0 ? f_lo : psi(grid[j])) > 0.0) return bisect(psi, grid[j], grid[j + 1]).x;
  }
  return std::nullopt;
}

}  // namespace detail

// Unique Nash equilibrium of the perturbed lottery, by an active-set method:
// solve the aggregate FOC of the current active set for G, recover s_i from
// each active player's FOC, then drop the most negative active player or add
// the inactive player whose FOC at zero is most violated.
inline EquilibriumResult solve_equilibrium(const LotteryInstance& inst, const DesignPoint& d,
                                           const EquilibriumOptions& opts = {}) {
  detail::require_dimensions(inst, d);
  const std::size_t n = inst.players();
  const auto& profile = inst.benefits();
  const double reward = d.reward();
  const double cbar = d.perturbation_sum();

  std::vector<bool> active = opts.initial_active.empty() ? std::vector<bool>(n, true) : opts.initial_active;
  if (active.size() != n) throw ValidationError("initial active set has wrong length");

  // Inactive players are added only when their FOC at zero exceeds this.
  constexpr double kAddTolerance = 1e-11;
  const int max_changes = static_cast<int>(2 * n);

  std::vector<double> s(n, 0.0);
  double g = 0.0;
  int changes = 0;
  auto bump = [&] {
    if (++changes > max_changes) {
      throw NonConvergence("active-set loop exceeded " + std::to_string(max_changes) + " changes");
    }
  };

  for (;;) {
    const auto root = detail::solve_aggregate_foc(inst, d, active);
    if (!root) {
      std::optional<std::size_t> candidate;
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i] && (!candidate || d.perturbation(i) > d.perturbation(*candidate))) candidate = i;
      }
      if (!candidate) {
        throw InfeasibleRegime("no aggregate FOC root with positive pool (c_bar = " + std::to_string(cbar) +
                               ", R = " + std::to_string(reward) + ")");
      }
      active[*candidate] = true;
      bump();
      continue;
    }
    g = *root;
    const double pool = reward + g - cbar;
    std::optional<std::size_t> most_negative;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i]) {
        s[i] = d.perturbation(i) + pool - pool * pool * (1.0 - profile[i].slope(g)) / reward;
        if (s[i] < 0.0 && (!most_negative || s[i] < s[*most_negative])) most_negative = i;
      } else {
        s[i] = 0.0;
      }
    }
    if (most_negative) {
      active[*most_negative] = false;
      if (std::none_of(active.begin(), active.end(), [](bool a) { return a; })) {
        throw InfeasibleRegime("active set emptied; no equilibrium with a held lottery");
      }
      bump();
      continue;
    }
    std::optional<std::size_t> violator;
    double worst = kAddTolerance;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i]) continue;
      const double r = foc_residual(inst, d, s, i);
      if (r > worst) {
        worst = r;
        violator = i;
      }
    }
    if (violator) {
      active[*violator] = true;
      bump();
      continue;
    }
    break;
  }

  EquilibriumResult out;
  out.investments = s;
  out.public_good = g;
  out.pool = reward + g - cbar;
  out.iterations = changes;
  const double total = detail::sum(s);
  if (!near(total, g + reward, 1e-8, g + reward)) {
    throw NumericError("equilibrium inconsistent: sum s = " + std::to_string(total) +
                       " but G + R = " + std::to_string(g + reward));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double r = foc_residual(inst, d, s, i);
    if (s[i] > opts.active_tolerance) {
      out.active_set.push_back(i);
      out.max_foc_violation = std::max(out.max_foc_violation, std::abs(r));
    } else {
      out.max_foc_violation = std::max(out.max_foc_violation, std::max(0.0, r));
    }
  }
  if (const auto& caps = inst.wealth_caps()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (s[i] > (*caps)[i]) {
        out.warnings.push_back("player " + std::to_string(i) + " invests " + std::to_string(s[i]) +
                               " above wealth cap " + std::to_string((*caps)[i]));
      }
    }
  }
  return out;
}

// Test oracle: player i's best response to the other entries of `profile`
// (entry i is ignored). The lottery-holding interval [lo, hi] is scanned on a
// uniform grid and the best cell refined by golden-section search; hi is far
// enough that dU_i/ds_i < -1/4 beyond it. Canceling the lottery (payoff 0) is
// considered whenever the others' investments fall short of R.
inline double best_response_oracle(const LotteryInstance& inst, const DesignPoint& d,
                                   std::span<const double> profile, std::size_t i) {
  detail::require_dimensions(inst, d);
  detail::require_profile(inst, profile, i);
  std::vector<double> s(profile.begin(), profile.end());
  s[i] = 0.0;
  const double rest = detail::sum(s);
  const double reward = d.reward();
  const double cbar = d.perturbation_sum();
  const auto& h = inst.benefits()[i];

  auto value = [&](double x) {
    s[i] = x;
    try {
      return payoff(inst, d, s, i);
    } catch (const SingularPool&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  const double lo = std::max(0.0, reward - rest);
  // Others' perturbed stake; the odds term only rises with s_i when it is positive.
  const double others = rest - (cbar - d.perturbation(i));
  const double g_half = expand_upper([&](double g) { return h.slope(g) <= 0.5; }, 0.0, 1.0);
  double hi = std::max({lo, g_half + reward - rest, cbar - rest + 2.0 * std::sqrt(reward * std::max(0.0, others))});
  hi += 1.0 + reward;

  constexpr int kGrid = 4000;
  const double step = (hi - lo) / kGrid;
  int best_j = 0;
  double best_v = value(lo);
  for (int j = 1; j <= kGrid; ++j) {
    const double v = value(lo + j * step);
    if (v > best_v) {
      best_v = v;
      best_j = j;
    }
  }
  const double a = lo + std::max(0, best_j - 1) * step;
  const double b = lo + std::min(kGrid, best_j + 1) * step;
  double best_x = golden_section_max(value, a, b, 1e-9);
  best_v = value(best_x);
  for (double x : {lo + best_j * step, lo, hi}) {
    const double v = value(x);
    if (v > best_v) {
      best_v = v;
      best_x = x;
    }
  }
  if (lo > 0.0 && 0.0 > best_v) best_x = 0.0;
  return best_x;
}

struct Sensitivities {
  double d_reward = 0.0;
  std::vector<double> d_perturbation;
};

// Implicit-function derivatives of the equilibrium public good when every
// player is active:
//   D     = S^2 sum_i h_i''(G) - R (N - 1)
//   dG/dR = -(G - c_bar)(N - 1) / D,   dG/dc_i = -R (N - 1) / D.
inline Sensitivities equilibrium_sensitivities(const LotteryInstance& inst, const DesignPoint& d,
                                               const EquilibriumResult& eq) {
  detail::require_dimensions(inst, d);
  if (!eq.all_active()) {
    throw UnsupportedRegime("closed-form sensitivities need every player active (" +
                            std::to_string(eq.active_set.size()) + " of " + std::to_string(inst.players()) + ")");
  }
  const double n = static_cast<double>(inst.players());
  const double g = eq.public_good;
  const double reward = d.reward();
  const double cbar = d.perturbation_sum();
  const double pool = reward + g - cbar;
  const double denom = pool * pool * inst.benefits().aggregate_curvature(g) - reward * (n - 1.0);
  Sensitivities out;
  out.d_reward = -(g - cbar) * (n - 1.0) / denom;
  out.d_perturbation.assign(inst.players(), -reward * (n - 1.0) / denom);
  return out;
}

}  // namespace lottery
