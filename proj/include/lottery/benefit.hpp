#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lottery/errors.hpp"
#include "lottery/numeric.hpp"

namespace lottery {

enum class BenefitFamily { scaled_log };

inline const char* to_string(BenefitFamily f) {
  switch (f) {
    case BenefitFamily::scaled_log:
      return "scaled_log";
  }
  return "unknown";
}

// Marginal benefit a player draws from the public good v >= 0.
//
// Only the scaled-log family a * ln(v + 1) is implemented. Every member must
// satisfy h(0) = 0, h' > 0, h'' < 0 and h'(v) -> 0; new families are added by
// extending the switch statements below.
class BenefitFunction {
 public:
  static BenefitFunction scaled_log(double coefficient) {
    if (!(coefficient > 0.0) || !std::isfinite(coefficient)) {
      throw DomainError("scaled_log benefit needs a positive finite coefficient, got " +
                        std::to_string(coefficient));
    }
    BenefitFunction f(BenefitFamily::scaled_log, coefficient);
    f.check_shape();
    return f;
  }

  BenefitFamily family() const noexcept { return family_; }
  double coefficient() const noexcept { return coefficient_; }

  double value(double v) const {
    require_domain(v);
    return coefficient_ * std::log1p(v);
  }

  double slope(double v) const {
    require_domain(v);
    return coefficient_ / (1.0 + v);
  }

  double curvature(double v) const {
    require_domain(v);
    return -coefficient_ / ((1.0 + v) * (1.0 + v));
  }

  std::pair<double, double> value_and_slope(double v) const { return {value(v), slope(v)}; }

  friend bool operator==(const BenefitFunction&, const BenefitFunction&) = default;

 private:
  BenefitFunction(BenefitFamily family, double coefficient)
      : family_(family), coefficient_(coefficient) {}

  static void require_domain(double v) {
    if (!(v >= 0.0)) throw DomainError("benefit evaluated at negative public good " + std::to_string(v));
  }

  void check_shape() const {
    static constexpr double kSamples[] = {0.0, 0.25, 1.0, 3.0, 10.0, 100.0, 1e4, 1e8};
    if (value(0.0) != 0.0) throw InvariantViolation("benefit must vanish at zero");
    double prev_value = -1.0;
    double prev_slope = std::numeric_limits<double>::infinity();
    for (double v : kSamples) {
      const double h = value(v);
      const double d = slope(v);
      if (!(h > prev_value) || !(d > 0.0) || !(d < prev_slope) || !(curvature(v) < 0.0)) {
        throw InvariantViolation("benefit is not increasing and strictly concave at v = " +
                                 std::to_string(v));
      }
      prev_value = h;
      prev_slope = d;
    }
    if (slope(1e12) > 1e-6 * slope(0.0)) throw InvariantViolation("benefit slope does not vanish");
  }

  BenefitFamily family_;
  double coefficient_;
};

// The benefit functions of all N players. Immutable; the socially optimal
// public good G* (root of H(G) = 1) is computed once at construction.
class BenefitProfile {
 public:
  explicit BenefitProfile(std::vector<BenefitFunction> functions) : functions_(std::move(functions)) {
    if (functions_.empty()) throw ValidationError("benefit profile needs at least one player");
    coefficient_sum_ = 0.0;
    for (const auto& f : functions_) coefficient_sum_ += f.coefficient();
    if (!(aggregate_marginal(0.0) > 1.0)) {
      throw ValidationError("benefit profile violates H(0) > 1 (H(0) = " +
                            std::to_string(aggregate_marginal(0.0)) + ")");
    }
    social_good_ = solve_social_good();
  }

  static BenefitProfile scaled_log(std::span<const double> coefficients) {
    std::vector<BenefitFunction> fs;
    fs.reserve(coefficients.size());
    for (double a : coefficients) fs.push_back(BenefitFunction::scaled_log(a));
    return BenefitProfile(std::move(fs));
  }

  static BenefitProfile scaled_log(std::initializer_list<double> coefficients) {
    return scaled_log(std::span<const double>(coefficients.begin(), coefficients.size()));
  }

  std::size_t size() const noexcept { return functions_.size(); }
  const BenefitFunction& operator[](std::size_t i) const { return functions_.at(i); }
  const std::vector<BenefitFunction>& functions() const noexcept { return functions_; }
  double coefficient_sum() const noexcept { return coefficient_sum_; }

  // sum_i h_i(G)
  double total_value(double g) const {
    double s = 0.0;
    for (const auto& f : functions_) s += f.value(g);
    return s;
  }

  // H(G) = sum_i h_i'(G)
  double aggregate_marginal(double g) const {
    double s = 0.0;
    for (const auto& f : functions_) s += f.slope(g);
    return s;
  }

  double aggregate_curvature(double g) const {
    double s = 0.0;
    for (const auto& f : functions_) s += f.curvature(g);
    return s;
  }

  // Aggregate payoff of a profile that produces public good G.
  double aggregate_payoff(double g) const { return total_value(g) - g; }

  double socially_optimal_good() const noexcept { return social_good_; }

  double socially_optimal_payoff() const { return aggregate_payoff(social_good_); }

  // H^-1(y). H maps [0, inf) onto (0, H(0)]; y <= 0 lies beyond the reach of
  // H and yields +inf.
  ExtendedReal invert_aggregate(double y) const {
    if (std::isnan(y)) throw DomainError("invert_aggregate of NaN");
    if (y <= 0.0) return ExtendedReal::infinity();
    const double h0 = aggregate_marginal(0.0);
    if (y > h0) {
      throw OutOfCodomain("H^-1 argument " + std::to_string(y) + " exceeds H(0) = " + std::to_string(h0));
    }
    if (y == h0) return ExtendedReal(0.0);
    auto f = [&](double g) { return aggregate_marginal(g) - y; };
    const double hi = expand_upper([&](double g) { return f(g) < 0.0; }, 0.0, 1.0);
    return ExtendedReal(bisect(f, 0.0, hi).x);
  }

 private:
  double solve_social_good() const {
    auto f = [&](double g) { return aggregate_marginal(g) - 1.0; };
    const double hi = expand_upper([&](double g) { return f(g) < 0.0; }, 0.0, 1.0);
    const RootResult r = bisect(f, 0.0, hi);
    if (!(std::abs(r.fx) <= 1e-10)) {
      throw NonConvergence("G* root-finding stalled at |H(G)-1| = " + std::to_string(std::abs(r.fx)));
    }
    return r.x;
  }

  std::vector<BenefitFunction> functions_;
  double coefficient_sum_ = 0.0;
  double social_good_ = 0.0;
};

}  // namespace lottery
