#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>

#include "lottery/errors.hpp"

namespace lottery {

// A nonnegative real that may also be +infinity. Infinity is an explicit
// state, never a large float.
class ExtendedReal {
 public:
  constexpr ExtendedReal() = default;
  constexpr explicit ExtendedReal(double v) : value_(v) {}

  static constexpr ExtendedReal infinity() {
    ExtendedReal r;
    r.infinite_ = true;
    return r;
  }

  constexpr bool is_infinite() const noexcept { return infinite_; }
  constexpr bool is_finite() const noexcept { return !infinite_; }

  // Finite value; throws on infinity.
  double value() const {
    if (infinite_) throw DomainError("ExtendedReal: value() of +inf");
    return value_;
  }

  double value_or(double fallback) const noexcept { return infinite_ ? fallback : value_; }

  // IEEE view, for arithmetic that handles inf naturally.
  double as_double() const noexcept {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }

  std::string to_string() const {
    if (infinite_) return "+inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value_);
    return buf;
  }

  friend bool operator==(const ExtendedReal& a, const ExtendedReal& b) {
    return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
  }

  friend std::ostream& operator<<(std::ostream& os, const ExtendedReal& x) {
    return os << x.to_string();
  }

 private:
  double value_ = 0.0;
  bool infinite_ = false;
};

struct RootResult {
  double x = 0.0;
  double fx = 0.0;
  int iterations = 0;
};

// Bisection on [lo, hi] where f(lo) and f(hi) have opposite signs (either may
// be zero). Runs until |f| <= ftol or the bracket collapses to adjacent
// doubles; returns whichever evaluated point had the smallest |f|.
template <class F>
RootResult bisect(F&& f, double lo, double hi, double ftol = 0.0, int max_iter = 400) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return {lo, flo, 0};
  if (fhi == 0.0) return {hi, fhi, 0};
  if ((flo > 0.0) == (fhi > 0.0)) {
    throw NumericError("bisect: bracket does not straddle a root");
  }
  RootResult best = std::abs(flo) <= std::abs(fhi) ? RootResult{lo, flo, 0} : RootResult{hi, fhi, 0};
  int it = 0;
  for (; it < max_iter; ++it) {
    const double mid = lo + 0.5 * (hi - lo);
    if (!(mid > lo && mid < hi)) break;
    const double fm = f(mid);
    if (std::abs(fm) < std::abs(best.fx)) best = {mid, fm, it + 1};
    if (fm == 0.0 || std::abs(fm) <= ftol) break;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  best.iterations = it;
  return best;
}

// Doubles the distance from `lo` until `stop(hi)` holds. Returns the first hi
// satisfying the predicate.
template <class Pred>
double expand_upper(Pred&& stop, double lo, double initial_width, int max_doublings = 2000) {
  double width = initial_width > 0.0 ? initial_width : 1.0;
  for (int k = 0; k < max_doublings; ++k) {
    const double hi = lo + width;
    if (stop(hi)) return hi;
    width *= 2.0;
    if (!std::isfinite(lo + width)) break;
  }
  throw NonConvergence("expand_upper: no bracket found");
}

// Golden-section maximization on [lo, hi]; assumes unimodality inside the
// interval. Stops when the bracket is narrower than xtol.
template <class F>
double golden_section_max(F&& f, double lo, double hi, double xtol = 1e-9, int max_iter = 500) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < max_iter && (b - a) > xtol; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    }
  }
  return f1 >= f2 ? x1 : x2;
}

// |a - b| <= tol * max(1, |scale|)
inline bool near(double a, double b, double tol, double scale = 1.0) {
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(scale));
}

}  // namespace lottery
