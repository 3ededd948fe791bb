#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace framing {

// Correctly rounded sum of doubles (Shewchuk's non-overlapping partials, as in
// Python's math.fsum). The result does not depend on input order and
// exact_sum(-x) == -exact_sum(x) bit for bit.
inline double exact_sum(std::span<const double> values) {
  std::vector<double> partials;
  for (double x : values) {
    std::size_t used = 0;
    for (double y : partials) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[used++] = lo;
      x = hi;
    }
    partials.resize(used);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;

  // Fold from the top, then fix the half-way rounding case.
  auto i = partials.size();
  double hi = partials[--i];
  double lo = 0.0;
  while (i > 0) {
    const double x = hi;
    const double y = partials[--i];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (i > 0 && ((lo < 0.0 && partials[i - 1] < 0.0) || (lo > 0.0 && partials[i - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    const double yr = x - hi;
    if (y == yr) hi = x;
  }
  return hi;
}

inline double exact_mean(std::span<const double> values) {
  return values.empty() ? 0.0 : exact_sum(values) / static_cast<double>(values.size());
}

// Linear-interpolated percentile (numpy's default) of an already sorted
// sample; q in [0, 100].
inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace framing
