#pragma once

#include <cmath>
#include <utility>

namespace gridwall {

inline constexpr double kDefaultK = 32.0;
inline constexpr double kInitialRating = 1000.0;

/// Logistic expected score of A against B.
inline double elo_expected(double r_a, double r_b) { return 1.0 / (1.0 + std::pow(10.0, (r_b - r_a) / 400.0)); }

/// Rating deltas are snapped to a 2^-20 grid so that, for ratings on that grid,
/// every sum of ratings is exact in double precision and the update is exactly zero-sum.
inline double elo_delta(double r_a, double r_b, double score_a, double k = kDefaultK) {
  constexpr double kGrid = 1048576.0;  // 2^20
  return std::nearbyint(k * (score_a - elo_expected(r_a, r_b)) * kGrid) / kGrid;
}

inline std::pair<double, double> elo_update(double r_a, double r_b, double score_a, double k = kDefaultK) {
  const double d = elo_delta(r_a, r_b, score_a, k);
  return {r_a + d, r_b - d};
}

}  // namespace gridwall
