#pragma once

// Test-only reference implementations, kept independent of the library code
// paths they check.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "fairscope/types.hpp"

namespace oracle {

// Direct O((HW)^2) 2D DFT evaluated from the definition.
inline fairscope::CMatX dft2(const fairscope::MatX& x) {
  using namespace fairscope;
  const Index h = x.rows(), w = x.cols();
  CMatX out(h, w);
  for (Index u = 0; u < h; ++u)
    for (Index v = 0; v < w; ++v) {
      std::complex<double> acc = 0.0;
      for (Index r = 0; r < h; ++r)
        for (Index c = 0; c < w; ++c) {
          const double ang =
              -2.0 * std::numbers::pi *
              (static_cast<double>(u * r) / static_cast<double>(h) +
               static_cast<double>(v * c) / static_cast<double>(w));
          acc += x(r, c) * std::complex<double>(std::cos(ang), std::sin(ang));
        }
      out(u, v) = acc;
    }
  return out;
}

// All-pairs AUC with half weight for ties.
inline double auc_bruteforce(const std::vector<double>& scores,
                             const std::vector<int>& labels) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Central finite difference of a scalar function of one coordinate.
template <typename F>
double central_diff(F f, double x0, double step = 1e-5) {
  return (f(x0 + step) - f(x0 - step)) / (2.0 * step);
}

}  // namespace oracle
