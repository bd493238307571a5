#include "pmoe/hide/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pmoe/error.hpp"

namespace pmoe::hide {

ClMetrics cl_metrics(const Matrix& s) {
  const std::size_t n = s.rows();
  if (n == 0 || s.cols() != n) throw ContractError("metrics: S must be a nonempty square matrix");
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i <= t; ++i)
      if (!std::isfinite(s(i, t))) {
        throw ContractError("metrics: missing S(" + std::to_string(i + 1) + ", " + std::to_string(t + 1) + ")");
      }
  ClMetrics m;
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i <= t; ++i) acc += s(i, t);
    m.a.push_back(acc / static_cast<double>(t + 1));
  }
  m.fa = m.a.back();
  for (double v : m.a) m.ca += v;
  m.ca /= static_cast<double>(n);
  if (n > 1) {
    const std::size_t last = n - 1;
    for (std::size_t i = 0; i < last; ++i) {
      double drop = -std::numeric_limits<double>::infinity();
      for (std::size_t t = i; t < last; ++t) drop = std::max(drop, s(i, t) - s(i, last));
      m.fm += drop;
    }
    m.fm /= static_cast<double>(last);
  }
  return m;
}

}  // namespace pmoe::hide
