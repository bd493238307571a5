#pragma once

#include <vector>

#include "pmoe/matrix.hpp"

namespace pmoe::hide {

struct ClMetrics {
  double fa = 0.0;  // final average accuracy A_T
  double ca = 0.0;  // mean of A_1..A_T
  double fm = 0.0;  // average forgetting; 0 when T = 1
  std::vector<double> a;  // A_t
};

/// S is T × T with S(i, t) the accuracy on task i after training task t.
/// Entries with i > t are ignored; entries with i ≤ t must be finite.
ClMetrics cl_metrics(const Matrix& s);

}  // namespace pmoe::hide
