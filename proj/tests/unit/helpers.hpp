#pragma once

#include <cmath>
#include <functional>

#include "pmoe/matrix.hpp"
#include "pmoe/tensor.hpp"

namespace testing {

// Central differences of a scalar function of one matrix.
inline pmoe::Matrix numeric_grad(const std::function<double(const pmoe::Matrix&)>& f, pmoe::Matrix x,
                                 double h = 1e-6) {
  pmoe::Matrix g(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double v = x.data()[k];
    x.data()[k] = v + h;
    const double fp = f(x);
    x.data()[k] = v - h;
    const double fm = f(x);
    x.data()[k] = v;
    g.data()[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double rel_error(const pmoe::Matrix& a, const pmoe::Matrix& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += (a.data()[k] - b.data()[k]) * (a.data()[k] - b.data()[k]);
    den += b.data()[k] * b.data()[k];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace testing
