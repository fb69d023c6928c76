#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "deixis/rng.hpp"
#include "deixis/tensor.hpp"

namespace deixis::test {

// Central-difference gradient check. Runs the forward closure, backpropagates,
// then compares every parameter's analytic gradient against
// (f(p+h) - f(p-h)) / 2h. Returns the worst symmetric relative error
// |a - n| / max(1, |a|, |n|).
inline double max_grad_error(std::vector<Tensor> params,
                             const std::function<Tensor()>& forward,
                             double step = 1e-6) {
  for (Tensor& p : params) p.zero_grad();
  Tensor loss = forward();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double up = forward().item();
      values[i] = original - step;
      const double down = forward().item();
      values[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[pi][i];
      const double err = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true,
                            double scale = 1.0) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  std::vector<double> values(n);
  for (double& v : values) v = rng.uniform(-scale, scale);
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

}  // namespace deixis::test
