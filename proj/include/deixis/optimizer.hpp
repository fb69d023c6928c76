#pragma once

#include <cstddef>
#include <vector>

#include "deixis/tensor.hpp"

namespace deixis {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected adaptive-moment optimizer over a fixed parameter list.
// Moment buffers match parameter shapes; step_count advances by one per
// update. Parameters with no accumulated gradient are treated as grad 0.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Tensor> params, AdamConfig config = {});

  void step();
  void zero_grad();

  std::size_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::size_t step_count_ = 0;
  AdamConfig config_;
};

}  // namespace deixis
