#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shpjf/tensor.hpp"

namespace shpjf {

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(std::span<const Tensor> params, double lr);
};

/// One Adam update with bias correction. Every parameter must carry a
/// gradient (ContractError otherwise); moments are created on first use.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace shpjf
