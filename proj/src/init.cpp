#include <random>

#include "shpjf/types.hpp"

namespace shpjf {

Tensor init_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  auto t = Tensor::zeros(std::move(shape), true);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.mutable_values()) v = dist(rng);
  return t;
}

}  // namespace shpjf
