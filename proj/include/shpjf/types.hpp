#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "shpjf/tensor.hpp"

namespace shpjf {

using TokenId = std::int64_t;
using UserId = std::int64_t;
using JobId = std::int64_t;
using Timestamp = std::int64_t;  // seconds since the start of the log

inline constexpr Timestamp kSecondsPerDay = 86400;

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

/// Per-forward switches. Dropout only applies when training is set and an
/// RNG is supplied.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  bool dropout_active() const { return training && dropout > 0.0 && rng != nullptr; }
};

/// N(0, stddev) initialized trainable tensor.
Tensor init_normal(Shape shape, double stddev, std::mt19937_64& rng);

}  // namespace shpjf
