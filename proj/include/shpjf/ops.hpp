#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "shpjf/tensor.hpp"

namespace shpjf::ops {

// Linear algebra. All operands are rank 2 unless noted.
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a[n x d] + bias[d] (or [1 x d]) added to every row.
Tensor add_row_vector(const Tensor& a, const Tensor& bias);
// x * w + b, the common dense layer.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// tanh approximation
Tensor gelu(const Tensor& x);

/// Numerically stable softmax along `axis` (max subtraction). Rank 1 accepts
/// axis 0; rank 2 accepts 0 (columns) or 1 (rows).
Tensor softmax(const Tensor& x, int axis);

/// Row-wise layer normalization with learned gain and shift of width d.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps = 1e-5);

/// Embedding lookup: out row i = table row ids[i]. Backward scatter-adds.
Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids);

/// Mean of contiguous row segments: x[N x d], offsets of size S+1 -> [S x d].
Tensor segment_mean(const Tensor& x, std::span<const std::size_t> offsets);

Tensor sum(const Tensor& x);
// Per-row sums: [n x d] -> [n x 1].
Tensor row_sum(const Tensor& x);
Tensor mean_rows(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
// Repeats a single row n times.
Tensor repeat_rows(const Tensor& row, std::size_t n);

/// Inverted dropout: kept entries are scaled by 1/(1-p). p == 0 is identity.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

/// Scaled dot-product self-attention run independently on each contiguous
/// row segment of q/k/v ([N x d] each), split into `heads` column groups.
/// When `weights` is non-null it receives every attention probability, laid
/// out per segment, per head, row-major [len x len].
Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         std::span<const std::size_t> offsets, std::size_t heads,
                         std::vector<double>* weights = nullptr);

/// Summed binary cross entropy. Probabilities are clamped to
/// [1e-7, 1 - 1e-7] before the logs; the gradient is evaluated at the clamped
/// value. Labels must be exactly 0 or 1.
Tensor bce_loss(const Tensor& y_hat, const Tensor& y);

inline constexpr double kProbabilityClamp = 1e-7;

}  // namespace shpjf::ops
