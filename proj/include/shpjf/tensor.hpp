#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace shpjf {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient is deposited
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

/// Dense row-major float64 tensor with an optional gradient slot.
///
/// Copies are shallow (handles share storage); use clone() for a deep copy.
/// Vectors that flow through the model are kept as 1 x d rows so that the
/// same ops serve single pairs and batches.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor identity(std::size_t n);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->values.size(); }
  // 2-D accessors; a rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return impl_->values; }
  std::span<double> mutable_values() { return impl_->values; }
  double item() const;
  double at(std::size_t i) const { return impl_->values[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return impl_->grad.size() == impl_->values.size() && !impl_->values.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.assign(impl_->values.size(), 0.0); }
  void clear_grad() { impl_->grad.clear(); }

  Tensor clone() const;
  // Same storage, gradient tracking off.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad);
};

Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad);

/// Records differentiable operations in execution order.
///
/// Operations record onto the tape that is active on the calling thread (see
/// Tape::Scope) whenever at least one input requires a gradient. backward()
/// replays the records in exact reverse order, accumulating into input grads.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
    std::uint64_t sequence = 0;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// RAII activation on the current thread; restores the previous tape.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

  void record(std::vector<std::shared_ptr<TensorImpl>> inputs, std::shared_ptr<TensorImpl> output,
              BackwardFn fn);

  /// Seeds d(output)/d(output) = 1 and propagates. Throws ContractError when
  /// output is not a single-element tensor.
  void backward(const Tensor& output);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  // Sequence numbers of nodes in the order the last backward visited them.
  const std::vector<std::uint64_t>& last_visit_order() const { return visit_order_; }
  void clear();

 private:
  std::vector<Node> nodes_;
  std::vector<std::uint64_t> visit_order_;
  std::uint64_t next_sequence_ = 0;
};

/// Free-function form used by the model code: backward(loss, tape).
void backward(const Tensor& output, Tape& tape);

/// Thread-local work counter. Every op adds its multiply-add (or element)
/// count, which makes algorithmic cost observable in tests.
std::uint64_t op_count();
void reset_op_count();
void add_op_count(std::uint64_t n);

/// Deterministic scalar function of the parameters for gradient checking.
using ScalarFn = std::function<Tensor()>;

/// Max over all parameter entries of
///   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
/// with central differences of the given step. Throws ContractError when f
/// is not deterministic (e.g. dropout is active).
double grad_check(const ScalarFn& f, std::span<Tensor> params, double step = 1e-6);

/// Variant used by tests to validate grad_check itself: analytic gradients
/// are multiplied by `analytic_scale` before comparison.
double grad_check_scaled(const ScalarFn& f, std::span<Tensor> params, double step,
                         double analytic_scale);

}  // namespace shpjf
