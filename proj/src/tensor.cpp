#include "shpjf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "shpjf/errors.hpp"

namespace shpjf {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local std::uint64_t g_op_count = 0;

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  const auto n = shape_numel(shape);
  return make_result(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  return make_result(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::identity(std::size_t n) {
  auto t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.mutable_values()[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() == 1) return 1;
  if (rank() != 2) throw DimensionError("expected rank <= 2, got " + shape_to_string(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() == 1) return impl_->shape[0];
  if (rank() != 2) throw DimensionError("expected rank <= 2, got " + shape_to_string(shape()));
  return impl_->shape[1];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->values[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

Tensor Tensor::clone() const {
  auto t = make_result(impl_->shape, impl_->values, impl_->requires_grad);
  t.impl_->grad = impl_->grad;
  return t;
}

Tensor Tensor::detach() const { return make_result(impl_->shape, impl_->values, false); }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::vector<std::shared_ptr<TensorImpl>> inputs, std::shared_ptr<TensorImpl> output,
                  BackwardFn fn) {
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(fn), next_sequence_++});
}

void Tape::backward(const Tensor& output) {
  if (!output.defined() || output.size() != 1) {
    throw ContractError("backward requires a scalar output, got " +
                        (output.defined() ? shape_to_string(output.shape()) : std::string("undefined")));
  }
  auto* out = output.impl();
  out->ensure_grad();
  out->grad[0] += 1.0;
  visit_order_.clear();
  visit_order_.reserve(nodes_.size());
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    visit_order_.push_back(it->sequence);
    if (it->output->grad.empty()) continue;  // not reachable from output
    it->backward();
  }
}

void Tape::clear() {
  nodes_.clear();
  visit_order_.clear();
}

void backward(const Tensor& output, Tape& tape) { tape.backward(output); }

std::uint64_t op_count() { return g_op_count; }
void reset_op_count() { g_op_count = 0; }
void add_op_count(std::uint64_t n) { g_op_count += n; }

namespace {

double evaluate(const ScalarFn& f) {
  auto out = f();
  if (out.size() != 1) throw ContractError("grad_check needs a scalar-valued function");
  return out.item();
}

}  // namespace

double grad_check_scaled(const ScalarFn& f, std::span<Tensor> params, double step, double analytic_scale) {
  if (step <= 0.0) throw ContractError("grad_check step must be positive");
  for (auto& p : params) p.zero_grad();
  {
    Tape tape;
    Tape::Scope scope(tape);
    auto out = f();
    tape.backward(out);
  }
  // Determinism probe: two tape-free evaluations must agree bit for bit.
  const double base = evaluate(f);
  if (evaluate(f) != base) {
    throw ContractError("grad_check requires a deterministic function (is dropout active?)");
  }

  double worst = 0.0;
  for (auto& p : params) {
    auto values = p.mutable_values();
    const auto grad = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = evaluate(f);
      values[i] = saved - step;
      const double minus = evaluate(f);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double analytic = grad[i] * analytic_scale;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

double grad_check(const ScalarFn& f, std::span<Tensor> params, double step) {
  return grad_check_scaled(f, params, step, 1.0);
}

}  // namespace shpjf
