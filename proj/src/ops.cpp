#include "shpjf/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "shpjf/errors.hpp"

namespace shpjf::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cview(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MutMap view(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

bool recording(std::span<const Tensor> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

void record(std::vector<std::shared_ptr<TensorImpl>> inputs, const Tensor& out, Tape::BackwardFn fn) {
  Tape::active()->record(std::move(inputs), out.handle(), std::move(fn));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " + shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

// Accumulate `g` into input's gradient if it takes part in differentiation.
template <typename F>
void accumulate(TensorImpl* input, F&& body) {
  if (!input->requires_grad) return;
  input->ensure_grad();
  body(input->grad);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const auto m = a.rows(), n = a.cols(), p = b.cols();
  if (b.rows() != n) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(m * p);
  view(out, m, p).noalias() = cview(a.impl()->values, m, n) * cview(b.impl()->values, n, p);
  add_op_count(m * n * p);
  const bool rec = recording({&a, &b});
  auto result = make_result({m, p}, std::move(out), rec);
  if (rec) {
    auto* ai = a.impl();
    auto* bi = b.impl();
    auto* oi = result.impl();
    record({a.handle(), b.handle()}, result, [ai, bi, oi, m, n, p] {
      auto dout = cview(oi->grad, m, p);
      accumulate(ai, [&](auto& g) { view(g, m, n).noalias() += dout * cview(bi->values, n, p).transpose(); });
      accumulate(bi, [&](auto& g) { view(g, n, p).noalias() += cview(ai->values, m, n).transpose() * dout; });
    });
  }
  return result;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const auto m = a.rows(), n = a.cols(), p = b.rows();
  if (b.cols() != n) {
    throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * p);
  view(out, m, p).noalias() = cview(a.impl()->values, m, n) * cview(b.impl()->values, p, n).transpose();
  add_op_count(m * n * p);
  const bool rec = recording({&a, &b});
  auto result = make_result({m, p}, std::move(out), rec);
  if (rec) {
    auto* ai = a.impl();
    auto* bi = b.impl();
    auto* oi = result.impl();
    record({a.handle(), b.handle()}, result, [ai, bi, oi, m, n, p] {
      auto dout = cview(oi->grad, m, p);
      accumulate(ai, [&](auto& g) { view(g, m, n).noalias() += dout * cview(bi->values, p, n); });
      accumulate(bi, [&](auto& g) { view(g, p, n).noalias() += dout.transpose() * cview(ai->values, m, n); });
    });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const auto r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  view(out, c, r) = cview(a.impl()->values, r, c).transpose();
  add_op_count(r * c);
  const bool rec = recording({&a});
  auto result = make_result({c, r}, std::move(out), rec);
  if (rec) {
    auto* ai = a.impl();
    auto* oi = result.impl();
    record({a.handle()}, result, [ai, oi, r, c] {
      accumulate(ai, [&](auto& g) { view(g, r, c) += cview(oi->grad, c, r).transpose(); });
    });
  }
  return result;
}

namespace {

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, BwdA da, BwdB db) {
  require_same_shape(a, b, name);
  const auto n = a.size();
  std::vector<double> out(n);
  const auto& av = a.impl()->values;
  const auto& bv = b.impl()->values;
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
  add_op_count(n);
  const bool rec = recording({&a, &b});
  auto result = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    auto* ai = a.impl();
    auto* bi = b.impl();
    auto* oi = result.impl();
    record({a.handle(), b.handle()}, result, [ai, bi, oi, n, da, db] {
      accumulate(ai, [&](auto& g) {
        for (std::size_t i = 0; i < n; ++i) g[i] += da(ai->values[i], bi->values[i]) * oi->grad[i];
      });
      accumulate(bi, [&](auto& g) {
        for (std::size_t i = 0; i < n; ++i) g[i] += db(ai->values[i], bi->values[i]) * oi->grad[i];
      });
    });
  }
  return result;
}

template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Bwd dfdx) {
  const auto n = x.size();
  std::vector<double> out(n);
  const auto& xv = x.impl()->values;
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
  add_op_count(n);
  const bool rec = recording({&x});
  auto result = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    auto* xi = x.impl();
    auto* oi = result.impl();
    record({x.handle()}, result, [xi, oi, n, dfdx] {
      accumulate(xi, [&](auto& g) {
        for (std::size_t i = 0; i < n; ++i) g[i] += dfdx(xi->values[i], oi->values[i]) * oi->grad[i];
      });
    });
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_elementwise(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  return unary_elementwise(
      x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v))); },
      [](double v, double) {
        const double u = c * (v + a * v * v * v);
        const double t = std::tanh(u);
        const double du = c * (1.0 + 3.0 * a * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
}

Tensor add_row_vector(const Tensor& a, const Tensor& bias) {
  require_rank2(a, "add_row_vector");
  const auto r = a.rows(), c = a.cols();
  if (bias.size() != c || (bias.rank() == 2 && bias.rows() != 1)) {
    throw DimensionError("add_row_vector: bias " + shape_to_string(bias.shape()) + " does not fit " +
                         shape_to_string(a.shape()));
  }
  std::vector<double> out(a.impl()->values);
  const auto& bv = bias.impl()->values;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  add_op_count(r * c);
  const bool rec = recording({&a, &bias});
  auto result = make_result(a.shape(), std::move(out), rec);
  if (rec) {
    auto* ai = a.impl();
    auto* bi = bias.impl();
    auto* oi = result.impl();
    record({a.handle(), bias.handle()}, result, [ai, bi, oi, r, c] {
      accumulate(ai, [&](auto& g) {
        for (std::size_t i = 0; i < r * c; ++i) g[i] += oi->grad[i];
      });
      accumulate(bi, [&](auto& g) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) g[j] += oi->grad[i * c + j];
      });
    });
  }
  return result;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row_vector(matmul(x, w), b); }

Tensor softmax(const Tensor& x, int axis) {
  const bool rank1 = x.rank() == 1;
  if (!(rank1 && axis == 0) && !(x.rank() == 2 && (axis == 0 || axis == 1))) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_to_string(x.shape()));
  }
  const auto r = x.rows(), c = x.cols();
  // Normalize along rows (stride 1) or columns (stride c).
  const bool along_rows = rank1 || axis == 1;
  const std::size_t slices = along_rows ? r : c;
  const std::size_t len = along_rows ? c : r;
  auto index = [=](std::size_t s, std::size_t i) { return along_rows ? s * c + i : i * c + s; };

  const auto& xv = x.impl()->values;
  std::vector<double> out(xv.size());
  for (std::size_t s = 0; s < slices; ++s) {
    double mx = xv[index(s, 0)];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, xv[index(s, i)]);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(xv[index(s, i)] - mx);
      out[index(s, i)] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[index(s, i)] /= total;
  }
  add_op_count(3 * xv.size());
  const bool rec = recording({&x});
  auto result = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    auto* xi = x.impl();
    auto* oi = result.impl();
    record({x.handle()}, result, [xi, oi, slices, len, index] {
      accumulate(xi, [&](auto& g) {
        for (std::size_t s = 0; s < slices; ++s) {
          double dot = 0.0;
          for (std::size_t i = 0; i < len; ++i) dot += oi->grad[index(s, i)] * oi->values[index(s, i)];
          for (std::size_t i = 0; i < len; ++i) {
            const auto k = index(s, i);
            g[k] += oi->values[k] * (oi->grad[k] - dot);
          }
        }
      });
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  require_rank2(x, "layer_norm");
  const auto r = x.rows(), c = x.cols();
  if (gain.size() != c || shift.size() != c) {
    throw DimensionError("layer_norm: gain/shift width must be " + std::to_string(c));
  }
  const auto& xv = x.impl()->values;
  const auto& gv = gain.impl()->values;
  const auto& sv = shift.impl()->values;
  std::vector<double> out(r * c);
  std::vector<double> normalized(r * c);
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xv[i * c + j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = xv[i * c + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      const double nx = (xv[i * c + j] - mean) * inv_std[i];
      normalized[i * c + j] = nx;
      out[i * c + j] = gv[j] * nx + sv[j];
    }
  }
  add_op_count(5 * r * c);
  const bool rec = recording({&x, &gain, &shift});
  auto result = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    auto* xi = x.impl();
    auto* gi = gain.impl();
    auto* si = shift.impl();
    auto* oi = result.impl();
    record({x.handle(), gain.handle(), shift.handle()}, result,
           [xi, gi, si, oi, r, c, normalized = std::move(normalized), inv_std = std::move(inv_std)] {
             const auto& dy = oi->grad;
             accumulate(gi, [&](auto& g) {
               for (std::size_t i = 0; i < r; ++i)
                 for (std::size_t j = 0; j < c; ++j) g[j] += dy[i * c + j] * normalized[i * c + j];
             });
             accumulate(si, [&](auto& g) {
               for (std::size_t i = 0; i < r; ++i)
                 for (std::size_t j = 0; j < c; ++j) g[j] += dy[i * c + j];
             });
             accumulate(xi, [&](auto& g) {
               const double inv_c = 1.0 / static_cast<double>(c);
               for (std::size_t i = 0; i < r; ++i) {
                 double mean_d = 0.0, mean_dn = 0.0;
                 for (std::size_t j = 0; j < c; ++j) {
                   const double d = dy[i * c + j] * gi->values[j];
                   mean_d += d;
                   mean_dn += d * normalized[i * c + j];
                 }
                 mean_d *= inv_c;
                 mean_dn *= inv_c;
                 for (std::size_t j = 0; j < c; ++j) {
                   const double d = dy[i * c + j] * gi->values[j];
                   g[i * c + j] += inv_std[i] * (d - mean_d - normalized[i * c + j] * mean_dn);
                 }
               }
             });
           });
  }
  return result;
}

Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids) {
  require_rank2(table, "gather_rows");
  const auto v = table.rows(), d = table.cols();
  if (ids.empty()) throw DimensionError("gather_rows: empty id list");
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw LookupError("id " + std::to_string(id) + " out of range for table with " + std::to_string(v) +
                        " rows");
    }
  }
  const auto n = ids.size();
  std::vector<double> out(n * d);
  const auto& tv = table.impl()->values;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  add_op_count(n * d);
  const bool rec = recording({&table});
  auto result = make_result({n, d}, std::move(out), rec);
  if (rec) {
    auto* ti = table.impl();
    auto* oi = result.impl();
    std::vector<std::int64_t> idx(ids.begin(), ids.end());
    record({table.handle()}, result, [ti, oi, d, idx = std::move(idx)] {
      accumulate(ti, [&](auto& g) {
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < d; ++j) g[static_cast<std::size_t>(idx[i]) * d + j] += oi->grad[i * d + j];
      });
    });
  }
  return result;
}

Tensor segment_mean(const Tensor& x, std::span<const std::size_t> offsets) {
  require_rank2(x, "segment_mean");
  const auto d = x.cols();
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.rows()) {
    throw DimensionError("segment_mean: offsets must start at 0 and end at the row count");
  }
  const auto segments = offsets.size() - 1;
  std::vector<double> out(segments * d, 0.0);
  const auto& xv = x.impl()->values;
  for (std::size_t s = 0; s < segments; ++s) {
    const auto b = offsets[s], e = offsets[s + 1];
    if (e <= b) throw DimensionError("segment_mean: empty segment " + std::to_string(s));
    for (auto i = b; i < e; ++i)
      for (std::size_t j = 0; j < d; ++j) out[s * d + j] += xv[i * d + j];
    const double inv = 1.0 / static_cast<double>(e - b);
    for (std::size_t j = 0; j < d; ++j) out[s * d + j] *= inv;
  }
  add_op_count(x.size());
  const bool rec = recording({&x});
  auto result = make_result({segments, d}, std::move(out), rec);
  if (rec) {
    auto* xi = x.impl();
    auto* oi = result.impl();
    std::vector<std::size_t> offs(offsets.begin(), offsets.end());
    record({x.handle()}, result, [xi, oi, d, offs = std::move(offs)] {
      accumulate(xi, [&](auto& g) {
        for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
          const double inv = 1.0 / static_cast<double>(offs[s + 1] - offs[s]);
          for (auto i = offs[s]; i < offs[s + 1]; ++i)
            for (std::size_t j = 0; j < d; ++j) g[i * d + j] += oi->grad[s * d + j] * inv;
        }
      });
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  add_op_count(x.size());
  const bool rec = recording({&x});
  auto result = make_result({1}, {total}, rec);
  if (rec) {
    auto* xi = x.impl();
    auto* oi = result.impl();
    record({x.handle()}, result, [xi, oi] {
      accumulate(xi, [&](auto& g) {
        for (auto& v : g) v += oi->grad[0];
      });
    });
  }
  return result;
}

Tensor row_sum(const Tensor& x) {
  require_rank2(x, "row_sum");
  const auto r = x.rows(), c = x.cols();
  std::vector<double> out(r, 0.0);
  const auto& xv = x.impl()->values;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += xv[i * c + j];
  add_op_count(r * c);
  const bool rec = recording({&x});
  auto result = make_result({r, 1}, std::move(out), rec);
  if (rec) {
    auto* xi = x.impl();
    auto* oi = result.impl();
    record({x.handle()}, result, [xi, oi, r, c] {
      accumulate(xi, [&](auto& g) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) g[i * c + j] += oi->grad[i];
      });
    });
  }
  return result;
}

Tensor mean_rows(const Tensor& x) {
  const std::size_t offsets[] = {0, x.rows()};
  return segment_mean(x.rank() == 2 ? x : reshape(x, {1, x.size()}), offsets);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " to " + shape_to_string(shape));
  }
  const bool rec = recording({&x});
  auto result = make_result(std::move(shape), x.impl()->values, rec);
  if (rec) {
    auto* xi = x.impl();
    auto* oi = result.impl();
    record({x.handle()}, result, [xi, oi] {
      accumulate(xi, [&](auto& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      });
    });
  }
  return result;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const auto r = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_to_string(parts[0].shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto c = p.cols();
    const auto& pv = p.impl()->values;
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(i * c), c,
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + offset));
    offset += c;
  }
  add_op_count(r * total);
  const bool rec = recording(parts);
  auto result = make_result({r, total}, std::move(out), rec);
  if (rec) {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::vector<TensorImpl*> raw;
    for (const auto& p : parts) {
      inputs.push_back(p.handle());
      raw.push_back(p.impl());
    }
    auto* oi = result.impl();
    record(std::move(inputs), result, [raw, oi, r, total] {
      std::size_t offset = 0;
      for (auto* pi : raw) {
        const auto c = pi->values.size() / r;
        accumulate(pi, [&](auto& g) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += oi->grad[i * total + offset + j];
        });
        offset += c;
      }
    });
  }
  return result;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const auto c = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_to_string(parts[0].shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  add_op_count(total * c);
  const bool rec = recording(parts);
  auto result = make_result({total, c}, std::move(out), rec);
  if (rec) {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::vector<TensorImpl*> raw;
    for (const auto& p : parts) {
      inputs.push_back(p.handle());
      raw.push_back(p.impl());
    }
    auto* oi = result.impl();
    record(std::move(inputs), result, [raw, oi] {
      std::size_t offset = 0;
      for (auto* pi : raw) {
        const auto n = pi->values.size();
        accumulate(pi, [&](auto& g) {
          for (std::size_t i = 0; i < n; ++i) g[i] += oi->grad[offset + i];
        });
        offset += n;
      }
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  const auto r = x.rows(), c = x.cols();
  if (begin >= end || end > c) throw DimensionError("slice_cols: bad range for " + shape_to_string(x.shape()));
  const auto w = end - begin;
  std::vector<double> out(r * w);
  const auto& xv = x.impl()->values;
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(i * c + begin), w,
                out.begin() + static_cast<std::ptrdiff_t>(i * w));
  add_op_count(r * w);
  const bool rec = recording({&x});
  auto result = make_result({r, w}, std::move(out), rec);
  if (rec) {
    auto* xi = x.impl();
    auto* oi = result.impl();
    record({x.handle()}, result, [xi, oi, r, c, w, begin] {
      accumulate(xi, [&](auto& g) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += oi->grad[i * w + j];
      });
    });
  }
  return result;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  const auto c = x.cols();
  if (begin >= end || end > x.rows()) {
    throw DimensionError("slice_rows: bad range for " + shape_to_string(x.shape()));
  }
  const auto& xv = x.impl()->values;
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * c),
                          xv.begin() + static_cast<std::ptrdiff_t>(end * c));
  add_op_count(out.size());
  const bool rec = recording({&x});
  auto result = make_result({end - begin, c}, std::move(out), rec);
  if (rec) {
    auto* xi = x.impl();
    auto* oi = result.impl();
    record({x.handle()}, result, [xi, oi, begin, c] {
      accumulate(xi, [&](auto& g) {
        for (std::size_t i = 0; i < oi->grad.size(); ++i) g[begin * c + i] += oi->grad[i];
      });
    });
  }
  return result;
}

Tensor repeat_rows(const Tensor& row, std::size_t n) {
  if (row.rows() != 1) throw DimensionError("repeat_rows expects a single row, got " + shape_to_string(row.shape()));
  const auto d = row.cols();
  std::vector<double> out;
  out.reserve(n * d);
  for (std::size_t i = 0; i < n; ++i) out.insert(out.end(), row.values().begin(), row.values().end());
  add_op_count(n * d);
  const bool rec = recording({&row});
  auto result = make_result({n, d}, std::move(out), rec);
  if (rec) {
    auto* ri = row.impl();
    auto* oi = result.impl();
    record({row.handle()}, result, [ri, oi, n, d] {
      accumulate(ri, [&](auto& g) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) g[j] += oi->grad[i * d + j];
      });
    });
  }
  return result;
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(p));
  if (p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = keep(rng) ? keep_scale : 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
  add_op_count(x.size());
  const bool rec = recording({&x});
  auto result = make_result(x.shape(), std::move(out), rec);
  if (rec) {
    auto* xi = x.impl();
    auto* oi = result.impl();
    record({x.handle()}, result, [xi, oi, mask = std::move(mask)] {
      accumulate(xi, [&](auto& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * mask[i];
      });
    });
  }
  return result;
}

Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::span<const std::size_t> offsets,
                         std::size_t heads, std::vector<double>* weights) {
  require_rank2(q, "segment_attention");
  require_same_shape(q, k, "segment_attention");
  require_same_shape(q, v, "segment_attention");
  const auto n = q.rows(), d = q.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("segment_attention: width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != n) {
    throw DimensionError("segment_attention: offsets must start at 0 and end at the row count");
  }
  const auto dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* __restrict qv = q.impl()->values.data();
  const double* __restrict kv = k.impl()->values.data();
  const double* __restrict vv = v.impl()->values.data();
  std::vector<double> out_values(n * d, 0.0);
  double* __restrict out = out_values.data();
  std::vector<double> probs;  // per segment, per head, len x len
  std::size_t work = 0;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const auto b = offsets[s], len = offsets[s + 1] - offsets[s];
    for (std::size_t h = 0; h < heads; ++h) {
      const auto col = h * dh;
      const auto base = probs.size();
      probs.resize(base + len * len);
      double* p = probs.data() + base;
      for (std::size_t i = 0; i < len; ++i) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j < len; ++j) {
          double dot = 0.0;
          for (std::size_t t = 0; t < dh; ++t) dot += qv[(b + i) * d + col + t] * kv[(b + j) * d + col + t];
          p[i * len + j] = dot * inv_sqrt;
          mx = std::max(mx, p[i * len + j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          p[i * len + j] = std::exp(p[i * len + j] - mx);
          total += p[i * len + j];
        }
        for (std::size_t j = 0; j < len; ++j) p[i * len + j] /= total;
        for (std::size_t j = 0; j < len; ++j) {
          const double w = p[i * len + j];
          for (std::size_t t = 0; t < dh; ++t) out[(b + i) * d + col + t] += w * vv[(b + j) * d + col + t];
        }
      }
      work += 2 * len * len * dh;
    }
  }
  add_op_count(work);
  if (weights) *weights = probs;
  const bool rec = recording({&q, &k, &v});
  auto result = make_result({n, d}, std::move(out_values), rec);
  if (rec) {
    auto* qi = q.impl();
    auto* ki = k.impl();
    auto* vi = v.impl();
    auto* oi = result.impl();
    std::vector<std::size_t> offs(offsets.begin(), offsets.end());
    record({q.handle(), k.handle(), v.handle()}, result,
           [qi, ki, vi, oi, d, dh, heads, inv_sqrt, offs = std::move(offs), probs = std::move(probs)] {
             qi->ensure_grad();
             ki->ensure_grad();
             vi->ensure_grad();
             double* __restrict gq = qi->grad.data();
             double* __restrict gk = ki->grad.data();
             double* __restrict gv = vi->grad.data();
             const double* __restrict dout = oi->grad.data();
             const double* __restrict qv = qi->values.data();
             const double* __restrict kv = ki->values.data();
             const double* __restrict vv = vi->values.data();
             std::vector<double> dscore;
             std::size_t pbase = 0;
             for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
               const auto b = offs[s], len = offs[s + 1] - offs[s];
               dscore.assign(len * len, 0.0);
               for (std::size_t h = 0; h < heads; ++h) {
                 const auto col = h * dh;
                 const double* p = probs.data() + pbase;
                 pbase += len * len;
                 for (std::size_t i = 0; i < len; ++i) {
                   // dP = dO V^T, then softmax backward on row i
                   double rowdot = 0.0;
                   for (std::size_t j = 0; j < len; ++j) {
                     double dp = 0.0;
                     for (std::size_t t = 0; t < dh; ++t) dp += dout[(b + i) * d + col + t] * vv[(b + j) * d + col + t];
                     dscore[i * len + j] = dp;
                     rowdot += dp * p[i * len + j];
                   }
                   for (std::size_t j = 0; j < len; ++j) {
                     dscore[i * len + j] = p[i * len + j] * (dscore[i * len + j] - rowdot) * inv_sqrt;
                   }
                 }
                 for (std::size_t i = 0; i < len; ++i) {
                   for (std::size_t j = 0; j < len; ++j) {
                     const double w = p[i * len + j];
                     const double ds = dscore[i * len + j];
                     for (std::size_t t = 0; t < dh; ++t) {
                       gv[(b + j) * d + col + t] += w * dout[(b + i) * d + col + t];
                       gq[(b + i) * d + col + t] += ds * kv[(b + j) * d + col + t];
                       gk[(b + j) * d + col + t] += ds * qv[(b + i) * d + col + t];
                     }
                   }
                 }
               }
             }
           });
  }
  return result;
}

Tensor bce_loss(const Tensor& y_hat, const Tensor& y) {
  require_same_shape(y_hat, y, "bce_loss");
  const auto n = y.size();
  for (double label : y.values()) {
    if (label != 0.0 && label != 1.0) {
      throw ValidationError("bce_loss: label must be 0 or 1, got " + std::to_string(label));
    }
  }
  std::vector<double> clamped(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(y_hat.values()[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    clamped[i] = p;
    const double label = y.values()[i];
    total -= label * std::log(p) + (1.0 - label) * std::log(1.0 - p);
  }
  add_op_count(n);
  const bool rec = recording({&y_hat});
  auto result = make_result({1}, {total}, rec);
  if (rec) {
    auto* pi = y_hat.impl();
    auto* yi = y.impl();
    auto* oi = result.impl();
    record({y_hat.handle(), y.handle()}, result, [pi, yi, oi, clamped = std::move(clamped)] {
      accumulate(pi, [&](auto& g) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double label = yi->values[i];
          const double p = clamped[i];
          g[i] += oi->grad[0] * (-label / p + (1.0 - label) / (1.0 - p));
        }
      });
    });
  }
  return result;
}

}  // namespace shpjf::ops
