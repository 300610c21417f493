/* Copyright 2026 The uqseg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */

#include <cmath>
#include <string>

#include "uqseg/core/ops.hpp"

namespace uqseg {

using detail::grad_of;
using Parents = std::vector<std::shared_ptr<detail::TensorImpl>>;
using detail::TensorImpl;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <class F>
std::vector<double> map_unary(const Tensor& a, F f) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return detail::make_result(a.shape(), std::move(out), "add", {a, b}, [](const TensorImpl& o, Parents& p) {
    for (std::size_t k = 0; k < 2; ++k)
      if (auto* g = grad_of(p, k))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return detail::make_result(a.shape(), std::move(out), "sub", {a, b}, [](const TensorImpl& o, Parents& p) {
    if (auto* g = grad_of(p, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i];
    if (auto* g = grad_of(p, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return detail::make_result(a.shape(), std::move(out), "mul", {a, b}, [](const TensorImpl& o, Parents& p) {
    const auto& x = p[0]->data;
    const auto& y = p[1]->data;
    if (auto* g = grad_of(p, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i] * y[i];
    if (auto* g = grad_of(p, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i] * x[i];
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] == 0.0) throw NumericError("div: division by zero at index " + std::to_string(i));
    out[i] = x[i] / y[i];
  }
  return detail::make_result(a.shape(), std::move(out), "div", {a, b}, [](const TensorImpl& o, Parents& p) {
    const auto& y = p[1]->data;
    if (auto* g = grad_of(p, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i] / y[i];
    if (auto* g = grad_of(p, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= o.grad[i] * o.data[i] / y[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return detail::make_result(a.shape(), map_unary(a, [s](double v) { return v + s; }), "add_scalar", {a},
                             [](const TensorImpl& o, Parents& p) {
                               if (auto* g = grad_of(p, 0))
                                 for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i];
                             });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return detail::make_result(a.shape(), map_unary(a, [s](double v) { return v * s; }), "mul_scalar", {a},
                             [s](const TensorImpl& o, Parents& p) {
                               if (auto* g = grad_of(p, 0))
                                 for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i] * s;
                             });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor exp(const Tensor& a) {
  return detail::make_result(a.shape(), map_unary(a, [](double v) { return std::exp(v); }), "exp", {a},
                             [](const TensorImpl& o, Parents& p) {
                               if (auto* g = grad_of(p, 0))
                                 for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i] * o.data[i];
                             });
}

Tensor log(const Tensor& a) {
  for (double v : a.data())
    if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
  return detail::make_result(a.shape(), map_unary(a, [](double v) { return std::log(v); }), "log", {a},
                             [](const TensorImpl& o, Parents& p) {
                               const auto& x = p[0]->data;
                               if (auto* g = grad_of(p, 0))
                                 for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i] / x[i];
                             });
}

Tensor sigmoid(const Tensor& a) {
  auto f = [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return detail::make_result(a.shape(), map_unary(a, f), "sigmoid", {a}, [](const TensorImpl& o, Parents& p) {
    if (auto* g = grad_of(p, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i] * o.data[i] * (1.0 - o.data[i]);
  });
}

Tensor tanh(const Tensor& a) {
  return detail::make_result(a.shape(), map_unary(a, [](double v) { return std::tanh(v); }), "tanh", {a},
                             [](const TensorImpl& o, Parents& p) {
                               if (auto* g = grad_of(p, 0))
                                 for (std::size_t i = 0; i < g->size(); ++i)
                                   (*g)[i] += o.grad[i] * (1.0 - o.data[i] * o.data[i]);
                             });
}

Tensor square(const Tensor& a) {
  return detail::make_result(a.shape(), map_unary(a, [](double v) { return v * v; }), "square", {a},
                             [](const TensorImpl& o, Parents& p) {
                               const auto& x = p[0]->data;
                               if (auto* g = grad_of(p, 0))
                                 for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += 2.0 * x[i] * o.grad[i];
                             });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return detail::make_result({1}, {s}, "sum", {a}, [](const TensorImpl& o, Parents& p) {
    if (auto* g = grad_of(p, 0))
      for (auto& v : *g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) s += v;
  return detail::make_result({1}, {s / n}, "mean", {a}, [n](const TensorImpl& o, Parents& p) {
    if (auto* g = grad_of(p, 0))
      for (auto& v : *g) v += o.grad[0] / n;
  });
}

Tensor sum_spatial(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("sum_spatial: need rank >= 2, got " + to_string(a.shape()));
  const std::size_t n = a.dim(0), c = a.dim(1), inner = a.numel() / (n * c);
  const auto x = a.data();
  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < inner; ++k) s += x[i * inner + k];
    out[i] = s;
  }
  return detail::make_result({n, c}, std::move(out), "sum_spatial", {a}, [inner](const TensorImpl& o, Parents& p) {
    if (auto* g = grad_of(p, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        for (std::size_t k = 0; k < inner; ++k) (*g)[i * inner + k] += o.grad[i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel())
    throw ShapeError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape) + " changes element count");
  return detail::make_result(std::move(shape), a.values(), "reshape", {a}, [](const TensorImpl& o, Parents& p) {
    if (auto* g = grad_of(p, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += o.grad[i];
  });
}

Tensor expand_scalar(const Tensor& a, Shape shape) {
  if (a.numel() != 1) throw ShapeError("expand_scalar: source must hold one element, got " + to_string(a.shape()));
  std::vector<double> out(numel(shape), a.data()[0]);
  return detail::make_result(std::move(shape), std::move(out), "expand_scalar", {a},
                             [](const TensorImpl& o, Parents& p) {
                               if (auto* g = grad_of(p, 0)) {
                                 double s = 0.0;
                                 for (double v : o.grad) s += v;
                                 (*g)[0] += s;
                               }
                             });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() != b.rank() || a.dim(0) != b.dim(0))
    throw ShapeError("concat_channels: incompatible " + to_string(a.shape()) + " and " + to_string(b.shape()));
  for (std::size_t d = 2; d < a.rank(); ++d)
    if (a.dim(d) != b.dim(d))
      throw ShapeError("concat_channels: spatial mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), inner = a.numel() / (n * ca);
  Shape shape = a.shape();
  shape[1] = ca + cb;
  std::vector<double> out(n * (ca + cb) * inner);
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.begin() + i * ca * inner, ca * inner, out.begin() + i * (ca + cb) * inner);
    std::copy_n(y.begin() + i * cb * inner, cb * inner, out.begin() + (i * (ca + cb) + ca) * inner);
  }
  return detail::make_result(std::move(shape), std::move(out), "concat_channels", {a, b},
                             [n, ca, cb, inner](const TensorImpl& o, Parents& p) {
                               auto* ga = grad_of(p, 0);
                               auto* gb = grad_of(p, 1);
                               for (std::size_t i = 0; i < n; ++i) {
                                 const double* src = o.grad.data() + i * (ca + cb) * inner;
                                 if (ga)
                                   for (std::size_t k = 0; k < ca * inner; ++k) (*ga)[i * ca * inner + k] += src[k];
                                 if (gb)
                                   for (std::size_t k = 0; k < cb * inner; ++k)
                                     (*gb)[i * cb * inner + k] += src[ca * inner + k];
                               }
                             });
}

Tensor channel_slice(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() < 2 || begin >= end || end > a.dim(1))
    throw ShapeError("channel_slice: bad range [" + std::to_string(begin) + "," + std::to_string(end) + ") for " +
                     to_string(a.shape()));
  const std::size_t n = a.dim(0), c = a.dim(1), inner = a.numel() / (n * c), w = end - begin;
  Shape shape = a.shape();
  shape[1] = w;
  std::vector<double> out(n * w * inner);
  const auto x = a.data();
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.begin() + (i * c + begin) * inner, w * inner, out.begin() + i * w * inner);
  return detail::make_result(std::move(shape), std::move(out), "channel_slice", {a},
                             [n, c, inner, w, begin](const TensorImpl& o, Parents& p) {
                               if (auto* g = grad_of(p, 0))
                                 for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t k = 0; k < w * inner; ++k)
                                     (*g)[(i * c + begin) * inner + k] += o.grad[i * w * inner + k];
                             });
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& rows) {
  if (table.rank() != 2) throw ShapeError("gather_rows: table must be 2-D, got " + to_string(table.shape()));
  const std::size_t m = table.dim(0), c = table.dim(1);
  if (rows.empty()) throw ShapeError("gather_rows: empty row list");
  std::vector<double> out(rows.size() * c);
  const auto t = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m)
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " + std::to_string(m));
    std::copy_n(t.begin() + rows[i] * c, c, out.begin() + i * c);
  }
  return detail::make_result({rows.size(), c}, std::move(out), "gather_rows", {table},
                             [rows, c](const TensorImpl& o, Parents& p) {
                               if (auto* g = grad_of(p, 0))
                                 for (std::size_t i = 0; i < rows.size(); ++i)
                                   for (std::size_t k = 0; k < c; ++k) (*g)[rows[i] * c + k] += o.grad[i * c + k];
                             });
}

namespace {

// Resolves the per-sample channel vector layout: returns whether v is [N,C].
bool channel_vector_layout(const Tensor& x, const Tensor& v, const char* op) {
  if (x.rank() < 2) throw ShapeError(std::string(op) + ": input must be rank >= 2, got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (v.rank() == 1 && v.dim(0) == c) return false;
  if (v.rank() == 2 && v.dim(0) == n && v.dim(1) == c) return true;
  throw ShapeError(std::string(op) + ": vector " + to_string(v.shape()) + " does not match channels of " +
                   to_string(x.shape()));
}

}  // namespace

Tensor scale_channels(const Tensor& x, const Tensor& v) {
  const bool per_sample = channel_vector_layout(x, v, "scale_channels");
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
  const auto xd = x.data(), vd = v.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double s = vd[per_sample ? i * c + ch : ch];
      const std::size_t base = (i * c + ch) * inner;
      for (std::size_t k = 0; k < inner; ++k) out[base + k] = xd[base + k] * s;
    }
  return detail::make_result(x.shape(), std::move(out), "scale_channels", {x, v},
                             [n, c, inner, per_sample](const TensorImpl& o, Parents& p) {
                               const auto& xd = p[0]->data;
                               const auto& vd = p[1]->data;
                               auto* gx = grad_of(p, 0);
                               auto* gv = grad_of(p, 1);
                               for (std::size_t i = 0; i < n; ++i)
                                 for (std::size_t ch = 0; ch < c; ++ch) {
                                   const std::size_t vi = per_sample ? i * c + ch : ch;
                                   const std::size_t base = (i * c + ch) * inner;
                                   double acc = 0.0;
                                   for (std::size_t k = 0; k < inner; ++k) {
                                     if (gx) (*gx)[base + k] += o.grad[base + k] * vd[vi];
                                     acc += o.grad[base + k] * xd[base + k];
                                   }
                                   if (gv) (*gv)[vi] += acc;
                                 }
                             });
}

Tensor add_channels(const Tensor& x, const Tensor& v) {
  const bool per_sample = channel_vector_layout(x, v, "add_channels");
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
  const auto xd = x.data(), vd = v.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double s = vd[per_sample ? i * c + ch : ch];
      const std::size_t base = (i * c + ch) * inner;
      for (std::size_t k = 0; k < inner; ++k) out[base + k] = xd[base + k] + s;
    }
  return detail::make_result(x.shape(), std::move(out), "add_channels", {x, v},
                             [n, c, inner, per_sample](const TensorImpl& o, Parents& p) {
                               auto* gx = grad_of(p, 0);
                               auto* gv = grad_of(p, 1);
                               for (std::size_t i = 0; i < n; ++i)
                                 for (std::size_t ch = 0; ch < c; ++ch) {
                                   const std::size_t base = (i * c + ch) * inner;
                                   double acc = 0.0;
                                   for (std::size_t k = 0; k < inner; ++k) {
                                     if (gx) (*gx)[base + k] += o.grad[base + k];
                                     acc += o.grad[base + k];
                                   }
                                   if (gv) (*gv)[per_sample ? i * c + ch : ch] += acc;
                                 }
                             });
}

}  // namespace uqseg
