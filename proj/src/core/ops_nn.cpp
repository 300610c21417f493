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

#include <Eigen/Core>
#include <numeric>
#include <algorithm>
#include <cmath>
#include <string>

#include "uqseg/core/ops.hpp"

namespace uqseg {

using detail::grad_of;
using detail::TensorImpl;
using Parents = std::vector<std::shared_ptr<TensorImpl>>;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t channels, height, width;  // the "image" side
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;  // the "column grid" side
  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

// Output columns ox whose input column ox*stride + j - pad lies in [0, width).
std::pair<std::size_t, std::size_t> valid_span(const ConvGeometry& g, std::size_t j) {
  const long s = static_cast<long>(g.stride), off = static_cast<long>(j) - static_cast<long>(g.pad);
  const long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  const long hi = static_cast<long>(g.width) - 1 - off < 0 ? 0 : (static_cast<long>(g.width) - 1 - off) / s + 1;
  const auto clamp = [&](long v) { return static_cast<std::size_t>(std::clamp(v, 0L, static_cast<long>(g.out_w))); };
  return {clamp(lo), std::max(clamp(lo), clamp(hi))};
}

// cols[(c*kh + i)*kw + j][oy*out_w + ox] = img[c][oy*s - p + i][ox*s - p + j] (zero outside).
void im2col(const double* img, const ConvGeometry& g, double* cols) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        const auto [lo, hi] = valid_span(g, j);
        const long off = static_cast<long>(j) - static_cast<long>(g.pad);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          double* dst = row + oy * g.out_w;
          if (y < 0 || y >= static_cast<long>(g.height)) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const double* src = img + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          std::fill(dst, dst + lo, 0.0);
          if (g.stride == 1) {
            std::copy(src + static_cast<long>(lo) + off, src + static_cast<long>(hi) + off, dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[static_cast<long>(ox * g.stride) + off];
          }
          std::fill(dst + hi, dst + g.out_w, 0.0);
        }
      }
}

// Adjoint of im2col: scatters-and-adds columns back into the image.
void col2im(const double* cols, const ConvGeometry& g, double* img) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        const auto [lo, hi] = valid_span(g, j);
        const long off = static_cast<long>(j) - static_cast<long>(g.pad);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          if (y < 0 || y >= static_cast<long>(g.height)) continue;
          double* dst = img + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[static_cast<long>(ox * g.stride) + off] += src[ox];
        }
      }
}

bool is_pointwise(const ConvGeometry& g) { return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0; }

void require_finite(const Tensor& t, const char* op, const char* what) {
  for (double v : t.data())
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in " + what);
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels))
    throw ShapeError(std::string(op) + ": bias " + to_string(bias.shape()) + " does not match " +
                     std::to_string(channels) + " output channels");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() = CMapMat(a.data().data(), m, k) * CMapMat(b.data().data(), k, n);
  return detail::make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](const TensorImpl& o, Parents& p) {
    CMapMat go(o.grad.data(), m, n);
    if (auto* g = grad_of(p, 0)) MapMat(g->data(), m, k).noalias() += go * CMapMat(p[1]->data.data(), k, n).transpose();
    if (auto* g = grad_of(p, 1)) MapMat(g->data(), k, n).noalias() += CMapMat(p[0]->data.data(), m, k).transpose() * go;
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: need 2-D tensor, got " + to_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  MapMat(out.data(), n, m) = CMapMat(a.data().data(), m, n).transpose();
  return detail::make_result({n, m}, std::move(out), "transpose", {a}, [m, n](const TensorImpl& o, Parents& p) {
    if (auto* g = grad_of(p, 0)) MapMat(g->data(), m, n) += CMapMat(o.grad.data(), n, m).transpose();
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride, std::size_t pad) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("conv2d: expected 4-D input and kernel, got " + to_string(input.shape()) + " and " +
                     to_string(kernel.shape()));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin)
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " input channels, input has " +
                     std::to_string(cin));
  if (kh > h + 2 * pad || kw > w + 2 * pad)
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " larger than padded input " +
                     to_string(input.shape()));
  check_bias(bias, cout, "conv2d");
  require_finite(input, "conv2d", "input");

  const ConvGeometry g{cin, h, w, kh, kw, stride, pad, (h + 2 * pad - kh) / stride + 1, (w + 2 * pad - kw) / stride + 1};
  const std::size_t in_plane = cin * h * w, out_plane = cout * g.cols();
  std::vector<double> out(n * out_plane);
  std::vector<double> cols(is_pointwise(g) ? 0 : g.rows() * g.cols());
  CMapMat wmat(kernel.data().data(), cout, g.rows());
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = input.data().data() + i * in_plane;
    if (!is_pointwise(g)) im2col(src, g, cols.data());
    CMapMat cmat(is_pointwise(g) ? src : cols.data(), g.rows(), g.cols());
    MapMat omat(out.data() + i * out_plane, cout, g.cols());
    omat.noalias() = wmat * cmat;
    if (bias.defined())
      for (std::size_t c = 0; c < cout; ++c) omat.row(static_cast<Eigen::Index>(c)).array() += bias.data()[c];
  }

  std::vector<Tensor> parents{input, kernel};
  if (bias.defined()) parents.push_back(bias);
  return detail::make_result(
      {n, cout, g.out_h, g.out_w}, std::move(out), "conv2d", std::move(parents),
      [g, n, cout, in_plane, out_plane](const TensorImpl& o, Parents& p) {
        auto* gin = grad_of(p, 0);
        auto* gk = grad_of(p, 1);
        auto* gb = p.size() > 2 ? grad_of(p, 2) : nullptr;
        CMapMat wmat(p[1]->data.data(), cout, g.rows());
        std::vector<double> cols(is_pointwise(g) ? 0 : g.rows() * g.cols());
        std::vector<double> gcols(gin && !is_pointwise(g) ? g.rows() * g.cols() : 0);
        for (std::size_t i = 0; i < n; ++i) {
          CMapMat go(o.grad.data() + i * out_plane, cout, g.cols());
          const double* src = p[0]->data.data() + i * in_plane;
          if (gk) {
            if (!is_pointwise(g)) im2col(src, g, cols.data());
            CMapMat cmat(is_pointwise(g) ? src : cols.data(), g.rows(), g.cols());
            MapMat(gk->data(), cout, g.rows()).noalias() += go * cmat.transpose();
          }
          if (gin) {
            if (is_pointwise(g)) {
              MapMat(gin->data() + i * in_plane, g.rows(), g.cols()).noalias() += wmat.transpose() * go;
            } else {
              MapMat(gcols.data(), g.rows(), g.cols()).noalias() = wmat.transpose() * go;
              col2im(gcols.data(), g, gin->data() + i * in_plane);
            }
          }
          // plain loop: Eigen's vectorised sum peels by address, which makes the
          // rounding depend on where the buffer happens to be allocated
          if (gb) {
            const double* row = o.grad.data() + i * out_plane;
            for (std::size_t c = 0; c < cout; ++c, row += g.cols()) (*gb)[c] += std::accumulate(row, row + g.cols(), 0.0);
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
                        std::size_t pad) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("conv_transpose2d: expected 4-D input and kernel, got " + to_string(input.shape()) + " and " +
                     to_string(kernel.shape()));
  if (stride < 1) throw ShapeError("conv_transpose2d: stride must be >= 1");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel.dim(0) != cin)
    throw ShapeError("conv_transpose2d: kernel expects " + std::to_string(kernel.dim(0)) +
                     " input channels, input has " + std::to_string(cin));
  const std::size_t cout = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if ((h - 1) * stride + kh <= 2 * pad || (w - 1) * stride + kw <= 2 * pad)
    throw ShapeError("conv_transpose2d: padding leaves an empty output");
  check_bias(bias, cout, "conv_transpose2d");
  require_finite(input, "conv_transpose2d", "input");

  const std::size_t oh = (h - 1) * stride + kh - 2 * pad, ow = (w - 1) * stride + kw - 2 * pad;
  // Geometry of the equivalent forward conv that maps [Cout,oh,ow] -> [.., h, w].
  const ConvGeometry g{cout, oh, ow, kh, kw, stride, pad, h, w};
  const std::size_t in_plane = cin * h * w, out_plane = cout * oh * ow;
  std::vector<double> out(n * out_plane, 0.0);
  std::vector<double> cols(g.rows() * g.cols());
  CMapMat wmat(kernel.data().data(), cin, g.rows());
  for (std::size_t i = 0; i < n; ++i) {
    CMapMat xmat(input.data().data() + i * in_plane, cin, g.cols());
    MapMat(cols.data(), g.rows(), g.cols()).noalias() = wmat.transpose() * xmat;
    col2im(cols.data(), g, out.data() + i * out_plane);
    if (bias.defined())
      for (std::size_t c = 0; c < cout; ++c)
        for (std::size_t k = 0; k < oh * ow; ++k) out[i * out_plane + c * oh * ow + k] += bias.data()[c];
  }

  std::vector<Tensor> parents{input, kernel};
  if (bias.defined()) parents.push_back(bias);
  return detail::make_result(
      {n, cout, oh, ow}, std::move(out), "conv_transpose2d", std::move(parents),
      [g, n, cin, cout, in_plane, out_plane](const TensorImpl& o, Parents& p) {
        auto* gin = grad_of(p, 0);
        auto* gk = grad_of(p, 1);
        auto* gb = p.size() > 2 ? grad_of(p, 2) : nullptr;
        CMapMat wmat(p[1]->data.data(), cin, g.rows());
        std::vector<double> gcols(g.rows() * g.cols());
        const std::size_t plane = g.height * g.width;
        for (std::size_t i = 0; i < n; ++i) {
          const double* go = o.grad.data() + i * out_plane;
          if (gin || gk) im2col(go, g, gcols.data());
          CMapMat gc(gcols.data(), g.rows(), g.cols());
          if (gin) MapMat(gin->data() + i * in_plane, cin, g.cols()).noalias() += wmat * gc;
          if (gk)
            MapMat(gk->data(), cin, g.rows()).noalias() +=
                CMapMat(p[0]->data.data() + i * in_plane, cin, g.cols()) * gc.transpose();
          if (gb)
            for (std::size_t c = 0; c < cout; ++c) {
              double s = 0.0;
              for (std::size_t k = 0; k < plane; ++k) s += go[c * plane + k];
              (*gb)[c] += s;
            }
        }
      });
}

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, bool training,
                 double eps, double momentum) {
  if (input.rank() < 2) throw ShapeError("batchnorm: input must be [N,C,...], got " + to_string(input.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1), inner = input.numel() / (n * c);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &stats.running_mean, &stats.running_var})
    if (!t->defined() || t->rank() != 1 || t->dim(0) != c)
      throw ShapeError("batchnorm: per-channel tensor does not match " + std::to_string(c) + " channels");
  const std::size_t m = n * inner;
  if (training && m < 2) throw ShapeError("batchnorm: train mode needs more than one value per channel");

  const auto x = input.data();
  std::vector<double> mean(c), inv(c);
  if (training) {
    auto rm = stats.running_mean.mutable_data();
    auto rv = stats.running_var.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < inner; ++k) s += x[(i * c + ch) * inner + k];
      const double mu = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < inner; ++k) {
          const double d = x[(i * c + ch) * inner + k] - mu;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(m);
      mean[ch] = mu;
      inv[ch] = 1.0 / std::sqrt(var + eps);
      rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mu;
      rv[ch] = (1.0 - momentum) * rv[ch] + momentum * var * static_cast<double>(m) / static_cast<double>(m - 1);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = stats.running_mean.data()[ch];
      inv[ch] = 1.0 / std::sqrt(stats.running_var.data()[ch] + eps);
    }
  }

  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  const auto gd = gamma.data(), bd = beta.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < inner; ++k) {
        const std::size_t idx = (i * c + ch) * inner + k;
        xhat[idx] = (x[idx] - mean[ch]) * inv[ch];
        out[idx] = gd[ch] * xhat[idx] + bd[ch];
      }

  return detail::make_result(
      input.shape(), std::move(out), "batchnorm", {input, gamma, beta},
      [n, c, inner, m, training, inv = std::move(inv), xhat = std::move(xhat)](const TensorImpl& o, Parents& p) {
        auto* gx = grad_of(p, 0);
        auto* gg = grad_of(p, 1);
        auto* gbeta = grad_of(p, 2);
        const auto& gam = p[1]->data;
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sg = 0.0, sgx = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < inner; ++k) {
              const std::size_t idx = (i * c + ch) * inner + k;
              sg += o.grad[idx];
              sgx += o.grad[idx] * xhat[idx];
            }
          if (gg) (*gg)[ch] += sgx;
          if (gbeta) (*gbeta)[ch] += sg;
          if (!gx) continue;
          const double scale = gam[ch] * inv[ch];
          const double md = static_cast<double>(m);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < inner; ++k) {
              const std::size_t idx = (i * c + ch) * inner + k;
              if (training)
                (*gx)[idx] += scale * (o.grad[idx] - sg / md - xhat[idx] * sgx / md);
              else
                (*gx)[idx] += scale * o.grad[idx];
            }
        }
      });
}

Tensor prelu(const Tensor& x, const Tensor& alpha) {
  if (x.rank() < 2) throw ShapeError("prelu: input must be [N,C,...], got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
  if (alpha.rank() != 1 || (alpha.dim(0) != c && alpha.dim(0) != 1))
    throw ShapeError("prelu: alpha " + to_string(alpha.shape()) + " not broadcastable to " + std::to_string(c) +
                     " channels");
  const bool shared = alpha.dim(0) == 1;
  const auto xd = x.data(), ad = alpha.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double a = ad[shared ? 0 : ch];
      for (std::size_t k = 0; k < inner; ++k) {
        const std::size_t idx = (i * c + ch) * inner + k;
        out[idx] = xd[idx] > 0.0 ? xd[idx] : a * xd[idx];
      }
    }
  return detail::make_result(x.shape(), std::move(out), "prelu", {x, alpha},
                             [n, c, inner, shared](const TensorImpl& o, Parents& p) {
                               const auto& xd = p[0]->data;
                               const auto& ad = p[1]->data;
                               auto* gx = grad_of(p, 0);
                               auto* ga = grad_of(p, 1);
                               for (std::size_t i = 0; i < n; ++i)
                                 for (std::size_t ch = 0; ch < c; ++ch) {
                                   const std::size_t ai = shared ? 0 : ch;
                                   double acc = 0.0;
                                   for (std::size_t k = 0; k < inner; ++k) {
                                     const std::size_t idx = (i * c + ch) * inner + k;
                                     const bool pos = xd[idx] > 0.0;
                                     if (gx) (*gx)[idx] += pos ? o.grad[idx] : ad[ai] * o.grad[idx];
                                     if (!pos) acc += o.grad[idx] * xd[idx];
                                   }
                                   if (ga) (*ga)[ai] += acc;
                                 }
                             });
}

namespace {

void channel_softmax_kernel(const double* x, double* out, std::size_t c, std::size_t inner, bool log_space) {
  for (std::size_t k = 0; k < inner; ++k) {
    double mx = x[k];
    for (std::size_t ch = 1; ch < c; ++ch) mx = std::max(mx, x[ch * inner + k]);
    double s = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) s += std::exp(x[ch * inner + k] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double lv = x[ch * inner + k] - lse;
      out[ch * inner + k] = log_space ? lv : std::exp(lv);
    }
  }
}

}  // namespace

Tensor softmax_channel(const Tensor& x) {
  if (x.rank() < 2 || x.dim(1) < 2) throw ShapeError("softmax_channel: need >= 2 channels, got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < n; ++i)
    channel_softmax_kernel(x.data().data() + i * c * inner, out.data() + i * c * inner, c, inner, false);
  return detail::make_result(x.shape(), std::move(out), "softmax_channel", {x},
                             [n, c, inner](const TensorImpl& o, Parents& p) {
                               auto* g = grad_of(p, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < n; ++i)
                                 for (std::size_t k = 0; k < inner; ++k) {
                                   const std::size_t base = i * c * inner + k;
                                   double dot = 0.0;
                                   for (std::size_t ch = 0; ch < c; ++ch)
                                     dot += o.grad[base + ch * inner] * o.data[base + ch * inner];
                                   for (std::size_t ch = 0; ch < c; ++ch) {
                                     const std::size_t idx = base + ch * inner;
                                     (*g)[idx] += o.data[idx] * (o.grad[idx] - dot);
                                   }
                                 }
                             });
}

Tensor log_softmax_channel(const Tensor& x) {
  if (x.rank() < 2 || x.dim(1) < 2)
    throw ShapeError("log_softmax_channel: need >= 2 channels, got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < n; ++i)
    channel_softmax_kernel(x.data().data() + i * c * inner, out.data() + i * c * inner, c, inner, true);
  return detail::make_result(x.shape(), std::move(out), "log_softmax_channel", {x},
                             [n, c, inner](const TensorImpl& o, Parents& p) {
                               auto* g = grad_of(p, 0);
                               if (!g) return;
                               for (std::size_t i = 0; i < n; ++i)
                                 for (std::size_t k = 0; k < inner; ++k) {
                                   const std::size_t base = i * c * inner + k;
                                   double s = 0.0;
                                   for (std::size_t ch = 0; ch < c; ++ch) s += o.grad[base + ch * inner];
                                   for (std::size_t ch = 0; ch < c; ++ch) {
                                     const std::size_t idx = base + ch * inner;
                                     (*g)[idx] += o.grad[idx] - std::exp(o.data[idx]) * s;
                                   }
                                 }
                             });
}

}  // namespace uqseg
