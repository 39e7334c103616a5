// SPDX-License-Identifier: Apache-2.0
#include "hflab/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gemm.hpp"
#include "hflab/error.hpp"

namespace hflab::nn {
namespace {

using detail::Node;

/// Gradient buffer of input `i`, or nullptr when that input is constant.
double* input_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return in.ensure_grad().data();
}

const std::vector<double>& input_value(const Node& self, std::size_t i) { return self.inputs[i]->value; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    raise(ErrorCode::ShapeMismatch,
          std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_single(const Tensor& t, const char* what) {
  if (t.numel() != 1) raise(ErrorCode::ShapeMismatch, std::string(what) + " must hold a single element");
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    raise(ErrorCode::ShapeMismatch, std::string(op) + ": empty last axis");
  }
  return x.shape().back();
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& g = self.grad;
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* gi = input_grad(self, k)) {
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor::make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& g = self.grad;
    if (double* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (double* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& g = self.grad;
    const auto& av = input_value(self, 0);
    const auto& bv = input_value(self, 1);
    if (double* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (double* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return Tensor::make_result(x.shape(), std::move(out), {&x}, [factor](Node& self) {
    const auto& g = self.grad;
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    }
  });
}

Tensor add_broadcast(const Tensor& x, const Tensor& y) {
  const auto& xs = x.shape();
  const auto& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    raise(ErrorCode::ShapeMismatch,
          "add_broadcast: " + shape_string(ys) + " is not a suffix of " + shape_string(xs));
  }
  const auto xv = x.values();
  const auto yv = y.values();
  const std::size_t ny = yv.size();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); i += ny) {
    for (std::size_t j = 0; j < ny; ++j) out[i + j] = xv[i + j] + yv[j];
  }
  return Tensor::make_result(xs, std::move(out), {&x, &y}, [ny](Node& self) {
    const auto& g = self.grad;
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (double* gy = input_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); i += ny) {
        for (std::size_t j = 0; j < ny; ++j) gy[j] += g[i + j];
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2) raise(ErrorCode::ShapeMismatch, "linear: weight must be 2-D, got " + shape_string(w.shape()));
  const std::size_t k = w.dim(0);
  const std::size_t m = w.dim(1);
  if (last_dim(x, "linear") != k) {
    raise(ErrorCode::ShapeMismatch, "linear: input " + shape_string(x.shape()) + " vs weight " +
                                        shape_string(w.shape()));
  }
  const bool has_bias = b.defined();
  if (has_bias && (b.rank() != 1 || b.dim(0) != m)) {
    raise(ErrorCode::ShapeMismatch, "linear: bias " + shape_string(b.shape()) + " for " + std::to_string(m) +
                                        " outputs");
  }
  const std::size_t rows = x.numel() / k;
  std::vector<double> out(rows * m);
  detail::gemm(false, false, rows, m, k, x.values().data(), w.values().data(), out.data(), false);
  if (has_bias) {
    const auto bv = b.values();
    for (std::size_t r = 0; r < rows; ++r) {
      double* o = out.data() + r * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += bv[j];
    }
  }
  Shape shape = x.shape();
  shape.back() = m;

  auto backward = [rows, k, m, has_bias](Node& self) {
    const double* g = self.grad.data();
    if (double* gx = input_grad(self, 0)) {
      detail::gemm(false, true, rows, k, m, g, input_value(self, 1).data(), gx, true);
    }
    if (double* gw = input_grad(self, 1)) {
      detail::gemm(true, false, k, m, rows, input_value(self, 0).data(), g, gw, true);
    }
    if (has_bias) {
      if (double* gb = input_grad(self, 2)) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g + r * m;
          for (std::size_t j = 0; j < m; ++j) gb[j] += gr[j];
        }
      }
    }
  };
  if (has_bias) return Tensor::make_result(std::move(shape), std::move(out), {&x, &w, &b}, backward);
  return Tensor::make_result(std::move(shape), std::move(out), {&x, &w}, backward);
}

Tensor matmul(const Tensor& x, const Tensor& w) { return linear(x, w, Tensor()); }

Tensor sigmoid(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(xv[i]);
  return Tensor::make_result(x.shape(), std::move(out), {&x}, [](Node& self) {
    const auto& g = self.grad;
    const auto& y = self.value;
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Tensor tanh(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  return Tensor::make_result(x.shape(), std::move(out), {&x}, [](Node& self) {
    const auto& g = self.grad;
    const auto& y = self.value;
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  require_single(slope, "prelu slope");
  const double a = slope.item();
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] >= 0.0 ? xv[i] : a * xv[i];
  return Tensor::make_result(x.shape(), std::move(out), {&x, &slope}, [](Node& self) {
    const auto& g = self.grad;
    const auto& xv = input_value(self, 0);
    const double a = input_value(self, 1)[0];
    if (double* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] >= 0.0 ? g[i] : a * g[i];
    }
    if (double* ga = input_grad(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv[i] < 0.0) acc += g[i] * xv[i];
      }
      ga[0] += acc;
    }
  });
}

Tensor spiking(const Tensor& x, const Tensor& threshold, double temperature, SpikeGradient mode) {
  require_single(threshold, "spiking threshold");
  if (!(temperature > 0.0)) raise(ErrorCode::InvalidConfig, "spiking surrogate temperature must be positive");
  const double th = threshold.item();
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] >= th ? xv[i] : 0.0;
  return Tensor::make_result(x.shape(), std::move(out), {&x, &threshold}, [temperature, mode](Node& self) {
    const auto& g = self.grad;
    const auto& xv = input_value(self, 0);
    const double th = input_value(self, 1)[0];
    double* gx = input_grad(self, 0);
    double* gt = input_grad(self, 1);
    if (mode == SpikeGradient::exact) {
      if (gx) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] >= th ? g[i] : 0.0;
      }
      return;
    }
    const double inv_t = 1.0 / temperature;
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = stable_sigmoid((xv[i] - th) * inv_t);
      const double ds = s * (1.0 - s) * inv_t;
      if (gx) gx[i] += g[i] * (s + xv[i] * ds);
      acc -= g[i] * xv[i] * ds;
    }
    if (gt) gt[0] += acc;
  });
}

Tensor softmax(const Tensor& x) {
  const std::size_t n = last_dim(x, "softmax");
  const auto xv = x.values();
  const std::size_t rows = xv.size() / n;
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return Tensor::make_result(x.shape(), std::move(out), {&x}, [n, rows](Node& self) {
    double* gx = input_grad(self, 0);
    if (!gx) return;
    const auto& g = self.grad;
    const auto& y = self.value;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[o + j] * y[o + j];
      for (std::size_t j = 0; j < n; ++j) gx[o + j] += y[o + j] * (g[o + j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const std::size_t n = last_dim(x, "layer_norm");
  if (n < 2) raise(ErrorCode::ShapeMismatch, "layer_norm needs rows of at least 2 elements");
  if (gain.numel() != n || bias.numel() != n) {
    raise(ErrorCode::ShapeMismatch, "layer_norm: gain/bias must have " + std::to_string(n) + " elements");
  }
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  const std::size_t rows = xv.size() / n;
  // Saved for backward: normalized rows and 1/sigma (0 for degenerate rows).
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_sigma = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(xv.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += in[j];
    mu *= inv_n;
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mu) * (in[j] - mu);
    const double sigma = std::sqrt(var * inv_n);
    const double is = sigma < 1e-12 ? 0.0 : 1.0 / sigma;
    (*inv_sigma)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (in[j] - mu) * is;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = gv[j] * h + bv[j];
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {&x, &gain, &bias}, [n, rows, xhat, inv_sigma](Node& self) {
    const auto& g = self.grad;
    const auto& gv = input_value(self, 1);
    const auto& xh = *xhat;
    double* gx = input_grad(self, 0);
    double* ggain = input_grad(self, 1);
    double* gbias = input_grad(self, 2);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * n;
      if (ggain || gbias) {
        for (std::size_t j = 0; j < n; ++j) {
          if (ggain) ggain[j] += g[o + j] * xh[o + j];
          if (gbias) gbias[j] += g[o + j];
        }
      }
      const double is = (*inv_sigma)[r];
      if (!gx || is == 0.0) continue;
      double mean_gh = 0.0;
      double mean_ghx = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double gh = g[o + j] * gv[j];
        mean_gh += gh;
        mean_ghx += gh * xh[o + j];
      }
      mean_gh *= inv_n;
      mean_ghx *= inv_n;
      for (std::size_t j = 0; j < n; ++j) {
        const double gh = g[o + j] * gv[j];
        gx[o + j] += is * (gh - mean_gh - xh[o + j] * mean_ghx);
      }
    }
  });
}

Tensor add_norm(const Tensor& x, const Tensor& sublayer_out, const Tensor& gain, const Tensor& bias) {
  return layer_norm(add(x, sublayer_out), gain, bias);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    raise(ErrorCode::ShapeMismatch, "reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  const auto xv = x.values();
  std::vector<double> out(xv.begin(), xv.end());
  return Tensor::make_result(std::move(shape), std::move(out), {&x}, [](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      const auto& g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) raise(ErrorCode::ShapeMismatch, "concat of zero tensors");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    const std::size_t w = s.back();
    s.pop_back();
    if (s != lead) raise(ErrorCode::ShapeMismatch, "concat_last: leading dimensions differ");
    widths.push_back(w);
    total += w;
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * widths[p], widths[p], out.data() + r * total + offset);
    }
    offset += widths[p];
  }
  Shape shape = lead;
  shape.push_back(total);
  return Tensor::make_result(std::move(shape), std::move(out), parts, [widths, rows, total](Node& self) {
    const auto& g = self.grad;
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (double* gp = input_grad(self, p)) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* src = g.data() + r * total + offset;
          double* dst = gp + r * widths[p];
          for (std::size_t j = 0; j < widths[p]; ++j) dst[j] += src[j];
        }
      }
      offset += widths[p];
    }
  });
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length) {
  const std::size_t n = last_dim(x, "slice_last");
  if (start + length > n || length == 0) {
    raise(ErrorCode::ShapeMismatch, "slice_last [" + std::to_string(start) + ", +" + std::to_string(length) +
                                        ") of width " + std::to_string(n));
  }
  const auto xv = x.values();
  const std::size_t rows = xv.size() / n;
  std::vector<double> out(rows * length);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.data() + r * n + start, length, out.data() + r * length);
  Shape shape = x.shape();
  shape.back() = length;
  return Tensor::make_result(std::move(shape), std::move(out), {&x}, [n, rows, start, length](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      const auto& g = self.grad;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < length; ++j) gx[r * n + start + j] += g[r * length + j];
      }
    }
  });
}

Tensor select_step(const Tensor& x, std::size_t t) {
  if (x.rank() != 3 || t >= x.dim(1)) {
    raise(ErrorCode::ShapeMismatch, "select_step " + std::to_string(t) + " from " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t steps = x.dim(1);
  const std::size_t d = x.dim(2);
  const auto xv = x.values();
  std::vector<double> out(batch * d);
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(xv.data() + (b * steps + t) * d, d, out.data() + b * d);
  return Tensor::make_result(Shape{batch, d}, std::move(out), {&x}, [batch, steps, d, t](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      const auto& g = self.grad;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < d; ++j) gx[(b * steps + t) * d + j] += g[b * d + j];
      }
    }
  });
}

Tensor stack_steps(const std::vector<Tensor>& steps) {
  if (steps.empty()) raise(ErrorCode::ShapeMismatch, "stack of zero tensors");
  const Shape& s0 = steps[0].shape();
  if (s0.size() != 2) raise(ErrorCode::ShapeMismatch, "stack_steps expects [B, d] tensors");
  for (const auto& s : steps) {
    if (s.shape() != s0) raise(ErrorCode::ShapeMismatch, "stack_steps: shapes differ");
  }
  const std::size_t batch = s0[0];
  const std::size_t d = s0[1];
  const std::size_t n = steps.size();
  std::vector<double> out(batch * n * d);
  for (std::size_t t = 0; t < n; ++t) {
    const auto v = steps[t].values();
    for (std::size_t b = 0; b < batch; ++b) std::copy_n(v.data() + b * d, d, out.data() + (b * n + t) * d);
  }
  return Tensor::make_result(Shape{batch, n, d}, std::move(out), steps, [batch, n, d](Node& self) {
    const auto& g = self.grad;
    for (std::size_t t = 0; t < n; ++t) {
      if (double* gt = input_grad(self, t)) {
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t j = 0; j < d; ++j) gt[b * d + j] += g[(b * n + t) * d + j];
        }
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return Tensor::make_result(Shape{1}, {total}, {&x}, [](Node& self) {
    if (double* gx = input_grad(self, 0)) {
      const double g = self.grad[0];
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) raise(ErrorCode::ShapeMismatch, "mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sinusoidal_pe(std::size_t length, std::size_t dim) {
  if (dim % 2 != 0) raise(ErrorCode::OddDimension, "positional encoding dimension " + std::to_string(dim));
  std::vector<double> pe(length * dim);
  for (std::size_t n = 0; n < length; ++n) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      const double angle = static_cast<double>(n) / freq;
      pe[n * dim + 2 * i] = std::sin(angle);
      pe[n * dim + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor(Shape{length, dim}, std::move(pe));
}

}  // namespace hflab::nn
