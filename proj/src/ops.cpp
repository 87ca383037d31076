#include "mgcr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mgcr/error.hpp"
#include "mgcr/simd/kernels.hpp"

namespace mgcr::ag {
namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;
using simd::kernels;

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

Tensor make_out(Shape shape, std::vector<double> data) {
  return Tensor::from(std::move(shape), std::move(data));
}

void record(OpKind kind, std::vector<ImplPtr> inputs, Tensor& out,
            std::function<void(const TapeNode&)> fn) {
  out.impl()->requires_grad = true;
  out.impl()->leaf = false;
  active_tape()->record(TapeNode{kind, std::move(inputs), out.impl(), std::move(fn)});
}

// Gradient buffer of input i if it wants one, else nullptr.
double* input_grad(const TapeNode& n, std::size_t i) {
  TensorImpl& in = *n.inputs[i];
  if (!in.requires_grad) return nullptr;
  return grad_buffer(in).data();
}

void require_2d(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + " expects a 2-D tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

std::size_t norm_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

std::vector<double> transposed(const double* src, std::size_t rows, std::size_t cols) {
  // Tiled so both sides stay in cache for large weight matrices.
  constexpr std::size_t kTile = 32;
  std::vector<double> out(rows * cols);
  for (std::size_t i0 = 0; i0 < rows; i0 += kTile)
    for (std::size_t j0 = 0; j0 < cols; j0 += kTile) {
      const std::size_t i1 = std::min(rows, i0 + kTile), j1 = std::min(cols, j0 + kTile);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) out[j * rows + i] = src[i * cols + j];
    }
  return out;
}

void accumulate(double* dst, const double* src, std::size_t n) {
  kernels().axpy(1.0, src, dst, n);
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<double> c(m * n);
  kernels().gemm(a.data().data(), b.data().data(), c.data(), m, k, n);
  Tensor out = make_out({m, n}, std::move(c));
  if (should_record({&a, &b})) {
    record(OpKind::matmul, {a.impl(), b.impl()}, out, [m, k, n](const TapeNode& node) {
      const double* go = node.output->grad.data();
      const double* ad = node.inputs[0]->data.data();
      const double* bd = node.inputs[1]->data.data();
      if (double* ga = input_grad(node, 0)) {
        const std::vector<double> bt = transposed(bd, k, n);
        std::vector<double> tmp(m * k);
        kernels().gemm(go, bt.data(), tmp.data(), m, n, k);
        accumulate(ga, tmp.data(), m * k);
      }
      if (double* gb = input_grad(node, 1)) {
        const std::vector<double> at = transposed(ad, m, k);
        std::vector<double> tmp(k * n);
        kernels().gemm(at.data(), go, tmp.data(), k, m, n);
        accumulate(gb, tmp.data(), k * n);
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  kernels().add(a.data().data(), b.data().data(), out.data(), out.size());
  Tensor t = make_out(a.shape(), std::move(out));
  if (should_record({&a, &b})) {
    record(OpKind::add, {a.impl(), b.impl()}, t, [](const TapeNode& node) {
      const auto& go = node.output->grad;
      for (std::size_t i = 0; i < 2; ++i)
        if (double* g = input_grad(node, i)) accumulate(g, go.data(), go.size());
    });
  }
  return t;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  kernels().sub(a.data().data(), b.data().data(), out.data(), out.size());
  Tensor t = make_out(a.shape(), std::move(out));
  if (should_record({&a, &b})) {
    record(OpKind::sub, {a.impl(), b.impl()}, t, [](const TapeNode& node) {
      const auto& go = node.output->grad;
      if (double* g = input_grad(node, 0)) accumulate(g, go.data(), go.size());
      if (double* g = input_grad(node, 1)) kernels().axpy(-1.0, go.data(), g, go.size());
    });
  }
  return t;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  kernels().mul(a.data().data(), b.data().data(), out.data(), out.size());
  Tensor t = make_out(a.shape(), std::move(out));
  if (should_record({&a, &b})) {
    record(OpKind::mul, {a.impl(), b.impl()}, t, [](const TapeNode& node) {
      const auto& go = node.output->grad;
      std::vector<double> tmp(go.size());
      if (double* g = input_grad(node, 0)) {
        kernels().mul(go.data(), node.inputs[1]->data.data(), tmp.data(), tmp.size());
        accumulate(g, tmp.data(), tmp.size());
      }
      if (double* g = input_grad(node, 1)) {
        kernels().mul(go.data(), node.inputs[0]->data.data(), tmp.data(), tmp.size());
        accumulate(g, tmp.data(), tmp.size());
      }
    });
  }
  return t;
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_2d(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (row.numel() != n || !(row.rank() == 1 || (row.rank() == 2 && row.dim(0) == 1)))
    throw ShapeError("add_row: cannot broadcast " + shape_str(row.shape()) + " over " +
                     shape_str(a.shape()));
  std::vector<double> out(m * n);
  const double* r = row.data().data();
  for (std::size_t i = 0; i < m; ++i)
    kernels().add(a.data().data() + i * n, r, out.data() + i * n, n);
  Tensor t = make_out(a.shape(), std::move(out));
  if (should_record({&a, &row})) {
    record(OpKind::add_row, {a.impl(), row.impl()}, t, [m, n](const TapeNode& node) {
      const auto& go = node.output->grad;
      if (double* g = input_grad(node, 0)) accumulate(g, go.data(), go.size());
      if (double* g = input_grad(node, 1))
        for (std::size_t i = 0; i < m; ++i) accumulate(g, go.data() + i * n, n);
    });
  }
  return t;
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  kernels().scale(a.data().data(), s, out.data(), out.size());
  Tensor t = make_out(a.shape(), std::move(out));
  if (should_record({&a})) {
    record(OpKind::scale, {a.impl()}, t, [s](const TapeNode& node) {
      const auto& go = node.output->grad;
      if (double* g = input_grad(node, 0)) kernels().axpy(s, go.data(), g, go.size());
    });
  }
  return t;
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v += s;
  Tensor t = make_out(a.shape(), std::move(out));
  if (should_record({&a})) {
    record(OpKind::add_scalar, {a.impl()}, t, [](const TapeNode& node) {
      const auto& go = node.output->grad;
      if (double* g = input_grad(node, 0)) accumulate(g, go.data(), go.size());
    });
  }
  return t;
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  kernels().relu(a.data().data(), out.data(), out.size());
  Tensor t = make_out(a.shape(), std::move(out));
  if (should_record({&a})) {
    record(OpKind::relu, {a.impl()}, t, [](const TapeNode& node) {
      const auto& go = node.output->grad;
      if (double* g = input_grad(node, 0)) {
        std::vector<double> tmp(go.size());
        kernels().relu_backward(node.inputs[0]->data.data(), go.data(), tmp.data(), tmp.size());
        accumulate(g, tmp.data(), tmp.size());
      }
    });
  }
  return t;
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(x[i]);
  Tensor t = make_out(a.shape(), std::move(out));
  if (should_record({&a})) {
    record(OpKind::sigmoid, {a.impl()}, t, [](const TapeNode& node) {
      const auto& go = node.output->grad;
      const auto& y = node.output->data;
      if (double* g = input_grad(node, 0))
        for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i] * (y[i] * (1.0 - y[i]));
    });
  }
  return t;
}

Tensor abs(const Tensor& a) {
  std::vector<double> out(a.numel());
  kernels().abs(a.data().data(), out.data(), out.size());
  Tensor t = make_out(a.shape(), std::move(out));
  if (should_record({&a})) {
    record(OpKind::abs, {a.impl()}, t, [](const TapeNode& node) {
      const auto& go = node.output->grad;
      const auto& x = node.inputs[0]->data;
      if (double* g = input_grad(node, 0))
        for (std::size_t i = 0; i < go.size(); ++i) {
          if (x[i] > 0.0) g[i] += go[i];
          else if (x[i] < 0.0) g[i] -= go[i];
        }
    });
  }
  return t;
}

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() != 1 && x.rank() != 2)
    throw ShapeError("softmax expects a 1-D or 2-D tensor, got " + shape_str(x.shape()));
  const std::size_t ax = norm_axis(axis, x.rank());
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t cols = x.rank() == 2 ? x.dim(1) : x.dim(0);
  // Iterate over `lines` independent vectors of length `len` with stride.
  const bool along_cols = (x.rank() == 1) || ax == 1;
  const std::size_t lines = along_cols ? rows : cols;
  const std::size_t len = along_cols ? cols : rows;
  const std::size_t stride = along_cols ? 1 : cols;
  const std::size_t step = along_cols ? cols : 1;

  const auto in = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t base = l * step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, in[base + i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(in[base + i * stride] - mx);
      out[base + i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[base + i * stride] /= total;
  }
  Tensor t = make_out(x.shape(), std::move(out));
  if (should_record({&x})) {
    record(OpKind::softmax, {x.impl()}, t,
           [lines, len, stride, step](const TapeNode& node) {
             double* g = input_grad(node, 0);
             if (!g) return;
             const auto& go = node.output->grad;
             const auto& y = node.output->data;
             for (std::size_t l = 0; l < lines; ++l) {
               const std::size_t base = l * step;
               double dot = 0.0;
               for (std::size_t i = 0; i < len; ++i) {
                 const std::size_t p = base + i * stride;
                 dot += y[p] * go[p];
               }
               for (std::size_t i = 0; i < len; ++i) {
                 const std::size_t p = base + i * stride;
                 g[p] += y[p] * (go[p] - dot);
               }
             }
           });
  }
  return t;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_2d(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.numel() != n || beta.numel() != n)
    throw ShapeError("layer_norm: gamma/beta length must equal " + std::to_string(n) +
                     ", got " + shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  const auto in = x.data();
  const auto ga = gamma.data();
  const auto be = beta.data();
  std::vector<double> xhat(m * n), rstd(m), out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * rstd[i];
      xhat[i * n + j] = h;
      out[i * n + j] = ga[j] * h + be[j];
    }
  }
  Tensor t = make_out(x.shape(), std::move(out));
  if (should_record({&x, &gamma, &beta})) {
    record(OpKind::layer_norm, {x.impl(), gamma.impl(), beta.impl()}, t,
           [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](const TapeNode& node) {
             const auto& go = node.output->grad;
             const auto& gam = node.inputs[1]->data;
             if (double* gg = input_grad(node, 1))
               for (std::size_t i = 0; i < m; ++i)
                 for (std::size_t j = 0; j < n; ++j) gg[j] += go[i * n + j] * xhat[i * n + j];
             if (double* gb = input_grad(node, 2))
               for (std::size_t i = 0; i < m; ++i)
                 for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
             if (double* gx = input_grad(node, 0)) {
               const double inv_n = 1.0 / static_cast<double>(n);
               for (std::size_t i = 0; i < m; ++i) {
                 double s1 = 0.0, s2 = 0.0;
                 for (std::size_t j = 0; j < n; ++j) {
                   const double gh = go[i * n + j] * gam[j];
                   s1 += gh;
                   s2 += gh * xhat[i * n + j];
                 }
                 for (std::size_t j = 0; j < n; ++j) {
                   const double gh = go[i * n + j] * gam[j];
                   gx[i * n + j] += rstd[i] * (gh - s1 * inv_n - xhat[i * n + j] * s2 * inv_n);
                 }
               }
             }
           });
  }
  return t;
}

Tensor batch_norm_1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     BatchNormStats& stats, NormMode mode, double eps, double momentum) {
  require_2d(x, "batch_norm_1d");
  const std::size_t b = x.rows(), c = x.cols();
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("batch_norm_1d: gamma/beta length must equal " + std::to_string(c));
  if (!stats.mean.defined()) {
    stats.mean = Tensor::zeros({c});
    stats.var = Tensor::full({c}, 1.0);
  }
  if (stats.mean.numel() != c || stats.var.numel() != c)
    throw ShapeError("batch_norm_1d: running statistics have the wrong length");
  const auto in = x.data();
  const auto ga = gamma.data();
  const auto be = beta.data();
  std::vector<double> xhat(b * c), rstd(c), out(b * c);

  if (mode == NormMode::train) {
    if (b < 2)
      throw ConfigError("batch_norm_1d in train mode needs a batch of at least 2 rows, got " +
                        std::to_string(b));
    auto rm = stats.mean.mutable_data();
    auto rv = stats.var.mutable_data();
    for (std::size_t j = 0; j < c; ++j) {
      double mu = 0.0;
      for (std::size_t i = 0; i < b; ++i) mu += in[i * c + j];
      mu /= static_cast<double>(b);
      double var = 0.0;
      for (std::size_t i = 0; i < b; ++i) var += (in[i * c + j] - mu) * (in[i * c + j] - mu);
      var /= static_cast<double>(b);
      rstd[j] = 1.0 / std::sqrt(var + eps);
      for (std::size_t i = 0; i < b; ++i) {
        const double h = (in[i * c + j] - mu) * rstd[j];
        xhat[i * c + j] = h;
        out[i * c + j] = ga[j] * h + be[j];
      }
      const double unbiased = var * static_cast<double>(b) / static_cast<double>(b - 1);
      rm[j] = (1.0 - momentum) * rm[j] + momentum * mu;
      rv[j] = (1.0 - momentum) * rv[j] + momentum * unbiased;
    }
    stats.populated = true;
  } else {
    if (!stats.populated)
      throw ContractError("batch_norm_1d in infer mode needs populated running statistics");
    const auto rm = stats.mean.data();
    const auto rv = stats.var.data();
    for (std::size_t j = 0; j < c; ++j) {
      rstd[j] = 1.0 / std::sqrt(rv[j] + eps);
      for (std::size_t i = 0; i < b; ++i) {
        const double h = (in[i * c + j] - rm[j]) * rstd[j];
        xhat[i * c + j] = h;
        out[i * c + j] = ga[j] * h + be[j];
      }
    }
  }

  Tensor t = make_out(x.shape(), std::move(out));
  if (should_record({&x, &gamma, &beta})) {
    const bool train = mode == NormMode::train;
    record(OpKind::batch_norm, {x.impl(), gamma.impl(), beta.impl()}, t,
           [b, c, train, xhat = std::move(xhat), rstd = std::move(rstd)](const TapeNode& node) {
             const auto& go = node.output->grad;
             const auto& gam = node.inputs[1]->data;
             std::vector<double> sg(c, 0.0), sgx(c, 0.0);
             for (std::size_t i = 0; i < b; ++i)
               for (std::size_t j = 0; j < c; ++j) {
                 sg[j] += go[i * c + j];
                 sgx[j] += go[i * c + j] * xhat[i * c + j];
               }
             if (double* gg = input_grad(node, 1))
               for (std::size_t j = 0; j < c; ++j) gg[j] += sgx[j];
             if (double* gb = input_grad(node, 2))
               for (std::size_t j = 0; j < c; ++j) gb[j] += sg[j];
             if (double* gx = input_grad(node, 0)) {
               const double inv_b = 1.0 / static_cast<double>(b);
               for (std::size_t i = 0; i < b; ++i)
                 for (std::size_t j = 0; j < c; ++j) {
                   const std::size_t p = i * c + j;
                   if (train)
                     gx[p] += gam[j] * rstd[j] * (go[p] - sg[j] * inv_b - xhat[p] * sgx[j] * inv_b);
                   else
                     gx[p] += gam[j] * rstd[j] * go[p];
                 }
             }
           });
  }
  return t;
}

Tensor conv1d(const Tensor& x, const Tensor& kernel) {
  require_2d(x, "conv1d");
  if (kernel.rank() != 3)
    throw ShapeError("conv1d kernel must be [C_out x C_in x k], got " + shape_str(kernel.shape()));
  const std::size_t cin = x.rows(), len = x.cols();
  const std::size_t cout = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != cin)
    throw ShapeError("conv1d: kernel " + shape_str(kernel.shape()) + " does not accept input " +
                     shape_str(x.shape()));
  if (k % 2 == 0)
    throw ConfigError("conv1d kernel size must be odd to preserve length, got " + std::to_string(k));
  const std::size_t pad = (k - 1) / 2;
  const std::size_t rows = cin * k;

  // im2col: col[(ci*k + t), l] = x[ci, l + t - pad]
  std::vector<double> col(rows * len, 0.0);
  const auto in = x.data();
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t t = 0; t < k; ++t) {
      double* dst = col.data() + (ci * k + t) * len;
      for (std::size_t l = 0; l < len; ++l) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + t) - static_cast<std::ptrdiff_t>(pad);
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) dst[l] = in[ci * len + src];
      }
    }
  std::vector<double> out(cout * len);
  kernels().gemm(kernel.data().data(), col.data(), out.data(), cout, rows, len);
  Tensor t = make_out({cout, len}, std::move(out));
  if (should_record({&x, &kernel})) {
    record(OpKind::conv1d, {x.impl(), kernel.impl()}, t,
           [cin, cout, len, k, pad, rows, col = std::move(col)](const TapeNode& node) {
             const auto& go = node.output->grad;
             if (double* gw = input_grad(node, 1)) {
               const std::vector<double> colt = transposed(col.data(), rows, len);
               std::vector<double> tmp(cout * rows);
               kernels().gemm(go.data(), colt.data(), tmp.data(), cout, len, rows);
               accumulate(gw, tmp.data(), tmp.size());
             }
             if (double* gx = input_grad(node, 0)) {
               const std::vector<double> wt = transposed(node.inputs[1]->data.data(), cout, rows);
               std::vector<double> gcol(rows * len);
               kernels().gemm(wt.data(), go.data(), gcol.data(), rows, cout, len);
               for (std::size_t ci = 0; ci < cin; ++ci)
                 for (std::size_t tt = 0; tt < k; ++tt) {
                   const double* src = gcol.data() + (ci * k + tt) * len;
                   for (std::size_t l = 0; l < len; ++l) {
                     const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(l + tt) - static_cast<std::ptrdiff_t>(pad);
                     if (p >= 0 && p < static_cast<std::ptrdiff_t>(len)) gx[ci * len + p] += src[l];
                   }
                 }
             }
           });
  }
  return t;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor t = make_out({1}, {s});
  if (should_record({&x})) {
    record(OpKind::sum, {x.impl()}, t, [](const TapeNode& node) {
      const double go = node.output->grad[0];
      if (double* g = input_grad(node, 0))
        for (std::size_t i = 0; i < node.inputs[0]->data.size(); ++i) g[i] += go;
    });
  }
  return t;
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor t = make_out({1}, {s / n});
  if (should_record({&x})) {
    record(OpKind::mean, {x.impl()}, t, [n](const TapeNode& node) {
      const double go = node.output->grad[0] / n;
      if (double* g = input_grad(node, 0))
        for (std::size_t i = 0; i < node.inputs[0]->data.size(); ++i) g[i] += go;
    });
  }
  return t;
}

namespace {

Tensor reduce_axis(const Tensor& x, int axis, bool average) {
  require_2d(x, average ? "mean" : "sum");
  const std::size_t ax = norm_axis(axis, 2);
  const std::size_t m = x.rows(), n = x.cols();
  const std::size_t out_len = ax == 0 ? n : m;
  const double count = static_cast<double>(ax == 0 ? m : n);
  const auto in = x.data();
  std::vector<double> out(out_len, 0.0);
  if (ax == 0) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += in[i * n + j];
      out[j] = s;
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += in[i * n + j];
      out[i] = s;
    }
  }
  if (average)
    for (double& v : out) v /= count;
  Tensor t = make_out({out_len}, std::move(out));
  if (should_record({&x})) {
    record(average ? OpKind::mean_axis : OpKind::sum_axis, {x.impl()}, t,
           [ax, m, n, count, average](const TapeNode& node) {
             double* g = input_grad(node, 0);
             if (!g) return;
             const auto& go = node.output->grad;
             const double f = average ? 1.0 / count : 1.0;
             for (std::size_t i = 0; i < m; ++i)
               for (std::size_t j = 0; j < n; ++j) g[i * n + j] += (ax == 0 ? go[j] : go[i]) * f;
           });
  }
  return t;
}

}  // namespace

Tensor sum(const Tensor& x, int axis) { return reduce_axis(x, axis, false); }
Tensor mean(const Tensor& x, int axis) { return reduce_axis(x, axis, true); }

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of an empty list");
  for (const auto& p : parts) require_2d(p, "concat");
  const std::size_t ax = norm_axis(axis, 2);
  const std::size_t fixed = parts[0].dim(1 - ax);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(1 - ax) != fixed)
      throw ShapeError("concat: off-axis mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    total += p.dim(ax);
  }
  const std::size_t m = ax == 0 ? total : fixed;
  const std::size_t n = ax == 0 ? fixed : total;
  std::vector<double> out(m * n);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const auto d = p.data();
    if (ax == 0) {
      std::copy(d.begin(), d.end(), out.begin() + static_cast<std::ptrdiff_t>(off * n));
    } else {
      const std::size_t w = p.cols();
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(d.data() + i * w, w, out.data() + i * n + off);
    }
    off += p.dim(ax);
  }
  Tensor t = make_out({m, n}, std::move(out));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (active_tape() && any) {
    std::vector<ImplPtr> ins;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
      ins.push_back(p.impl());
      widths.push_back(p.dim(ax));
    }
    record(OpKind::concat, std::move(ins), t,
           [ax, m, n, offsets, widths](const TapeNode& node) {
             const auto& go = node.output->grad;
             for (std::size_t k = 0; k < widths.size(); ++k) {
               double* g = input_grad(node, k);
               if (!g) continue;
               if (ax == 0) {
                 accumulate(g, go.data() + offsets[k] * n, widths[k] * n);
               } else {
                 for (std::size_t i = 0; i < m; ++i)
                   accumulate(g + i * widths[k], go.data() + i * n + offsets[k], widths[k]);
               }
             }
           });
  }
  return t;
}

Tensor transpose(const Tensor& x) {
  require_2d(x, "transpose");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor t = make_out({n, m}, transposed(x.data().data(), m, n));
  if (should_record({&x})) {
    record(OpKind::transpose, {x.impl()}, t, [m, n](const TapeNode& node) {
      double* g = input_grad(node, 0);
      if (!g) return;
      const auto& go = node.output->grad;  // [n x m]
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += go[j * m + i];
    });
  }
  return t;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor t = make_out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (should_record({&x})) {
    record(OpKind::reshape, {x.impl()}, t, [](const TapeNode& node) {
      const auto& go = node.output->grad;
      if (double* g = input_grad(node, 0)) accumulate(g, go.data(), go.size());
    });
  }
  return t;
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  require_2d(x, "slice");
  const std::size_t ax = norm_axis(axis, 2);
  const std::size_t m = x.rows(), n = x.cols();
  if (length == 0 || start + length > x.dim(ax))
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range for axis " + std::to_string(ax) + " of " + shape_str(x.shape()));
  const auto in = x.data();
  const std::size_t om = ax == 0 ? length : m;
  const std::size_t on = ax == 0 ? n : length;
  std::vector<double> out(om * on);
  for (std::size_t i = 0; i < om; ++i)
    for (std::size_t j = 0; j < on; ++j)
      out[i * on + j] = ax == 0 ? in[(start + i) * n + j] : in[i * n + start + j];
  Tensor t = make_out({om, on}, std::move(out));
  if (should_record({&x})) {
    record(OpKind::slice, {x.impl()}, t, [ax, n, om, on, start](const TapeNode& node) {
      double* g = input_grad(node, 0);
      if (!g) return;
      const auto& go = node.output->grad;
      for (std::size_t i = 0; i < om; ++i)
        for (std::size_t j = 0; j < on; ++j) {
          const std::size_t p = ax == 0 ? (start + i) * n + j : i * n + start + j;
          g[p] += go[i * on + j];
        }
    });
  }
  return t;
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_2d(table, "embedding");
  const std::size_t v = table.rows(), d = table.cols();
  if (ids.empty()) throw ShapeError("embedding: empty id sequence");
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw IndexError("embedding id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(v));
  const auto tab = table.data();
  std::vector<double> out(ids.size() * d);
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(tab.data() + static_cast<std::size_t>(ids[r]) * d, d, out.data() + r * d);
  Tensor t = make_out({ids.size(), d}, std::move(out));
  if (should_record({&table})) {
    std::vector<int> saved(ids.begin(), ids.end());
    record(OpKind::embedding, {table.impl()}, t, [d, saved = std::move(saved)](const TapeNode& node) {
      double* g = input_grad(node, 0);
      if (!g) return;
      const auto& go = node.output->grad;
      for (std::size_t r = 0; r < saved.size(); ++r)
        accumulate(g + static_cast<std::size_t>(saved[r]) * d, go.data() + r * d, d);
    });
  }
  return t;
}

Tensor space_to_depth(const Tensor& x, std::size_t height, std::size_t width, std::size_t factor) {
  require_2d(x, "space_to_depth");
  if (factor == 0 || height % factor != 0 || width % factor != 0)
    throw ShapeError("space_to_depth: grid " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by " + std::to_string(factor));
  if (x.rows() != height * width)
    throw ShapeError("space_to_depth: " + shape_str(x.shape()) + " is not a " +
                     std::to_string(height) + "x" + std::to_string(width) + " grid");
  const std::size_t c = x.cols();
  const std::size_t oh = height / factor, ow = width / factor;
  const std::size_t oc = factor * factor * c;
  // index map: out element -> in element
  std::vector<std::size_t> src(oh * ow * oc);
  for (std::size_t by = 0; by < oh; ++by)
    for (std::size_t bx = 0; bx < ow; ++bx)
      for (std::size_t dy = 0; dy < factor; ++dy)
        for (std::size_t dx = 0; dx < factor; ++dx)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t o = (by * ow + bx) * oc + (dy * factor + dx) * c + ch;
            src[o] = ((by * factor + dy) * width + bx * factor + dx) * c + ch;
          }
  const auto in = x.data();
  std::vector<double> out(src.size());
  for (std::size_t o = 0; o < src.size(); ++o) out[o] = in[src[o]];
  Tensor t = make_out({oh * ow, oc}, std::move(out));
  if (should_record({&x})) {
    record(OpKind::space_to_depth, {x.impl()}, t, [src = std::move(src)](const TapeNode& node) {
      double* g = input_grad(node, 0);
      if (!g) return;
      const auto& go = node.output->grad;
      for (std::size_t o = 0; o < src.size(); ++o) g[src[o]] += go[o];
    });
  }
  return t;
}

Tensor upsample_nearest(const Tensor& x, std::size_t height, std::size_t width, std::size_t factor) {
  require_2d(x, "upsample_nearest");
  if (x.rows() != height * width)
    throw ShapeError("upsample_nearest: " + shape_str(x.shape()) + " is not a " +
                     std::to_string(height) + "x" + std::to_string(width) + " grid");
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be positive");
  const std::size_t c = x.cols();
  const std::size_t oh = height * factor, ow = width * factor;
  const auto in = x.data();
  std::vector<double> out(oh * ow * c);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t xx = 0; xx < ow; ++xx)
      std::copy_n(in.data() + ((y / factor) * width + xx / factor) * c, c,
                  out.data() + (y * ow + xx) * c);
  Tensor t = make_out({oh * ow, c}, std::move(out));
  if (should_record({&x})) {
    record(OpKind::upsample, {x.impl()}, t, [width, oh, ow, c, factor](const TapeNode& node) {
      double* g = input_grad(node, 0);
      if (!g) return;
      const auto& go = node.output->grad;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx)
          accumulate(g + ((y / factor) * width + xx / factor) * c, go.data() + (y * ow + xx) * c, c);
    });
  }
  return t;
}

}  // namespace mgcr::ag
