#include "osxr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "osxr/error.hpp"

namespace osxr {

using detail::make_result;
using detail::Node;

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
void require_defined(const BasicTensor<T>& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor operand");
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op) {
  require_defined(t, op);
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

bool recording_for(std::initializer_list<bool> flags) {
  if (!grad_recording_enabled()) return false;
  for (bool f : flags)
    if (f) return true;
  return false;
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result<T>(a.shape(), std::move(out), "add", {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = self.input_grad(k))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result<T>(a.shape(), std::move(out), "sub", {a, b}, [](Node<T>& self) {
    if (auto* g = self.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = self.input_grad(1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result<T>(a.shape(), std::move(out), "mul", {a, b}, [](Node<T>& self) {
    const auto& x = self.inputs[0]->data;
    const auto& y = self.inputs[1]->data;
    if (auto* g = self.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * y[i];
    if (auto* g = self.input_grad(1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * x[i];
  });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, double factor) {
  require_defined(x, "scale");
  const T f = static_cast<T>(factor);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= f;
  return make_result<T>(x.shape(), std::move(out), "scale", {x}, [f](Node<T>& self) {
    if (auto* g = self.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += f * self.grad[i];
  });
}

template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, double c) {
  require_defined(x, "add_scalar");
  const T k = static_cast<T>(c);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v += k;
  return make_result<T>(x.shape(), std::move(out), "add_scalar", {x}, [](Node<T>& self) {
    if (auto* g = self.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

template <class T>
BasicTensor<T> abs(const BasicTensor<T>& x) {
  require_defined(x, "abs");
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::abs(v);
  return make_result<T>(x.shape(), std::move(out), "abs", {x}, [](Node<T>& self) {
    const auto& in = self.inputs[0]->data;
    if (auto* g = self.input_grad(0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const T s = in[i] > T(0) ? T(1) : (in[i] < T(0) ? T(-1) : T(0));
        (*g)[i] += s * self.grad[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  // One row at a time; results are independent of the batch size.
  std::vector<T> out(m * n);
  const ConstMatMap<T> bm(b.data().data(), k, n);
  Eigen::Matrix<T, 1, Eigen::Dynamic> row(k), res(n);
  for (std::size_t i = 0; i < m; ++i) {
    row = ConstMatMap<T>(a.data().data() + i * k, 1, k);
    res.noalias() = row * bm;
    std::copy(res.data(), res.data() + n, out.data() + i * n);
  }
  return make_result<T>({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node<T>& self) {
    ConstMatMap<T> dc(self.grad.data(), m, n);
    if (auto* g = self.input_grad(0)) {
      MatMap<T>(g->data(), m, k).noalias() += dc * ConstMatMap<T>(self.inputs[1]->data.data(), k, n).transpose();
    }
    if (auto* g = self.input_grad(1)) {
      MatMap<T>(g->data(), k, n).noalias() += ConstMatMap<T>(self.inputs[0]->data.data(), m, k).transpose() * dc;
    }
  });
}

template <class T>
BasicTensor<T> bias_add(const BasicTensor<T>& x, const BasicTensor<T>& b) {
  require_defined(x, "bias_add");
  require_rank(b, 1, "bias_add");
  if (x.rank() < 2 || x.extent(1) != b.extent(0)) {
    throw ShapeError("bias_add: bias " + shape_str(b.shape()) + " does not match axis 1 of " + shape_str(x.shape()));
  }
  const std::size_t outer = x.extent(0), channels = x.extent(1);
  const std::size_t inner = x.numel() / (outer * channels);
  std::vector<T> out(x.data().begin(), x.data().end());
  auto bias = b.data();
  for (std::size_t n = 0; n < outer; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      T* p = out.data() + (n * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) p[i] += bias[c];
    }
  return make_result<T>(x.shape(), std::move(out), "bias_add", {x, b}, [outer, channels, inner](Node<T>& self) {
    if (auto* g = self.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = self.input_grad(1)) {
      for (std::size_t n = 0; n < outer; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
          const T* p = self.grad.data() + (n * channels + c) * inner;
          T acc = 0;
          for (std::size_t i = 0; i < inner; ++i) acc += p[i];
          (*g)[c] += acc;
        }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, stride, pad, ho, wo;
  std::size_t col_rows() const { return c * kh * kw; }
  std::size_t col_cols() const { return ho * wo; }
};

template <class T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  const auto H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w);
  const auto P = static_cast<std::ptrdiff_t>(g.pad), S = static_cast<std::ptrdiff_t>(g.stride);
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* dst = col + ((c * g.kh + i) * g.kw + j) * g.col_cols();
        const T* plane = img + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * S + static_cast<std::ptrdiff_t>(i) - P;
          T* row = dst + oy * g.wo;
          if (iy < 0 || iy >= H) {
            std::fill(row, row + g.wo, T(0));
            continue;
          }
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * S + static_cast<std::ptrdiff_t>(j) - P;
            row[ox] = (ix < 0 || ix >= W) ? T(0) : plane[iy * W + ix];
          }
        }
      }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* img) {
  const auto H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w);
  const auto P = static_cast<std::ptrdiff_t>(g.pad), S = static_cast<std::ptrdiff_t>(g.stride);
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* src = col + ((c * g.kh + i) * g.kw + j) * g.col_cols();
        T* plane = img + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * S + static_cast<std::ptrdiff_t>(i) - P;
          if (iy < 0 || iy >= H) continue;
          const T* row = src + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * S + static_cast<std::ptrdiff_t>(j) - P;
            if (ix >= 0 && ix < W) plane[iy * W + ix] += row[ox];
          }
        }
      }
}

template <class T>
BasicTensor<T> conv2d_impl(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>* bias,
                           std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.n = input.extent(0);
  g.c = input.extent(1);
  g.h = input.extent(2);
  g.w = input.extent(3);
  g.o = kernel.extent(0);
  g.kh = kernel.extent(2);
  g.kw = kernel.extent(3);
  g.stride = stride;
  g.pad = padding;
  if (kernel.extent(1) != g.c) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " does not match input channels of " +
                     shape_str(input.shape()));
  }
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                     shape_str(input.shape()));
  }
  if (bias) {
    require_rank(*bias, 1, "conv2d");
    if (bias->extent(0) != g.o) throw ShapeError("conv2d: bias extent does not match output channels");
  }
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;

  const std::size_t rows = g.col_rows(), cols = g.col_cols();
  const bool record =
      recording_for({input.requires_grad(), kernel.requires_grad(), bias != nullptr && bias->requires_grad()});
  auto col_store = std::make_shared<std::vector<T>>(record ? g.n * rows * cols : rows * cols);

  std::vector<T> out(g.n * g.o * cols);
  ConstMatMap<T> k(kernel.data().data(), g.o, rows);
  const T* in = input.data().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    T* col = col_store->data() + (record ? n * rows * cols : 0);
    im2col(in + n * g.c * g.h * g.w, g, col);
    MatMap<T>(out.data() + n * g.o * cols, g.o, cols).noalias() = k * ConstMatMap<T>(col, rows, cols);
  }
  if (bias) {
    auto b = bias->data();
    for (std::size_t n = 0; n < g.n; ++n)
      for (std::size_t o = 0; o < g.o; ++o) {
        T* p = out.data() + (n * g.o + o) * cols;
        for (std::size_t i = 0; i < cols; ++i) p[i] += b[o];
      }
  }
  if (!record) col_store.reset();

  Shape out_shape{g.n, g.o, g.ho, g.wo};
  auto adjoint = [g, col_store](Node<T>& self) {
    const std::size_t rows = g.col_rows(), cols = g.col_cols();
    const auto& kdata = self.inputs[1]->data;
    auto* g_in = self.input_grad(0);
    auto* g_k = self.input_grad(1);
    auto* g_b = self.inputs.size() > 2 ? self.input_grad(2) : nullptr;
    std::vector<T> dcol(g_in ? rows * cols : 0);
    for (std::size_t n = 0; n < g.n; ++n) {
      ConstMatMap<T> dout(self.grad.data() + n * g.o * cols, g.o, cols);
      if (g_k) {
        MatMap<T>(g_k->data(), g.o, rows).noalias() +=
            dout * ConstMatMap<T>(col_store->data() + n * rows * cols, rows, cols).transpose();
      }
      if (g_in) {
        MatMap<T>(dcol.data(), rows, cols).noalias() = ConstMatMap<T>(kdata.data(), g.o, rows).transpose() * dout;
        col2im_add(dcol.data(), g, g_in->data() + n * g.c * g.h * g.w);
      }
      if (g_b) {
        for (std::size_t o = 0; o < g.o; ++o) {
          const T* p = self.grad.data() + (n * g.o + o) * cols;
          T acc = 0;
          for (std::size_t i = 0; i < cols; ++i) acc += p[i];
          (*g_b)[o] += acc;
        }
      }
    }
  };
  if (bias) return make_result<T>(std::move(out_shape), std::move(out), "conv2d", {input, kernel, *bias}, adjoint);
  return make_result<T>(std::move(out_shape), std::move(out), "conv2d", {input, kernel}, adjoint);
}

}  // namespace

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::size_t stride,
                      std::size_t padding) {
  return conv2d_impl<T>(input, kernel, nullptr, stride, padding);
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      std::size_t stride, std::size_t padding) {
  return conv2d_impl<T>(input, kernel, &bias, stride, padding);
}

// ---------------------------------------------------------------------------
// Pooling and resampling

template <class T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride) {
  require_rank(input, 4, "max_pool2d");
  if (window == 0 || stride == 0) throw ShapeError("max_pool2d: window and stride must be positive");
  const std::size_t N = input.extent(0), C = input.extent(1), H = input.extent(2), W = input.extent(3);
  if (window > H || window > W) {
    throw ShapeError("max_pool2d: window " + std::to_string(window) + " exceeds spatial extent of " +
                     shape_str(input.shape()));
  }
  const std::size_t Ho = (H - window) / stride + 1, Wo = (W - window) / stride + 1;
  std::vector<T> out(N * C * Ho * Wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  auto in = input.data();
  for (std::size_t p = 0; p < N * C; ++p) {
    const std::size_t base = p * H * W;
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::size_t best = base + oy * stride * W + ox * stride;
        for (std::size_t i = 0; i < window; ++i)
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = base + (oy * stride + i) * W + ox * stride + j;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (p * Ho + oy) * Wo + ox;
        out[o] = in[best];
        (*argmax)[o] = best;
      }
  }
  return make_result<T>({N, C, Ho, Wo}, std::move(out), "max_pool2d", {input}, [argmax](Node<T>& self) {
    if (auto* g = self.input_grad(0))
      for (std::size_t o = 0; o < argmax->size(); ++o) (*g)[(*argmax)[o]] += self.grad[o];
  });
}

template <class T>
BasicTensor<T> upsample_nearest2d(const BasicTensor<T>& input, std::size_t factor) {
  require_rank(input, 4, "upsample_nearest2d");
  if (factor == 0) throw ShapeError("upsample_nearest2d: factor must be positive");
  const std::size_t N = input.extent(0), C = input.extent(1), H = input.extent(2), W = input.extent(3);
  const std::size_t Ho = H * factor, Wo = W * factor;
  std::vector<T> out(N * C * Ho * Wo);
  auto in = input.data();
  for (std::size_t p = 0; p < N * C; ++p)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t x = 0; x < Wo; ++x) out[(p * Ho + y) * Wo + x] = in[(p * H + y / factor) * W + x / factor];
  return make_result<T>({N, C, Ho, Wo}, std::move(out), "upsample_nearest2d", {input},
                        [N, C, H, W, Ho, Wo, factor](Node<T>& self) {
                          if (auto* g = self.input_grad(0))
                            for (std::size_t p = 0; p < N * C; ++p)
                              for (std::size_t y = 0; y < Ho; ++y)
                                for (std::size_t x = 0; x < Wo; ++x)
                                  (*g)[(p * H + y / factor) * W + x / factor] += self.grad[(p * Ho + y) * Wo + x];
                        });
}

// ---------------------------------------------------------------------------
// Activations and reductions

template <class T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind) {
  require_defined(x, "activation");
  if (kind.kind == ActivationKind::leaky_relu && !(kind.slope > 0.0 && kind.slope < 1.0)) {
    throw DomainError("leaky_relu slope must lie in (0, 1)");
  }
  const T slope = static_cast<T>(kind.slope);
  std::vector<T> out(x.data().begin(), x.data().end());
  switch (kind.kind) {
    case ActivationKind::relu:
      for (auto& v : out) v = v > T(0) ? v : T(0);
      break;
    case ActivationKind::leaky_relu:
      for (auto& v : out) v = v > T(0) ? v : slope * v;
      break;
    case ActivationKind::sigmoid:
      for (auto& v : out) v = stable_sigmoid(v);
      break;
    case ActivationKind::tanh:
      for (auto& v : out) v = std::tanh(v);
      break;
  }
  static constexpr std::string_view names[] = {"relu", "leaky_relu", "sigmoid", "tanh"};
  return make_result<T>(x.shape(), std::move(out), names[static_cast<int>(kind.kind)], {x},
                        [k = kind.kind, slope](Node<T>& self) {
                          auto* g = self.input_grad(0);
                          if (!g) return;
                          const auto& in = self.inputs[0]->data;
                          const auto& y = self.data;
                          for (std::size_t i = 0; i < g->size(); ++i) {
                            T d = 0;
                            switch (k) {
                              case ActivationKind::relu: d = in[i] > T(0) ? T(1) : T(0); break;
                              case ActivationKind::leaky_relu: d = in[i] > T(0) ? T(1) : slope; break;
                              case ActivationKind::sigmoid: d = y[i] * (T(1) - y[i]); break;
                              case ActivationKind::tanh: d = T(1) - y[i] * y[i]; break;
                            }
                            (*g)[i] += d * self.grad[i];
                          }
                        });
}

template <class T>
BasicTensor<T> reduce(const BasicTensor<T>& x, Reduction kind) {
  if (!x.defined() || x.numel() == 0) throw DomainError("reduce: empty tensor");
  double acc = 0.0;
  for (T v : x.data()) acc += static_cast<double>(v);
  const std::size_t n = x.numel();
  if (kind == Reduction::mean) acc /= static_cast<double>(n);
  const T factor = kind == Reduction::mean ? T(1) / static_cast<T>(n) : T(1);
  return make_result<T>(Shape{}, std::vector<T>{static_cast<T>(acc)}, kind == Reduction::sum ? "sum" : "mean", {x},
                        [factor](Node<T>& self) {
                          if (auto* g = self.input_grad(0)) {
                            const T d = self.grad[0] * factor;
                            for (auto& v : *g) v += d;
                          }
                        });
}

// ---------------------------------------------------------------------------
// Layout

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), "reshape", {x}, [](Node<T>& self) {
    if (auto* g = self.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

template <class T>
BasicTensor<T> flatten(const BasicTensor<T>& x) {
  require_defined(x, "flatten");
  if (x.rank() < 1) throw ShapeError("flatten: needs a batch axis");
  const std::size_t n = x.extent(0);
  return reshape(x, Shape{n, x.numel() / n});
}

template <class T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.extent(0) != b.extent(0) || a.extent(2) != b.extent(2) || a.extent(3) != b.extent(3)) {
    throw ShapeError("concat_channels: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ outside the channel axis");
  }
  const std::size_t N = a.extent(0), Ca = a.extent(1), Cb = b.extent(1);
  const std::size_t plane = a.extent(2) * a.extent(3);
  std::vector<T> out(N * (Ca + Cb) * plane);
  auto x = a.data(), y = b.data();
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(x.data() + n * Ca * plane, Ca * plane, out.data() + n * (Ca + Cb) * plane);
    std::copy_n(y.data() + n * Cb * plane, Cb * plane, out.data() + (n * (Ca + Cb) + Ca) * plane);
  }
  return make_result<T>({N, Ca + Cb, a.extent(2), a.extent(3)}, std::move(out), "concat_channels", {a, b},
                        [N, Ca, Cb, plane](Node<T>& self) {
                          for (std::size_t n = 0; n < N; ++n) {
                            const T* src = self.grad.data() + n * (Ca + Cb) * plane;
                            if (auto* g = self.input_grad(0))
                              for (std::size_t i = 0; i < Ca * plane; ++i) (*g)[n * Ca * plane + i] += src[i];
                            if (auto* g = self.input_grad(1))
                              for (std::size_t i = 0; i < Cb * plane; ++i)
                                (*g)[n * Cb * plane + i] += src[Ca * plane + i];
                          }
                        });
}

template <class T>
BasicTensor<T> mask_channels(const BasicTensor<T>& x, const BasicTensor<T>& mask) {
  require_rank(x, 4, "mask_channels");
  require_rank(mask, 4, "mask_channels");
  if (mask.extent(0) != x.extent(0) || mask.extent(1) != 1 || mask.extent(2) != x.extent(2) ||
      mask.extent(3) != x.extent(3)) {
    throw ShapeError("mask_channels: mask " + shape_str(mask.shape()) + " incompatible with " + shape_str(x.shape()));
  }
  const std::size_t N = x.extent(0), C = x.extent(1), plane = x.extent(2) * x.extent(3);
  std::vector<T> out(x.numel());
  auto xv = x.data(), m = mask.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t idx = (n * C + c) * plane + i;
        out[idx] = xv[idx] * m[n * plane + i];
      }
  return make_result<T>(x.shape(), std::move(out), "mask_channels", {x, mask}, [N, C, plane](Node<T>& self) {
    const auto& xv = self.inputs[0]->data;
    const auto& m = self.inputs[1]->data;
    auto* gx = self.input_grad(0);
    auto* gm = self.input_grad(1);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t idx = (n * C + c) * plane + i;
          if (gx) (*gx)[idx] += m[n * plane + i] * self.grad[idx];
          if (gm) (*gm)[n * plane + i] += xv[idx] * self.grad[idx];
        }
  });
}

// ---------------------------------------------------------------------------
// Losses

template <class T>
BasicTensor<T> pairwise_distance(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "pairwise_distance");
  require_same_shape(a, b, "pairwise_distance");
  const std::size_t N = a.extent(0), F = a.extent(1);
  std::vector<T> out(N);
  auto x = a.data(), y = b.data();
  for (std::size_t n = 0; n < N; ++n) {
    double acc = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      const double d = static_cast<double>(x[n * F + f]) - static_cast<double>(y[n * F + f]);
      acc += d * d;
    }
    out[n] = static_cast<T>(std::sqrt(acc));
  }
  return make_result<T>({N}, std::move(out), "pairwise_distance", {a, b}, [N, F](Node<T>& self) {
    const auto& x = self.inputs[0]->data;
    const auto& y = self.inputs[1]->data;
    auto* ga = self.input_grad(0);
    auto* gb = self.input_grad(1);
    for (std::size_t n = 0; n < N; ++n) {
      const T d = self.data[n];
      if (d == T(0)) continue;
      const T k = self.grad[n] / d;
      for (std::size_t f = 0; f < F; ++f) {
        const T diff = x[n * F + f] - y[n * F + f];
        if (ga) (*ga)[n * F + f] += k * diff;
        if (gb) (*gb)[n * F + f] -= k * diff;
      }
    }
  });
}

template <class T>
BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const T> targets) {
  require_defined(logits, "bce_with_logits");
  if (targets.size() != logits.numel()) {
    throw ShapeError("bce_with_logits: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.numel()) + " logits");
  }
  if (targets.empty()) throw DomainError("bce_with_logits: empty batch");
  const std::size_t n = targets.size();
  auto z = logits.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = z[i], t = targets[i];
    acc += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  std::vector<T> tgt(targets.begin(), targets.end());
  return make_result<T>(Shape{}, std::vector<T>{static_cast<T>(acc / static_cast<double>(n))}, "bce_with_logits",
                        {logits}, [tgt = std::move(tgt)](Node<T>& self) {
                          auto* g = self.input_grad(0);
                          if (!g) return;
                          const auto& z = self.inputs[0]->data;
                          const T k = self.grad[0] / static_cast<T>(tgt.size());
                          for (std::size_t i = 0; i < tgt.size(); ++i) (*g)[i] += k * (stable_sigmoid(z[i]) - tgt[i]);
                        });
}

template <class T>
BasicTensor<T> clamp_values(const BasicTensor<T>& x, T lo, T hi) {
  require_defined(x, "clamp_values");
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::clamp(v, lo, hi);
  return BasicTensor<T>::from(x.shape(), std::move(out));
}

// ---------------------------------------------------------------------------

#define OSXR_INSTANTIATE_OPS(T)                                                                                \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                   \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                                   \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                   \
  template BasicTensor<T> scale(const BasicTensor<T>&, double);                                                \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, double);                                           \
  template BasicTensor<T> abs(const BasicTensor<T>&);                                                          \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                                \
  template BasicTensor<T> bias_add(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t, std::size_t);      \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,          \
                                 std::size_t, std::size_t);                                                    \
  template BasicTensor<T> max_pool2d(const BasicTensor<T>&, std::size_t, std::size_t);                         \
  template BasicTensor<T> upsample_nearest2d(const BasicTensor<T>&, std::size_t);                              \
  template BasicTensor<T> activation(const BasicTensor<T>&, Activation);                                       \
  template BasicTensor<T> reduce(const BasicTensor<T>&, Reduction);                                            \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                               \
  template BasicTensor<T> flatten(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> mask_channels(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> pairwise_distance(const BasicTensor<T>&, const BasicTensor<T>&);                     \
  template BasicTensor<T> bce_with_logits(const BasicTensor<T>&, std::span<const T>);                          \
  template BasicTensor<T> clamp_values(const BasicTensor<T>&, T, T);

OSXR_INSTANTIATE_OPS(float)
OSXR_INSTANTIATE_OPS(double)

#undef OSXR_INSTANTIATE_OPS

}  // namespace osxr
