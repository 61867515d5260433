// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ppgnas::ops {

namespace {

template <typename T>
using Node = typename BasicTensor<T>::Node;

template <typename T>
void require_rank(const BasicTensor<T>& x, std::size_t rank, const char* op) {
  if (!x.defined() || x.ndim() != rank) {
    fail(ErrorKind::kShape, std::string(op) + ": expected rank-" + std::to_string(rank) + " tensor, got " +
                                (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
  }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::kShape, std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

// Range of output positions lo for which lo*stride - pad + k lies in [0, len).
inline void valid_range(std::size_t k, std::size_t stride, std::size_t pad, std::size_t len,
                        std::size_t out_len, std::size_t& lo_begin, std::size_t& lo_end) {
  // need lo*stride + k >= pad  and  lo*stride + k < len + pad
  lo_begin = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  const std::size_t lim = len + pad;  // lo*stride + k < lim
  lo_end = k >= lim ? 0 : std::min(out_len, (lim - k - 1) / stride + 1);
  if (lo_begin > lo_end) lo_begin = lo_end;
}

}  // namespace

std::size_t window_out_len(std::size_t len, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0 || kernel == 0) fail(ErrorKind::kGeometry, "kernel and stride must be >= 1");
  if (kernel > len + 2 * padding) {
    fail(ErrorKind::kGeometry, "kernel " + std::to_string(kernel) + " exceeds padded length " +
                                   std::to_string(len + 2 * padding));
  }
  return (len + 2 * padding - kernel) / stride + 1;
}

template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias,
                      std::size_t stride, std::size_t padding) {
  require_rank(x, 3, "conv1d input");
  require_rank(w, 3, "conv1d weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    fail(ErrorKind::kShape, "conv1d: input has " + std::to_string(cin) + " channels, weight expects " +
                                std::to_string(w.dim(1)));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != cout)) {
    fail(ErrorKind::kShape, "conv1d: bias shape " + shape_str(bias.shape()) + " for " + std::to_string(cout) +
                                " output channels");
  }
  const std::size_t lout = window_out_len(len, k, stride, padding);

  std::vector<T> out(n * cout * lout, T(0));
  const auto xd = x.data();
  const auto wd = w.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      T* y = out.data() + (b * cout + co) * lout;
      if (bias.defined()) std::fill(y, y + lout, bias.data()[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* xr = xd.data() + (b * cin + ci) * len;
        const T* wr = wd.data() + (co * cin + ci) * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
          std::size_t lb, le;
          valid_range(kk, stride, padding, len, lout, lb, le);
          const T wv = wr[kk];
          for (std::size_t lo = lb; lo < le; ++lo) y[lo] += wv * xr[lo * stride + kk - padding];
        }
      }
    }
  }

  std::vector<BasicTensor<T>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return BasicTensor<T>::make_result(
      {n, cout, lout}, std::move(out), std::move(parents),
      [=](Node<T>& self) {
        const auto& gy = self.grad;
        Node<T>& px = *self.parents[0];
        Node<T>& pw = *self.parents[1];
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& gb = self.parents[2]->grad_buffer();
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t co = 0; co < cout; ++co) {
              const T* g = gy.data() + (b * cout + co) * lout;
              T acc = 0;
              for (std::size_t lo = 0; lo < lout; ++lo) acc += g[lo];
              gb[co] += acc;
            }
        }
        T* gx = px.requires_grad ? px.grad_buffer().data() : nullptr;
        T* gw = pw.requires_grad ? pw.grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t co = 0; co < cout; ++co) {
            const T* g = gy.data() + (b * cout + co) * lout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const T* xr = px.data.data() + (b * cin + ci) * len;
              const T* wr = pw.data.data() + (co * cin + ci) * k;
              for (std::size_t kk = 0; kk < k; ++kk) {
                std::size_t lb, le;
                valid_range(kk, stride, padding, len, lout, lb, le);
                if (gw) {
                  T acc = 0;
                  for (std::size_t lo = lb; lo < le; ++lo) acc += g[lo] * xr[lo * stride + kk - padding];
                  gw[(co * cin + ci) * k + kk] += acc;
                }
                if (gx) {
                  T* gxr = gx + (b * cin + ci) * len;
                  const T wv = wr[kk];
                  for (std::size_t lo = lb; lo < le; ++lo) gxr[lo * stride + kk - padding] += wv * g[lo];
                }
              }
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> depthwise_conv1d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& bias, std::size_t stride, std::size_t padding) {
  require_rank(x, 3, "depthwise_conv1d input");
  require_rank(w, 3, "depthwise_conv1d weight");
  const std::size_t n = x.dim(0), c = x.dim(1), len = x.dim(2);
  const std::size_t k = w.dim(2);
  if (w.dim(0) != c || w.dim(1) != 1) {
    fail(ErrorKind::kShape, "depthwise_conv1d: weight " + shape_str(w.shape()) + " for " + std::to_string(c) +
                                " channels (expected [C,1,K])");
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != c)) {
    fail(ErrorKind::kShape, "depthwise_conv1d: bias shape " + shape_str(bias.shape()));
  }
  const std::size_t lout = window_out_len(len, k, stride, padding);

  std::vector<T> out(n * c * lout, T(0));
  const auto xd = x.data();
  const auto wd = w.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      T* y = out.data() + (b * c + ch) * lout;
      if (bias.defined()) std::fill(y, y + lout, bias.data()[ch]);
      const T* xr = xd.data() + (b * c + ch) * len;
      for (std::size_t kk = 0; kk < k; ++kk) {
        std::size_t lb, le;
        valid_range(kk, stride, padding, len, lout, lb, le);
        const T wv = wd[ch * k + kk];
        for (std::size_t lo = lb; lo < le; ++lo) y[lo] += wv * xr[lo * stride + kk - padding];
      }
    }
  }

  std::vector<BasicTensor<T>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return BasicTensor<T>::make_result(
      {n, c, lout}, std::move(out), std::move(parents),
      [=](Node<T>& self) {
        const auto& gy = self.grad;
        Node<T>& px = *self.parents[0];
        Node<T>& pw = *self.parents[1];
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& gb = self.parents[2]->grad_buffer();
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const T* g = gy.data() + (b * c + ch) * lout;
              T acc = 0;
              for (std::size_t lo = 0; lo < lout; ++lo) acc += g[lo];
              gb[ch] += acc;
            }
        }
        T* gx = px.requires_grad ? px.grad_buffer().data() : nullptr;
        T* gw = pw.requires_grad ? pw.grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const T* g = gy.data() + (b * c + ch) * lout;
            const T* xr = px.data.data() + (b * c + ch) * len;
            for (std::size_t kk = 0; kk < k; ++kk) {
              std::size_t lb, le;
              valid_range(kk, stride, padding, len, lout, lb, le);
              if (gw) {
                T acc = 0;
                for (std::size_t lo = lb; lo < le; ++lo) acc += g[lo] * xr[lo * stride + kk - padding];
                gw[ch * k + kk] += acc;
              }
              if (gx) {
                T* gxr = gx + (b * c + ch) * len;
                const T wv = pw.data[ch * k + kk];
                for (std::size_t lo = lb; lo < le; ++lo) gxr[lo * stride + kk - padding] += wv * g[lo];
              }
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias) {
  require_rank(x, 3, "linear input");
  require_rank(w, 2, "linear weight");
  const std::size_t n = x.dim(0), in = x.dim(1), out_f = w.dim(0);
  if (x.dim(2) != 1) fail(ErrorKind::kShape, "linear: input length must be 1, got " + shape_str(x.shape()));
  if (w.dim(1) != in) {
    fail(ErrorKind::kShape, "linear: weight " + shape_str(w.shape()) + " for " + std::to_string(in) + " features");
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != out_f)) {
    fail(ErrorKind::kShape, "linear: bias shape " + shape_str(bias.shape()));
  }
  std::vector<T> out(n * out_f);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < out_f; ++o) {
      T acc = bias.defined() ? bias.data()[o] : T(0);
      for (std::size_t i = 0; i < in; ++i) acc += w.data()[o * in + i] * x.data()[b * in + i];
      out[b * out_f + o] = acc;
    }
  std::vector<BasicTensor<T>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return BasicTensor<T>::make_result({n, out_f, 1}, std::move(out), std::move(parents), [=](Node<T>& self) {
    const auto& gy = self.grad;
    Node<T>& px = *self.parents[0];
    Node<T>& pw = *self.parents[1];
    if (px.requires_grad) {
      auto& gx = px.grad_buffer();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < out_f; ++o)
          for (std::size_t i = 0; i < in; ++i) gx[b * in + i] += pw.data[o * in + i] * gy[b * out_f + o];
    }
    if (pw.requires_grad) {
      auto& gw = pw.grad_buffer();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < out_f; ++o)
          for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += px.data[b * in + i] * gy[b * out_f + o];
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& gb = self.parents[2]->grad_buffer();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < out_f; ++o) gb[o] += gy[b * out_f + o];
    }
  });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  return BasicTensor<T>::make_result(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    auto& gx = px.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (px.data[i] > T(0)) gx[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return BasicTensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return BasicTensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return BasicTensor<T>::make_result(x.shape(), std::move(out), {x}, [factor](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T value) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + value;
  return BasicTensor<T>::make_result(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return BasicTensor<T>::make_result({1}, {acc}, {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
BasicTensor<T> mse(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  require_same_shape(pred, target, "mse");
  const std::size_t count = pred.numel();
  T acc = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const T d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  const BasicTensor<T> tgt = target.detach();
  return BasicTensor<T>::make_result({1}, {acc / static_cast<T>(count)}, {pred}, [tgt, count](Node<T>& self) {
    Node<T>& pp = *self.parents[0];
    auto& g = pp.grad_buffer();
    const T f = T(2) * self.grad[0] / static_cast<T>(count);
    for (std::size_t i = 0; i < count; ++i) g[i] += f * (pp.data[i] - tgt.data()[i]);
  });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    fail(ErrorKind::kShape, "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return BasicTensor<T>::make_result(std::move(shape), std::move(out), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 3, "concat");
  require_rank(b, 3, "concat");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    fail(ErrorKind::kShape, "concat: non-channel dims differ " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), len = a.dim(2);
  std::vector<T> out(n * (ca + cb) * len);
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(a.data().data() + s * ca * len, ca * len, out.data() + s * (ca + cb) * len);
    std::copy_n(b.data().data() + s * cb * len, cb * len, out.data() + (s * (ca + cb) + ca) * len);
  }
  return BasicTensor<T>::make_result({n, ca + cb, len}, std::move(out), {a, b}, [=](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    for (std::size_t s = 0; s < n; ++s) {
      const T* g = self.grad.data() + s * (ca + cb) * len;
      if (pa.requires_grad) {
        T* ga = pa.grad_buffer().data() + s * ca * len;
        for (std::size_t i = 0; i < ca * len; ++i) ga[i] += g[i];
      }
      if (pb.requires_grad) {
        T* gb = pb.grad_buffer().data() + s * cb * len;
        for (std::size_t i = 0; i < cb * len; ++i) gb[i] += g[ca * len + i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> max_pool1d(const BasicTensor<T>& x, std::size_t kernel, std::size_t stride) {
  require_rank(x, 3, "max_pool1d");
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  const std::size_t lout = window_out_len(len, kernel, stride, 0);
  std::vector<T> out(rows * lout);
  std::vector<std::size_t> argmax(rows * lout);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t lo = 0; lo < lout; ++lo) {
      std::size_t best = r * len + lo * stride;
      for (std::size_t kk = 1; kk < kernel; ++kk) {
        const std::size_t idx = r * len + lo * stride + kk;
        if (x.data()[idx] > x.data()[best]) best = idx;
      }
      out[r * lout + lo] = x.data()[best];
      argmax[r * lout + lo] = best;
    }
  Shape shape{x.dim(0), x.dim(1), lout};
  return BasicTensor<T>::make_result(std::move(shape), std::move(out), {x},
                                     [argmax = std::move(argmax)](Node<T>& self) {
                                       auto& g = self.parents[0]->grad_buffer();
                                       for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
                                     });
}

template <typename T>
BasicTensor<T> avg_pool1d(const BasicTensor<T>& x, std::size_t kernel, std::size_t stride) {
  require_rank(x, 3, "avg_pool1d");
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  const std::size_t lout = window_out_len(len, kernel, stride, 0);
  const T inv = T(1) / static_cast<T>(kernel);
  std::vector<T> out(rows * lout);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t lo = 0; lo < lout; ++lo) {
      T acc = 0;
      for (std::size_t kk = 0; kk < kernel; ++kk) acc += x.data()[r * len + lo * stride + kk];
      out[r * lout + lo] = acc * inv;
    }
  Shape shape{x.dim(0), x.dim(1), lout};
  return BasicTensor<T>::make_result(std::move(shape), std::move(out), {x}, [=](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t lo = 0; lo < lout; ++lo) {
        const T gv = self.grad[r * lout + lo] * inv;
        for (std::size_t kk = 0; kk < kernel; ++kk) g[r * len + lo * stride + kk] += gv;
      }
  });
}

template <typename T>
BasicTensor<T> upsample2(const BasicTensor<T>& x) {
  require_rank(x, 3, "upsample2");
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  std::vector<T> out(rows * len * 2);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t l = 0; l < 2 * len; ++l) out[r * 2 * len + l] = x.data()[r * len + l / 2];
  Shape shape{x.dim(0), x.dim(1), 2 * len};
  return BasicTensor<T>::make_result(std::move(shape), std::move(out), {x}, [=](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t l = 0; l < 2 * len; ++l) g[r * len + l / 2] += self.grad[r * 2 * len + l];
  });
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  require_rank(x, 3, "global_avg_pool");
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  const T inv = T(1) / static_cast<T>(len);
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t l = 0; l < len; ++l) acc += x.data()[r * len + l];
    out[r] = acc * inv;
  }
  Shape shape{x.dim(0), x.dim(1), 1};
  return BasicTensor<T>::make_result(std::move(shape), std::move(out), {x}, [=](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t l = 0; l < len; ++l) g[r * len + l] += self.grad[r] * inv;
  });
}

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BatchNormStats<T>& stats, bool training) {
  require_rank(x, 3, "batch_norm");
  const std::size_t n = x.dim(0), c = x.dim(1), len = x.dim(2);
  if (gamma.numel() != c || beta.numel() != c || stats.running_mean.size() != c ||
      stats.running_var.size() != c) {
    fail(ErrorKind::kShape, "batch_norm: parameters do not match " + std::to_string(c) + " channels");
  }
  const std::size_t m = n * len;
  std::vector<T> mu(c), inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      T s = 0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t l = 0; l < len; ++l) s += x.data()[(b * c + ch) * len + l];
      const T mean_v = s / static_cast<T>(m);
      T v = 0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t l = 0; l < len; ++l) {
          const T d = x.data()[(b * c + ch) * len + l] - mean_v;
          v += d * d;
        }
      const T var_b = v / static_cast<T>(m);
      mu[ch] = mean_v;
      inv_std[ch] = T(1) / std::sqrt(var_b + stats.eps);
      const T unbiased = m > 1 ? v / static_cast<T>(m - 1) : var_b;
      stats.running_mean[ch] = (T(1) - stats.momentum) * stats.running_mean[ch] + stats.momentum * mean_v;
      stats.running_var[ch] = (T(1) - stats.momentum) * stats.running_var[ch] + stats.momentum * unbiased;
    } else {
      mu[ch] = stats.running_mean[ch];
      inv_std[ch] = T(1) / std::sqrt(stats.running_var[ch] + stats.eps);
    }
  }
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t i = (b * c + ch) * len + l;
        xhat[i] = (x.data()[i] - mu[ch]) * inv_std[ch];
        out[i] = gamma.data()[ch] * xhat[i] + beta.data()[ch];
      }
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        Node<T>& px = *self.parents[0];
        Node<T>& pg = *self.parents[1];
        Node<T>& pb = *self.parents[2];
        const auto& g = self.grad;
        std::vector<T> sum_g(c, T(0)), sum_gx(c, T(0));
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t l = 0; l < len; ++l) {
              const std::size_t i = (b * c + ch) * len + l;
              sum_g[ch] += g[i];
              sum_gx[ch] += g[i] * xhat[i];
            }
        if (pg.requires_grad) {
          auto& gg = pg.grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_gx[ch];
        }
        if (pb.requires_grad) {
          auto& gb = pb.grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_g[ch];
        }
        if (px.requires_grad) {
          auto& gx = px.grad_buffer();
          const T inv_m = T(1) / static_cast<T>(m);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const T gam = pg.data[ch];
              for (std::size_t l = 0; l < len; ++l) {
                const std::size_t i = (b * c + ch) * len + l;
                if (training) {
                  gx[i] += gam * inv_std[ch] * (g[i] - inv_m * sum_g[ch] - xhat[i] * inv_m * sum_gx[ch]);
                } else {
                  gx[i] += gam * inv_std[ch] * g[i];
                }
              }
            }
        }
      });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank(logits, 1, "softmax");
  const std::size_t k = logits.numel();
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : logits.data()) mx = std::max(mx, v);
  std::vector<T> out(k);
  T z = 0;
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = std::exp(logits.data()[i] - mx);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return BasicTensor<T>::make_result({k}, out, {logits}, [k, out](Node<T>& self) {
    T dot = 0;
    for (std::size_t i = 0; i < k; ++i) dot += self.grad[i] * out[i];
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < k; ++i) g[i] += out[i] * (self.grad[i] - dot);
  });
}

template <typename T>
BasicTensor<T> weighted_sum(const std::vector<BasicTensor<T>>& ys, const BasicTensor<T>& weights) {
  require_rank(weights, 1, "weighted_sum weights");
  if (ys.empty() || ys.size() != weights.numel()) {
    fail(ErrorKind::kShape, "weighted_sum: " + std::to_string(ys.size()) + " inputs for " +
                                std::to_string(weights.numel()) + " weights");
  }
  for (const auto& y : ys) require_same_shape(ys.front(), y, "weighted_sum");
  const std::size_t count = ys.front().numel();
  std::vector<T> out(count, T(0));
  for (std::size_t j = 0; j < ys.size(); ++j) {
    const T wj = weights.data()[j];
    const auto yd = ys[j].data();
    for (std::size_t i = 0; i < count; ++i) out[i] += wj * yd[i];
  }
  std::vector<BasicTensor<T>> parents(ys);
  parents.push_back(weights);
  const std::size_t k = ys.size();
  return BasicTensor<T>::make_result(ys.front().shape(), std::move(out), std::move(parents),
                                     [k, count](Node<T>& self) {
                                       Node<T>& pw = *self.parents[k];
                                       for (std::size_t j = 0; j < k; ++j) {
                                         Node<T>& py = *self.parents[j];
                                         if (py.requires_grad) {
                                           auto& g = py.grad_buffer();
                                           const T wj = pw.data[j];
                                           for (std::size_t i = 0; i < count; ++i) g[i] += wj * self.grad[i];
                                         }
                                         if (pw.requires_grad) {
                                           T acc = 0;
                                           for (std::size_t i = 0; i < count; ++i) acc += self.grad[i] * py.data[i];
                                           pw.grad_buffer()[j] += acc;
                                         }
                                       }
                                     });
}

template <typename T>
BasicTensor<T> dot_const(const BasicTensor<T>& v, std::span<const T> coeffs) {
  if (coeffs.size() != v.numel()) fail(ErrorKind::kShape, "dot_const: coefficient count mismatch");
  T acc = 0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) acc += v.data()[i] * coeffs[i];
  std::vector<T> c(coeffs.begin(), coeffs.end());
  return BasicTensor<T>::make_result({1}, {acc}, {v}, [c = std::move(c)](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < c.size(); ++i) g[i] += self.grad[0] * c[i];
  });
}

#define PPGNAS_INSTANTIATE_OPS(T)                                                                              \
  template BasicTensor<T> conv1d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,         \
                                 std::size_t, std::size_t);                                                    \
  template BasicTensor<T> depthwise_conv1d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                           std::size_t, std::size_t);                                          \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                         \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                   \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                   \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                     \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                                \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                          \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                         \
  template BasicTensor<T> mse(const BasicTensor<T>&, const BasicTensor<T>&);                                   \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                               \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> max_pool1d(const BasicTensor<T>&, std::size_t, std::size_t);                         \
  template BasicTensor<T> avg_pool1d(const BasicTensor<T>&, std::size_t, std::size_t);                         \
  template BasicTensor<T> upsample2(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                              \
  template BasicTensor<T> batch_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,      \
                                     BatchNormStats<T>&, bool);                                                \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> weighted_sum(const std::vector<BasicTensor<T>>&, const BasicTensor<T>&);             \
  template BasicTensor<T> dot_const(const BasicTensor<T>&, std::span<const T>);

PPGNAS_INSTANTIATE_OPS(float)
PPGNAS_INSTANTIATE_OPS(double)

}  // namespace ppgnas::ops
