#pragma once

// Dense NCHW tensors with a reverse-mode tape. Convolutions run as
// im2col + Eigen GEMM; everything else is straightforward elementwise or
// per-channel arithmetic. Ops record their backward closure on the tape in
// forward order, so replaying the tape in reverse is a valid reverse
// topological order.

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <vector>

#include "uwf/common.hpp"

namespace uwf {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily by the backward pass
  bool requires_grad = false;
  bool leaf = true;

  std::size_t size() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
  void zero_grad() { grad.assign(value.size(), T(0)); }
  bool wants_grad() const { return requires_grad || !leaf; }
};

template <typename T>
using TensorPtr = std::shared_ptr<Node<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape shape, bool requires_grad = false) {
  auto t = std::make_shared<Node<T>>();
  t->shape = std::move(shape);
  t->value.assign(numel(t->shape), T(0));
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> values,
                         bool requires_grad = false) {
  auto t = make_tensor<T>(std::move(shape), requires_grad);
  if (values.size() != t->value.size())
    throw ShapeError("value count does not match shape " +
                     shape_str(t->shape));
  t->value = std::move(values);
  return t;
}

template <typename T>
using MatRM =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

template <typename T>
class Tape {
 public:
  TensorPtr<T> result(Shape shape) {
    auto t = make_tensor<T>(std::move(shape));
    t->leaf = false;
    return t;
  }

  void record(std::function<void()> backward_op) {
    ops_.push_back(std::move(backward_op));
  }

  void backward(const TensorPtr<T>& loss) {
    if (loss->size() != 1)
      throw ContractError("backward requires a scalar loss, got shape " +
                          shape_str(loss->shape));
    loss->ensure_grad();
    loss->grad[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void clear() { ops_.clear(); }
  std::size_t num_ops() const { return ops_.size(); }

  // -------------------------------------------------------------------------
  // Elementwise / structural primitives
  // -------------------------------------------------------------------------

  TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape)
      throw ShapeError("add: shape mismatch " + shape_str(a->shape) + " vs " +
                       shape_str(b->shape));
    auto y = result(a->shape);
    for (std::size_t i = 0; i < y->size(); ++i)
      y->value[i] = a->value[i] + b->value[i];
    record([a, b, y]() {
      if (a->wants_grad()) {
        a->ensure_grad();
        for (std::size_t i = 0; i < y->size(); ++i) a->grad[i] += y->grad[i];
      }
      if (b->wants_grad()) {
        b->ensure_grad();
        for (std::size_t i = 0; i < y->size(); ++i) b->grad[i] += y->grad[i];
      }
    });
    return y;
  }

  TensorPtr<T> scale(const TensorPtr<T>& x, T c) {
    auto y = result(x->shape);
    for (std::size_t i = 0; i < y->size(); ++i) y->value[i] = c * x->value[i];
    record([x, y, c]() {
      if (!x->wants_grad()) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < y->size(); ++i)
        x->grad[i] += c * y->grad[i];
    });
    return y;
  }

  TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape) throw ShapeError("mul: shape mismatch");
    auto y = result(a->shape);
    for (std::size_t i = 0; i < y->size(); ++i)
      y->value[i] = a->value[i] * b->value[i];
    record([a, b, y]() {
      if (a->wants_grad()) {
        a->ensure_grad();
        for (std::size_t i = 0; i < y->size(); ++i)
          a->grad[i] += b->value[i] * y->grad[i];
      }
      if (b->wants_grad()) {
        b->ensure_grad();
        for (std::size_t i = 0; i < y->size(); ++i)
          b->grad[i] += a->value[i] * y->grad[i];
      }
    });
    return y;
  }

  TensorPtr<T> relu(const TensorPtr<T>& x) {
    auto y = result(x->shape);
    for (std::size_t i = 0; i < y->size(); ++i)
      y->value[i] = x->value[i] > T(0) ? x->value[i] : T(0);
    record([x, y]() {
      if (!x->wants_grad()) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < y->size(); ++i)
        if (x->value[i] > T(0)) x->grad[i] += y->grad[i];
    });
    return y;
  }

  // x: [N, F], alpha: [F]; y = max(0,x) + alpha * min(0,x)
  TensorPtr<T> prelu(const TensorPtr<T>& x, const TensorPtr<T>& alpha) {
    if (x->shape.size() != 2)
      throw ShapeError("prelu expects a 2-d feature tensor");
    const int n = x->shape[0], f = x->shape[1];
    if (alpha->shape != Shape{f})
      throw ShapeError("prelu: alpha length " + shape_str(alpha->shape) +
                       " does not match feature count " + std::to_string(f));
    auto y = result(x->shape);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < f; ++j) {
        T v = x->value[i * f + j];
        y->value[i * f + j] = v > T(0) ? v : alpha->value[j] * v;
      }
    record([x, alpha, y, n, f]() {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < f; ++j) {
          T v = x->value[i * f + j];
          T g = y->grad[i * f + j];
          if (x->wants_grad()) {
            x->ensure_grad();
            x->grad[i * f + j] += (v > T(0) ? T(1) : alpha->value[j]) * g;
          }
          if (alpha->wants_grad()) {
            alpha->ensure_grad();
            if (v < T(0)) alpha->grad[j] += v * g;
          }
        }
    });
    return y;
  }

  TensorPtr<T> sigmoid(const TensorPtr<T>& x) {
    auto y = result(x->shape);
    const T lo = std::numeric_limits<T>::epsilon();
    const T hi = T(1) - lo;
    for (std::size_t i = 0; i < y->size(); ++i) {
      T v = x->value[i];
      T s = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                      : std::exp(v) / (T(1) + std::exp(v));
      y->value[i] = std::min(hi, std::max(lo, s));
    }
    record([x, y]() {
      if (!x->wants_grad()) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < y->size(); ++i) {
        T s = y->value[i];
        x->grad[i] += s * (T(1) - s) * y->grad[i];
      }
    });
    return y;
  }

  TensorPtr<T> sum(const TensorPtr<T>& x) {
    auto y = result(Shape{1});
    T acc = T(0);
    for (T v : x->value) acc += v;
    y->value[0] = acc;
    record([x, y]() {
      if (!x->wants_grad()) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += y->grad[0];
    });
    return y;
  }

  TensorPtr<T> select(const TensorPtr<T>& x, std::size_t flat_index) {
    if (flat_index >= x->size())
      throw ContractError("select: index out of range");
    auto y = result(Shape{1});
    y->value[0] = x->value[flat_index];
    record([x, y, flat_index]() {
      if (!x->wants_grad()) return;
      x->ensure_grad();
      x->grad[flat_index] += y->grad[0];
    });
    return y;
  }

  TensorPtr<T> dropout(const TensorPtr<T>& x, double p, Rng& rng,
                       bool train) {
    if (!train || p <= 0.0) return x;
    auto y = result(x->shape);
    auto mask = std::make_shared<std::vector<T>>(x->size());
    const T keep_scale = T(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < x->size(); ++i) {
      (*mask)[i] = rng.bernoulli(p) ? T(0) : keep_scale;
      y->value[i] = x->value[i] * (*mask)[i];
    }
    record([x, y, mask]() {
      if (!x->wants_grad()) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < x->size(); ++i)
        x->grad[i] += (*mask)[i] * y->grad[i];
    });
    return y;
  }

  // -------------------------------------------------------------------------
  // conv2d: x [N,Cin,H,W], w [Cout,Cin,kh,kw], optional bias [Cout]
  // -------------------------------------------------------------------------

  TensorPtr<T> conv2d(const TensorPtr<T>& x, const TensorPtr<T>& w,
                      const TensorPtr<T>& bias, int stride, int pad) {
    if (x->shape.size() != 4 || w->shape.size() != 4)
      throw ShapeError("conv2d expects 4-d input and weight");
    const int n = x->shape[0], cin = x->shape[1], h = x->shape[2],
              wd = x->shape[3];
    const int cout = w->shape[0], kh = w->shape[2], kw = w->shape[3];
    if (w->shape[1] != cin)
      throw ShapeError("conv2d: weight input channels " +
                       std::to_string(w->shape[1]) + " != " +
                       std::to_string(cin));
    if (bias && bias->shape != Shape{cout})
      throw ShapeError("conv2d: bias shape mismatch");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    const int k = cin * kh * kw, m = ho * wo;

    auto y = result(Shape{n, cout, ho, wo});
    // One im2col buffer for the whole batch, kept alive for backward.
    auto cols = std::make_shared<std::vector<T>>(
        static_cast<std::size_t>(n) * k * m);

    CMapRM<T> wm(w->value.data(), cout, k);
    for (int s = 0; s < n; ++s) {
      T* col = cols->data() + static_cast<std::size_t>(s) * k * m;
      im2col(x->value.data() + static_cast<std::size_t>(s) * cin * h * wd,
             cin, h, wd, kh, kw, stride, pad, ho, wo, col);
      MapRM<T> out(y->value.data() + static_cast<std::size_t>(s) * cout * m,
                   cout, m);
      CMapRM<T> colm(col, k, m);
      out.noalias() = wm * colm;
      if (bias)
        for (int co = 0; co < cout; ++co)
          out.row(co).array() += bias->value[co];
    }

    record([x, w, bias, y, cols, n, cin, h, wd, cout, kh, kw, stride, pad, ho,
            wo, k, m]() {
      if (w->wants_grad()) w->ensure_grad();
      if (x->wants_grad()) x->ensure_grad();
      if (bias && bias->wants_grad()) bias->ensure_grad();
      MapRM<T> dwm(w->wants_grad() ? w->grad.data() : nullptr,
                   w->wants_grad() ? cout : 0, w->wants_grad() ? k : 0);
      CMapRM<T> wm(w->value.data(), cout, k);
      std::vector<T> dcol(static_cast<std::size_t>(k) * m);
      for (int s = 0; s < n; ++s) {
        CMapRM<T> dout(y->grad.data() + static_cast<std::size_t>(s) * cout * m,
                       cout, m);
        const T* col = cols->data() + static_cast<std::size_t>(s) * k * m;
        CMapRM<T> colm(col, k, m);
        if (w->wants_grad()) dwm.noalias() += dout * colm.transpose();
        if (bias && bias->wants_grad())
          for (int co = 0; co < cout; ++co)
            bias->grad[co] += dout.row(co).sum();
        if (x->wants_grad()) {
          MapRM<T> dcolm(dcol.data(), k, m);
          dcolm.noalias() = wm.transpose() * dout;
          col2im_add(dcol.data(), cin, h, wd, kh, kw, stride, pad, ho, wo,
                     x->grad.data() + static_cast<std::size_t>(s) * cin * h * wd);
        }
      }
    });
    return y;
  }

  // -------------------------------------------------------------------------
  // batchnorm over channel axis of [N,C,H,W]
  // -------------------------------------------------------------------------

  TensorPtr<T> batchnorm(const TensorPtr<T>& x, const TensorPtr<T>& gamma,
                         const TensorPtr<T>& beta, TensorPtr<T>& running_mean,
                         TensorPtr<T>& running_var, bool train,
                         double momentum = 0.1, double eps = 1e-5) {
    if (x->shape.size() != 4) throw ShapeError("batchnorm expects 4-d input");
    const int n = x->shape[0], c = x->shape[1], h = x->shape[2],
              wd = x->shape[3];
    if (gamma->shape != Shape{c} || beta->shape != Shape{c} ||
        running_mean->shape != Shape{c} || running_var->shape != Shape{c})
      throw ShapeError("batchnorm: per-channel parameter shape mismatch");
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    const std::size_t per_ch = static_cast<std::size_t>(n) * plane;

    auto y = result(x->shape);
    auto mean = std::make_shared<std::vector<T>>(c);
    auto inv_std = std::make_shared<std::vector<T>>(c);

    for (int ch = 0; ch < c; ++ch) {
      T mu, var;
      if (train) {
        T acc = T(0);
        for (int s = 0; s < n; ++s) {
          const T* p = x->value.data() +
                       (static_cast<std::size_t>(s) * c + ch) * plane;
          for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        }
        mu = acc / T(per_ch);
        T vacc = T(0);
        for (int s = 0; s < n; ++s) {
          const T* p = x->value.data() +
                       (static_cast<std::size_t>(s) * c + ch) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            T d = p[i] - mu;
            vacc += d * d;
          }
        }
        var = vacc / T(per_ch);
        running_mean->value[ch] =
            T(1.0 - momentum) * running_mean->value[ch] + T(momentum) * mu;
        running_var->value[ch] =
            T(1.0 - momentum) * running_var->value[ch] + T(momentum) * var;
      } else {
        mu = running_mean->value[ch];
        var = running_var->value[ch];
      }
      (*mean)[ch] = mu;
      (*inv_std)[ch] = T(1) / std::sqrt(var + T(eps));
      const T g = gamma->value[ch], b = beta->value[ch], is = (*inv_std)[ch];
      for (int s = 0; s < n; ++s) {
        const T* p =
            x->value.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
        T* q = y->value.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i)
          q[i] = g * (p[i] - mu) * is + b;
      }
    }

    record([x, gamma, beta, y, mean, inv_std, n, c, plane, per_ch, train]() {
      if (x->wants_grad()) x->ensure_grad();
      if (gamma->wants_grad()) gamma->ensure_grad();
      if (beta->wants_grad()) beta->ensure_grad();
      for (int ch = 0; ch < c; ++ch) {
        const T mu = (*mean)[ch], is = (*inv_std)[ch];
        const T g = gamma->value[ch];
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (int s = 0; s < n; ++s) {
          const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            T dy = y->grad[off + i];
            sum_dy += dy;
            sum_dy_xhat += dy * (x->value[off + i] - mu) * is;
          }
        }
        if (gamma->wants_grad()) gamma->grad[ch] += sum_dy_xhat;
        if (beta->wants_grad()) beta->grad[ch] += sum_dy;
        if (!x->wants_grad()) continue;
        if (train) {
          const T inv_m = T(1) / T(per_ch);
          for (int s = 0; s < n; ++s) {
            const std::size_t off =
                (static_cast<std::size_t>(s) * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              T xhat = (x->value[off + i] - mu) * is;
              x->grad[off + i] +=
                  g * is *
                  (y->grad[off + i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
            }
          }
        } else {
          for (int s = 0; s < n; ++s) {
            const std::size_t off =
                (static_cast<std::size_t>(s) * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i)
              x->grad[off + i] += g * is * y->grad[off + i];
          }
        }
      }
    });
    return y;
  }

  // [N,C,H,W] -> [N,C]
  TensorPtr<T> global_avg_pool(const TensorPtr<T>& x) {
    if (x->shape.size() != 4)
      throw ShapeError("global_avg_pool expects 4-d input");
    const int n = x->shape[0], c = x->shape[1];
    const std::size_t plane =
        static_cast<std::size_t>(x->shape[2]) * x->shape[3];
    auto y = result(Shape{n, c});
    for (int s = 0; s < n; ++s)
      for (int ch = 0; ch < c; ++ch) {
        const T* p =
            x->value.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
        T acc = T(0);
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        y->value[s * c + ch] = acc / T(plane);
      }
    record([x, y, n, c, plane]() {
      if (!x->wants_grad()) return;
      x->ensure_grad();
      const T inv = T(1) / T(plane);
      for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch) {
          T g = y->grad[s * c + ch] * inv;
          T* p =
              x->grad.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
          for (std::size_t i = 0; i < plane; ++i) p[i] += g;
        }
    });
    return y;
  }

  // x: [N,F], w: [out,F], bias: [out] -> [N,out]
  TensorPtr<T> linear(const TensorPtr<T>& x, const TensorPtr<T>& w,
                      const TensorPtr<T>& bias) {
    if (x->shape.size() != 2 || w->shape.size() != 2)
      throw ShapeError("linear expects 2-d input and weight");
    const int n = x->shape[0], f = x->shape[1], out = w->shape[0];
    if (w->shape[1] != f)
      throw ShapeError("linear: weight expects " + std::to_string(w->shape[1]) +
                       " features, input has " + std::to_string(f));
    if (bias && bias->shape != Shape{out})
      throw ShapeError("linear: bias shape mismatch");
    auto y = result(Shape{n, out});
    CMapRM<T> xm(x->value.data(), n, f), wm(w->value.data(), out, f);
    MapRM<T> ym(y->value.data(), n, out);
    ym.noalias() = xm * wm.transpose();
    if (bias)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j) y->value[i * out + j] += bias->value[j];
    record([x, w, bias, y, n, f, out]() {
      CMapRM<T> dym(y->grad.data(), n, out);
      if (w->wants_grad()) {
        w->ensure_grad();
        MapRM<T> dwm(w->grad.data(), out, f);
        CMapRM<T> xm(x->value.data(), n, f);
        dwm.noalias() += dym.transpose() * xm;
      }
      if (bias && bias->wants_grad()) {
        bias->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < out; ++j) bias->grad[j] += y->grad[i * out + j];
      }
      if (x->wants_grad()) {
        x->ensure_grad();
        MapRM<T> dxm(x->grad.data(), n, f);
        CMapRM<T> wm(w->value.data(), out, f);
        dxm.noalias() += dym * wm;
      }
    });
    return y;
  }

  // Label-wise logistic loss on raw logits; numerically stable softplus form.
  // Targets must already carry any smoothing. Mean over batch rows, sum over
  // labels.
  TensorPtr<T> bce_with_logits(const TensorPtr<T>& logits,
                               const std::vector<T>& targets) {
    if (logits->shape.size() != 2)
      throw ShapeError("bce_with_logits expects 2-d logits");
    if (targets.size() != logits->size())
      throw ShapeError("bce_with_logits: target count mismatch");
    for (T t : targets)
      if (!(t >= T(0) && t <= T(1)))
        throw ContractError("bce target outside [0,1]");
    const int n = logits->shape[0];
    auto y = result(Shape{1});
    T acc = T(0);
    for (std::size_t i = 0; i < logits->size(); ++i) {
      T z = logits->value[i], t = targets[i];
      // -(t log s + (1-t) log(1-s)) = max(z,0) - z t + log(1+exp(-|z|))
      acc += std::max(z, T(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    y->value[0] = acc / T(n);
    auto tgt = std::make_shared<std::vector<T>>(targets);
    record([logits, y, tgt, n]() {
      if (!logits->wants_grad()) return;
      logits->ensure_grad();
      const T g = y->grad[0] / T(n);
      for (std::size_t i = 0; i < logits->size(); ++i) {
        T z = logits->value[i];
        T s = z >= T(0) ? T(1) / (T(1) + std::exp(-z))
                        : std::exp(z) / (T(1) + std::exp(z));
        logits->grad[i] += g * (s - (*tgt)[i]);
      }
    });
    return y;
  }

 private:
  static void im2col(const T* x, int c, int h, int w, int kh, int kw,
                     int stride, int pad, int ho, int wo, T* col) {
    // col is [c*kh*kw, ho*wo] row-major
    for (int ch = 0; ch < c; ++ch)
      for (int ki = 0; ki < kh; ++ki)
        for (int kj = 0; kj < kw; ++kj) {
          T* row = col + ((static_cast<std::size_t>(ch) * kh + ki) * kw + kj) *
                             (static_cast<std::size_t>(ho) * wo);
          for (int i = 0; i < ho; ++i) {
            int si = i * stride + ki - pad;
            if (si < 0 || si >= h) {
              for (int j = 0; j < wo; ++j) row[i * wo + j] = T(0);
              continue;
            }
            const T* src = x + (static_cast<std::size_t>(ch) * h + si) * w;
            for (int j = 0; j < wo; ++j) {
              int sj = j * stride + kj - pad;
              row[i * wo + j] = (sj < 0 || sj >= w) ? T(0) : src[sj];
            }
          }
        }
  }

  static void col2im_add(const T* col, int c, int h, int w, int kh, int kw,
                         int stride, int pad, int ho, int wo, T* dx) {
    for (int ch = 0; ch < c; ++ch)
      for (int ki = 0; ki < kh; ++ki)
        for (int kj = 0; kj < kw; ++kj) {
          const T* row = col + ((static_cast<std::size_t>(ch) * kh + ki) * kw +
                                kj) *
                                   (static_cast<std::size_t>(ho) * wo);
          for (int i = 0; i < ho; ++i) {
            int si = i * stride + ki - pad;
            if (si < 0 || si >= h) continue;
            T* dst = dx + (static_cast<std::size_t>(ch) * h + si) * w;
            for (int j = 0; j < wo; ++j) {
              int sj = j * stride + kj - pad;
              if (sj >= 0 && sj < w) dst[sj] += row[i * wo + j];
            }
          }
        }
  }

  std::vector<std::function<void()>> ops_;
};

}  // namespace uwf
