#include "ftgan/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace ftgan::nn {

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

namespace {

bool any_needs_grad(const std::vector<Var>& xs) {
  return std::any_of(xs.begin(), xs.end(), [](Var v) { return v && v->needs_grad; });
}

Tape& tape_of(Var x) {
  require(x != nullptr && x->tape != nullptr, ErrorKind::kPrecondition, "operation on a null variable");
  return *x->tape;
}

void require_shape(bool ok, const std::string& op, const std::string& detail) {
  require(ok, ErrorKind::kShape, op + ": " + detail);
}

// Accumulates into v's gradient if v participates in differentiation.
inline double* grad_of(Var v) { return (v && v->needs_grad) ? v->grad_buffer().ptr() : nullptr; }

// Iterates every kernel tap of a strided correlation. The "strided" side is
// indexed by a and the "dense" side by b = a * stride - pad + k. For a
// convolution the output is the strided side; for a transposed convolution the
// input is. `row` receives (weight index, strided offset, dense offset, count)
// where consecutive strided elements map to dense elements `stride_w` apart.
template <class RowFn>
void for_each_tap(int n_batch, int c_strided, int c_dense, const std::array<int, 3>& strided_dims,
                  const std::array<int, 3>& dense_dims, const ConvGeom& g, RowFn&& row) {
  const auto range = [&](int axis, int k, int& lo, int& hi) {
    const int s = g.stride[axis], p = g.pad[axis];
    const int num = p - k;
    lo = num > 0 ? (num + s - 1) / s : -((-num) / s);
    lo = std::max(lo, 0);
    const int top = dense_dims[axis] - 1 + p - k;
    hi = top >= 0 ? top / s : -((-top + s - 1) / s);
    hi = std::min(hi, strided_dims[axis] - 1);
  };
  const int kt_n = g.kernel[0], kh_n = g.kernel[1], kw_n = g.kernel[2];
  const std::size_t s_plane = static_cast<std::size_t>(strided_dims[0]) * strided_dims[1] * strided_dims[2];
  const std::size_t d_plane = static_cast<std::size_t>(dense_dims[0]) * dense_dims[1] * dense_dims[2];
  for (int n = 0; n < n_batch; ++n) {
    for (int cs = 0; cs < c_strided; ++cs) {
      for (int cd = 0; cd < c_dense; ++cd) {
        const std::size_t s_base = (static_cast<std::size_t>(n) * c_strided + cs) * s_plane;
        const std::size_t d_base = (static_cast<std::size_t>(n) * c_dense + cd) * d_plane;
        for (int kt = 0; kt < kt_n; ++kt) {
          int t_lo, t_hi;
          range(0, kt, t_lo, t_hi);
          for (int kh = 0; kh < kh_n; ++kh) {
            int h_lo, h_hi;
            range(1, kh, h_lo, h_hi);
            for (int kw = 0; kw < kw_n; ++kw) {
              int w_lo, w_hi;
              range(2, kw, w_lo, w_hi);
              if (t_lo > t_hi || h_lo > h_hi || w_lo > w_hi) continue;
              const std::size_t widx =
                  ((((static_cast<std::size_t>(cs) * c_dense + cd) * kt_n + kt) * kh_n + kh) * kw_n) + kw;
              const int count = w_hi - w_lo + 1;
              const int bw0 = w_lo * g.stride[2] - g.pad[2] + kw;
              for (int at = t_lo; at <= t_hi; ++at) {
                const int bt = at * g.stride[0] - g.pad[0] + kt;
                for (int ah = h_lo; ah <= h_hi; ++ah) {
                  const int bh = ah * g.stride[1] - g.pad[1] + kh;
                  const std::size_t s_off =
                      s_base + (static_cast<std::size_t>(at) * strided_dims[1] + ah) * strided_dims[2] + w_lo;
                  const std::size_t d_off =
                      d_base + (static_cast<std::size_t>(bt) * dense_dims[1] + bh) * dense_dims[2] + bw0;
                  row(widx, s_off, d_off, count);
                }
              }
            }
          }
        }
      }
    }
  }
}

std::array<int, 3> spatial_dims(const Tensor& t) { return {t.dim(2), t.dim(3), t.dim(4)}; }

void add_bias(Tensor& out, const Tensor& b) {
  const int n = out.dim(0), c = out.dim(1);
  const std::size_t plane = out.size() / (static_cast<std::size_t>(n) * c);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < c; ++k) {
      double* p = out.ptr() + (static_cast<std::size_t>(i) * c + k) * plane;
      for (std::size_t j = 0; j < plane; ++j) p[j] += b[k];
    }
}

void bias_grad(const Tensor& gout, double* gb) {
  const int n = gout.dim(0), c = gout.dim(1);
  const std::size_t plane = gout.size() / (static_cast<std::size_t>(n) * c);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < c; ++k) {
      const double* p = gout.ptr() + (static_cast<std::size_t>(i) * c + k) * plane;
      double acc = 0;
      for (std::size_t j = 0; j < plane; ++j) acc += p[j];
      gb[k] += acc;
    }
}

template <class F, class DF>
Var unary(Var x, F f, DF df_from_out) {
  Tensor out(x->value.shape());
  const auto in = x->value.data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return tape_of(x).make(std::move(out), {x}, [x, df_from_out](Node& self) {
    double* gx = grad_of(x);
    if (!gx) return;
    const auto g = self.grad.data();
    const auto y = self.value.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df_from_out(y[i]);
  });
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::constant(Tensor value) { return make(std::move(value), {}, nullptr); }

Var Tape::input(Tensor value) {
  Var v = make(std::move(value), {}, nullptr);
  v->needs_grad = true;
  return v;
}

Var Tape::param(Parameter& p) {
  Var v = make(p.value, {}, nullptr);
  v->needs_grad = p.trainable;
  v->param = &p;
  return v;
}

Var Tape::make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->needs_grad = any_needs_grad(inputs);
  if (node->needs_grad) node->backward = std::move(backward);
  node->tape = this;
  node->id = nodes_.size();
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

void Tape::backward(Var root, double seed) {
  require(root != nullptr && root->tape == this, ErrorKind::kPrecondition,
          "backward called without a forward pass recorded on this tape");
  require(root->value.size() == 1, ErrorKind::kShape,
          "backward(root, scalar) requires a scalar root, got " + to_string(root->value.shape()));
  root->grad_buffer()[0] += seed;
  run(root->id);
}

void Tape::backward_from(Var root, const Tensor& seed) {
  require(root != nullptr && root->tape == this, ErrorKind::kPrecondition,
          "backward called without a forward pass recorded on this tape");
  require(seed.shape() == root->value.shape(), ErrorKind::kShape,
          "backward_from: seed " + to_string(seed.shape()) + " vs value " + to_string(root->value.shape()));
  auto& g = root->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  run(root->id);
}

void Tape::run(std::size_t root_id) {
  for (std::size_t i = root_id + 1; i-- > 0;) {
    Node& n = *nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(n);
    if (n.param != nullptr) {
      auto& pg = n.param->grad;
      if (pg.shape() != n.value.shape()) pg = Tensor(n.value.shape(), 0.0);
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
    // Release intermediate gradients once consumed.
    if (!n.param && n.backward) n.grad = Tensor();
  }
}

int conv_out_size(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

int conv_transpose_out_size(int in, int kernel, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + kernel;
}

Var dense(Var x, Var w, Var b) {
  const Tensor& X = x->value;
  const Tensor& W = w->value;
  require_shape(X.rank() == 2 && W.rank() == 2 && X.dim(1) == W.dim(1), "dense",
                "input " + to_string(X.shape()) + " vs weight " + to_string(W.shape()));
  const int n = X.dim(0), in = X.dim(1), out_f = W.dim(0);
  if (b) require_shape(b->value.size() == static_cast<std::size_t>(out_f), "dense", "bias size");
  Tensor Y({n, out_f});
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out_f; ++o) {
      double acc = b ? b->value[o] : 0.0;
      const double* xr = X.ptr() + static_cast<std::size_t>(i) * in;
      const double* wr = W.ptr() + static_cast<std::size_t>(o) * in;
      for (int k = 0; k < in; ++k) acc += wr[k] * xr[k];
      Y[static_cast<std::size_t>(i) * out_f + o] = acc;
    }
  std::vector<Var> ins{x, w};
  if (b) ins.push_back(b);
  return tape_of(x).make(std::move(Y), ins, [x, w, b, n, in, out_f](Node& self) {
    const Tensor& G = self.grad;
    double* gx = grad_of(x);
    double* gw = grad_of(w);
    double* gb = grad_of(b);
    for (int i = 0; i < n; ++i) {
      const double* xr = x->value.ptr() + static_cast<std::size_t>(i) * in;
      for (int o = 0; o < out_f; ++o) {
        const double g = G[static_cast<std::size_t>(i) * out_f + o];
        if (g == 0.0) continue;
        const double* wr = w->value.ptr() + static_cast<std::size_t>(o) * in;
        if (gx)
          for (int k = 0; k < in; ++k) gx[static_cast<std::size_t>(i) * in + k] += g * wr[k];
        if (gw)
          for (int k = 0; k < in; ++k) gw[static_cast<std::size_t>(o) * in + k] += g * xr[k];
        if (gb) gb[o] += g;
      }
    }
  });
}

Var conv3d(Var x, Var w, Var b, const ConvGeom& g) {
  const Tensor& X = x->value;
  const Tensor& W = w->value;
  require_shape(X.rank() == 5 && W.rank() == 5 && W.dim(1) == X.dim(1) && W.dim(2) == g.kernel[0] &&
                    W.dim(3) == g.kernel[1] && W.dim(4) == g.kernel[2],
                "conv3d", "input " + to_string(X.shape()) + " vs weight " + to_string(W.shape()));
  const int n = X.dim(0), ic = X.dim(1), oc = W.dim(0);
  std::array<int, 3> od{};
  for (int a = 0; a < 3; ++a) {
    od[a] = conv_out_size(X.dim(2 + a), g.kernel[a], g.stride[a], g.pad[a]);
    require_shape(od[a] >= 1, "conv3d", "empty output for input " + to_string(X.shape()));
  }
  Tensor Y({n, oc, od[0], od[1], od[2]});
  const double* xin = X.ptr();
  const double* wv = W.ptr();
  double* y = Y.ptr();
  const int sw = g.stride[2];
  for_each_tap(n, oc, ic, od, spatial_dims(X), g,
               [&](std::size_t widx, std::size_t s_off, std::size_t d_off, int count) {
                 const double wk = wv[widx];
                 double* yo = y + s_off;
                 const double* xi = xin + d_off;
                 for (int j = 0; j < count; ++j) yo[j] += wk * xi[static_cast<std::size_t>(j) * sw];
               });
  if (b) add_bias(Y, b->value);
  std::vector<Var> ins{x, w};
  if (b) ins.push_back(b);
  return tape_of(x).make(std::move(Y), ins, [x, w, b, g, n, ic, oc, od](Node& self) {
    double* gx = grad_of(x);
    double* gw = grad_of(w);
    if (double* gb = grad_of(b)) bias_grad(self.grad, gb);
    const double* gy = self.grad.ptr();
    const double* xin = x->value.ptr();
    const double* wv = w->value.ptr();
    const int sw = g.stride[2];
    for_each_tap(n, oc, ic, od, spatial_dims(x->value), g,
                 [&](std::size_t widx, std::size_t s_off, std::size_t d_off, int count) {
                   const double* go = gy + s_off;
                   if (gw) {
                     const double* xi = xin + d_off;
                     double acc = 0;
                     for (int j = 0; j < count; ++j) acc += go[j] * xi[static_cast<std::size_t>(j) * sw];
                     gw[widx] += acc;
                   }
                   if (gx) {
                     const double wk = wv[widx];
                     double* gi = gx + d_off;
                     for (int j = 0; j < count; ++j) gi[static_cast<std::size_t>(j) * sw] += wk * go[j];
                   }
                 });
  });
}

Var conv_transpose3d(Var x, Var w, Var b, const ConvGeom& g) {
  const Tensor& X = x->value;
  const Tensor& W = w->value;
  require_shape(X.rank() == 5 && W.rank() == 5 && W.dim(0) == X.dim(1) && W.dim(2) == g.kernel[0] &&
                    W.dim(3) == g.kernel[1] && W.dim(4) == g.kernel[2],
                "conv_transpose3d",
                "input " + to_string(X.shape()) + " vs weight " + to_string(W.shape()));
  const int n = X.dim(0), ic = X.dim(1), oc = W.dim(1);
  std::array<int, 3> od{};
  for (int a = 0; a < 3; ++a) {
    od[a] = conv_transpose_out_size(X.dim(2 + a), g.kernel[a], g.stride[a], g.pad[a]);
    require_shape(od[a] >= 1, "conv_transpose3d", "empty output for input " + to_string(X.shape()));
  }
  Tensor Y({n, oc, od[0], od[1], od[2]});
  const double* xin = X.ptr();
  const double* wv = W.ptr();
  double* y = Y.ptr();
  const int sw = g.stride[2];
  for_each_tap(n, ic, oc, spatial_dims(X), od, g,
               [&](std::size_t widx, std::size_t s_off, std::size_t d_off, int count) {
                 const double wk = wv[widx];
                 const double* xi = xin + s_off;
                 double* yo = y + d_off;
                 for (int j = 0; j < count; ++j) yo[static_cast<std::size_t>(j) * sw] += wk * xi[j];
               });
  if (b) add_bias(Y, b->value);
  std::vector<Var> ins{x, w};
  if (b) ins.push_back(b);
  return tape_of(x).make(std::move(Y), ins, [x, w, b, g, n, ic, oc, od](Node& self) {
    double* gx = grad_of(x);
    double* gw = grad_of(w);
    if (double* gb = grad_of(b)) bias_grad(self.grad, gb);
    const double* gy = self.grad.ptr();
    const double* xin = x->value.ptr();
    const double* wv = w->value.ptr();
    const int sw = g.stride[2];
    for_each_tap(n, ic, oc, spatial_dims(x->value), od, g,
                 [&](std::size_t widx, std::size_t s_off, std::size_t d_off, int count) {
                   const double* go = gy + d_off;
                   if (gw) {
                     const double* xi = xin + s_off;
                     double acc = 0;
                     for (int j = 0; j < count; ++j) acc += xi[j] * go[static_cast<std::size_t>(j) * sw];
                     gw[widx] += acc;
                   }
                   if (gx) {
                     const double wk = wv[widx];
                     double* gi = gx + s_off;
                     for (int j = 0; j < count; ++j) gi[j] += wk * go[static_cast<std::size_t>(j) * sw];
                   }
                 });
  });
}

Var batch_norm(Var x, Var gamma, Var beta, const BatchNormState& st, bool training) {
  const Tensor& X = x->value;
  require_shape(X.rank() >= 2, "batch_norm", "rank must be >= 2");
  const int n = X.dim(0), c = X.dim(1);
  require_shape(gamma->value.size() == static_cast<std::size_t>(c) &&
                    beta->value.size() == static_cast<std::size_t>(c),
                "batch_norm", "scale/shift size vs channels " + std::to_string(c));
  require(st.running_mean && st.running_var, ErrorKind::kPrecondition, "batch_norm: missing running stats");
  const std::size_t inner = X.size() / (static_cast<std::size_t>(n) * c);
  const double count = static_cast<double>(n) * static_cast<double>(inner);

  std::vector<double> mean(c), inv_std(c);
  for (int k = 0; k < c; ++k) {
    if (training) {
      double s = 0;
      for (int i = 0; i < n; ++i) {
        const double* p = X.ptr() + (static_cast<std::size_t>(i) * c + k) * inner;
        for (std::size_t j = 0; j < inner; ++j) s += p[j];
      }
      const double m = s / count;
      double v = 0;
      for (int i = 0; i < n; ++i) {
        const double* p = X.ptr() + (static_cast<std::size_t>(i) * c + k) * inner;
        for (std::size_t j = 0; j < inner; ++j) v += (p[j] - m) * (p[j] - m);
      }
      v /= count;
      mean[k] = m;
      inv_std[k] = 1.0 / std::sqrt(v + st.eps);
      auto& rm = st.running_mean->value[k];
      auto& rv = st.running_var->value[k];
      rm = (1 - st.momentum) * rm + st.momentum * m;
      rv = (1 - st.momentum) * rv + st.momentum * (count > 1 ? v * count / (count - 1) : v);
    } else {
      mean[k] = st.running_mean->value[k];
      inv_std[k] = 1.0 / std::sqrt(st.running_var->value[k] + st.eps);
    }
  }

  Tensor xhat(X.shape());
  Tensor Y(X.shape());
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < c; ++k) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + k) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        const double h = (X[off + j] - mean[k]) * inv_std[k];
        xhat[off + j] = h;
        Y[off + j] = gamma->value[k] * h + beta->value[k];
      }
    }

  return tape_of(x).make(
      std::move(Y), {x, gamma, beta},
      [x, gamma, beta, n, c, inner, count, training, inv_std, xhat = std::move(xhat)](Node& self) {
        const Tensor& G = self.grad;
        double* gx = grad_of(x);
        double* gg = grad_of(gamma);
        double* gb = grad_of(beta);
        for (int k = 0; k < c; ++k) {
          double sum_g = 0, sum_gh = 0;
          for (int i = 0; i < n; ++i) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + k) * inner;
            for (std::size_t j = 0; j < inner; ++j) {
              sum_g += G[off + j];
              sum_gh += G[off + j] * xhat[off + j];
            }
          }
          if (gg) gg[k] += sum_gh;
          if (gb) gb[k] += sum_g;
          if (!gx) continue;
          const double gam = gamma->value[k];
          for (int i = 0; i < n; ++i) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + k) * inner;
            for (std::size_t j = 0; j < inner; ++j) {
              if (training) {
                gx[off + j] += gam * inv_std[k] / count *
                               (count * G[off + j] - sum_g - xhat[off + j] * sum_gh);
              } else {
                gx[off + j] += gam * inv_std[k] * G[off + j];
              }
            }
          }
        }
      });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double y) { return y > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var x, double slope) {
  return unary(x, [slope](double v) { return v > 0 ? v : slope * v; },
               [slope](double y) { return y > 0 ? 1.0 : slope; });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double y) { return 1 - y * y; });
}

Var sigmoid(Var x) {
  return unary(x, stable_sigmoid, [](double y) { return y * (1 - y); });
}

Var scale(Var x, double s) {
  return unary(x, [s](double v) { return s * v; }, [s](double) { return s; });
}

Var add(Var a, Var b) {
  require_shape(a->value.shape() == b->value.shape(), "add",
                to_string(a->value.shape()) + " vs " + to_string(b->value.shape()));
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return tape_of(a).make(std::move(out), {a, b}, [a, b](Node& self) {
    for (Var v : {a, b})
      if (double* g = grad_of(v))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var reshape(Var x, Shape s) {
  Tensor out = x->value.reshaped(std::move(s));
  return tape_of(x).make(std::move(out), {x}, [x](Node& self) {
    if (double* g = grad_of(x))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var flatten(Var x) {
  const int n = x->value.dim(0);
  return reshape(x, {n, static_cast<int>(x->value.size() / static_cast<std::size_t>(n))});
}

Var concat_channels(const std::vector<Var>& xs) {
  require(!xs.empty(), ErrorKind::kInvalidArgument, "concat_channels: no inputs");
  const Shape& s0 = xs[0]->value.shape();
  int c_total = 0;
  for (Var v : xs) {
    const Shape& s = v->value.shape();
    bool ok = s.size() == s0.size() && s[0] == s0[0];
    for (std::size_t a = 2; ok && a < s.size(); ++a) ok = s[a] == s0[a];
    require_shape(ok, "concat_channels", to_string(s) + " vs " + to_string(s0));
    c_total += s[1];
  }
  Shape out_s = s0;
  out_s[1] = c_total;
  Tensor out(out_s);
  const int n = s0[0];
  const std::size_t inner = numel(Shape(s0.begin() + 2, s0.end()));
  int c_off = 0;
  for (Var v : xs) {
    const int c = v->value.dim(1);
    for (int i = 0; i < n; ++i)
      std::copy_n(v->value.ptr() + static_cast<std::size_t>(i) * c * inner, c * inner,
                  out.ptr() + (static_cast<std::size_t>(i) * c_total + c_off) * inner);
    c_off += c;
  }
  return tape_of(xs[0]).make(std::move(out), xs, [xs, n, inner, c_total](Node& self) {
    int c_off = 0;
    for (Var v : xs) {
      const int c = v->value.dim(1);
      if (double* g = grad_of(v)) {
        for (int i = 0; i < n; ++i) {
          const double* src = self.grad.ptr() + (static_cast<std::size_t>(i) * c_total + c_off) * inner;
          double* dst = g + static_cast<std::size_t>(i) * c * inner;
          for (std::size_t j = 0; j < c * inner; ++j) dst[j] += src[j];
        }
      }
      c_off += c;
    }
  });
}

Var broadcast_latent(Var z, int t, int h, int w) {
  const Tensor& Z = z->value;
  require_shape(Z.rank() == 2, "broadcast_latent", "latent must be [N, L], got " + to_string(Z.shape()));
  const int n = Z.dim(0), l = Z.dim(1);
  const std::size_t inner = static_cast<std::size_t>(t) * h * w;
  Tensor out({n, l, t, h, w});
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < l; ++k)
      std::fill_n(out.ptr() + (static_cast<std::size_t>(i) * l + k) * inner, inner,
                  Z[static_cast<std::size_t>(i) * l + k]);
  return tape_of(z).make(std::move(out), {z}, [z, n, l, inner](Node& self) {
    double* g = grad_of(z);
    if (!g) return;
    for (std::size_t r = 0; r < static_cast<std::size_t>(n) * l; ++r) {
      const double* p = self.grad.ptr() + r * inner;
      double acc = 0;
      for (std::size_t j = 0; j < inner; ++j) acc += p[j];
      g[r] += acc;
    }
  });
}

Var repeat_time(Var x, int t) {
  const Tensor& X = x->value;
  require_shape(X.rank() == 5 && X.dim(2) == 1, "repeat_time", "expected [N, C, 1, H, W], got " + to_string(X.shape()));
  require(t >= 1, ErrorKind::kInvalidArgument, "repeat_time: t must be >= 1");
  const int n = X.dim(0), c = X.dim(1);
  const std::size_t plane = static_cast<std::size_t>(X.dim(3)) * X.dim(4);
  Tensor out({n, c, t, X.dim(3), X.dim(4)});
  for (std::size_t r = 0; r < static_cast<std::size_t>(n) * c; ++r)
    for (int k = 0; k < t; ++k)
      std::copy_n(X.ptr() + r * plane, plane, out.ptr() + (r * t + k) * plane);
  return tape_of(x).make(std::move(out), {x}, [x, n, c, t, plane](Node& self) {
    double* g = grad_of(x);
    if (!g) return;
    for (std::size_t r = 0; r < static_cast<std::size_t>(n) * c; ++r)
      for (int k = 0; k < t; ++k) {
        const double* src = self.grad.ptr() + (r * t + k) * plane;
        for (std::size_t j = 0; j < plane; ++j) g[r * plane + j] += src[j];
      }
  });
}

namespace {

void check_mask_shape(const Tensor& m, const Tensor& x, const char* op) {
  bool ok = m.rank() == x.rank() && m.rank() >= 2 && m.dim(0) == x.dim(0) && m.dim(1) == 1;
  for (std::size_t a = 2; ok && a < m.rank(); ++a) ok = m.dim(a) == x.dim(a);
  require_shape(ok, op, "mask " + to_string(m.shape()) + " vs " + to_string(x.shape()));
}

}  // namespace

Var mask_mul(Var mask, Var x) {
  const Tensor& M = mask->value;
  const Tensor& X = x->value;
  check_mask_shape(M, X, "mask_mul");
  const int n = X.dim(0), c = X.dim(1);
  const std::size_t inner = X.size() / (static_cast<std::size_t>(n) * c);
  Tensor out(X.shape());
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < c; ++k)
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t xi = (static_cast<std::size_t>(i) * c + k) * inner + j;
        out[xi] = M[static_cast<std::size_t>(i) * inner + j] * X[xi];
      }
  return tape_of(x).make(std::move(out), {mask, x}, [mask, x, n, c, inner](Node& self) {
    double* gm = grad_of(mask);
    double* gx = grad_of(x);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < c; ++k)
        for (std::size_t j = 0; j < inner; ++j) {
          const std::size_t xi = (static_cast<std::size_t>(i) * c + k) * inner + j;
          const std::size_t mi = static_cast<std::size_t>(i) * inner + j;
          if (gm) gm[mi] += self.grad[xi] * x->value[xi];
          if (gx) gx[xi] += self.grad[xi] * mask->value[mi];
        }
  });
}

Var composite(Var mask, Var fg, Var bg) {
  const Tensor& M = mask->value;
  const Tensor& F = fg->value;
  const Tensor& B = bg->value;
  check_mask_shape(M, F, "composite");
  require_shape(F.shape() == B.shape(), "composite", to_string(F.shape()) + " vs " + to_string(B.shape()));
  const int n = F.dim(0), c = F.dim(1);
  const std::size_t inner = F.size() / (static_cast<std::size_t>(n) * c);
  Tensor out(F.shape());
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < c; ++k)
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t xi = (static_cast<std::size_t>(i) * c + k) * inner + j;
        const double m = M[static_cast<std::size_t>(i) * inner + j];
        out[xi] = m * F[xi] + (1 - m) * B[xi];
      }
  return tape_of(fg).make(std::move(out), {mask, fg, bg}, [mask, fg, bg, n, c, inner](Node& self) {
    double* gm = grad_of(mask);
    double* gf = grad_of(fg);
    double* gb = grad_of(bg);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < c; ++k)
        for (std::size_t j = 0; j < inner; ++j) {
          const std::size_t xi = (static_cast<std::size_t>(i) * c + k) * inner + j;
          const std::size_t mi = static_cast<std::size_t>(i) * inner + j;
          const double g = self.grad[xi];
          const double m = mask->value[mi];
          if (gm) gm[mi] += g * (fg->value[xi] - bg->value[xi]);
          if (gf) gf[xi] += g * m;
          if (gb) gb[xi] += g * (1 - m);
        }
  });
}

Var mean(Var x) {
  double s = 0;
  for (double v : x->value.data()) s += v;
  const double inv = 1.0 / static_cast<double>(x->value.size());
  return tape_of(x).make(Tensor({1}, s * inv), {x}, [x, inv](Node& self) {
    if (double* g = grad_of(x))
      for (std::size_t i = 0; i < x->value.size(); ++i) g[i] += self.grad[0] * inv;
  });
}

Var mean_abs(Var x) {
  double s = 0;
  for (double v : x->value.data()) s += std::fabs(v);
  const double inv = 1.0 / static_cast<double>(x->value.size());
  return tape_of(x).make(Tensor({1}, s * inv), {x}, [x, inv](Node& self) {
    if (double* g = grad_of(x))
      for (std::size_t i = 0; i < x->value.size(); ++i) {
        const double v = x->value[i];
        g[i] += self.grad[0] * inv * (v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0));
      }
  });
}

Var weighted_sum(Var x, const Tensor& weights) {
  require_shape(weights.size() == x->value.size(), "weighted_sum", "weights size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x->value[i];
  return tape_of(x).make(Tensor({1}, s), {x}, [x, weights](Node& self) {
    if (double* g = grad_of(x))
      for (std::size_t i = 0; i < weights.size(); ++i) g[i] += self.grad[0] * weights[i];
  });
}

Var gan_discriminator_loss(Var d_real, Var d_fake) {
  require_shape(d_real->value.size() == d_fake->value.size() && d_real->value.size() > 0,
                "gan_discriminator_loss", "real/fake score counts differ");
  const std::size_t n = d_real->value.size();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::clamp(d_real->value[i], kLogEps, 1 - kLogEps);
    const double f = std::clamp(d_fake->value[i], kLogEps, 1 - kLogEps);
    s -= std::log(r) + std::log(1 - f);
  }
  const double inv = 1.0 / static_cast<double>(n);
  return tape_of(d_real).make(Tensor({1}, s * inv), {d_real, d_fake}, [d_real, d_fake, n, inv](Node& self) {
    const double g0 = self.grad[0] * inv;
    double* gr = grad_of(d_real);
    double* gf = grad_of(d_fake);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = d_real->value[i], f = d_fake->value[i];
      if (gr && r > kLogEps && r < 1 - kLogEps) gr[i] += -g0 / r;
      if (gf && f > kLogEps && f < 1 - kLogEps) gf[i] += g0 / (1 - f);
    }
  });
}

Var gan_generator_loss(Var d_fake) {
  const std::size_t n = d_fake->value.size();
  require_shape(n > 0, "gan_generator_loss", "empty score vector");
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s -= std::log(std::clamp(d_fake->value[i], kLogEps, 1 - kLogEps));
  const double inv = 1.0 / static_cast<double>(n);
  return tape_of(d_fake).make(Tensor({1}, s * inv), {d_fake}, [d_fake, n, inv](Node& self) {
    double* gf = grad_of(d_fake);
    if (!gf) return;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = d_fake->value[i];
      if (f > kLogEps && f < 1 - kLogEps) gf[i] += -self.grad[0] * inv / f;
    }
  });
}

}  // namespace ftgan::nn
