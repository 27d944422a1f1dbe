#include "raft/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace raft::numerics {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

template <typename T>
Graph<T>& same_graph(Var<T> a, Var<T> b) {
  if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
  return a.graph();
}

void require(bool ok, const std::string& op, const std::string& what) {
  if (!ok) throw DimensionError(op + ": " + what);
}

template <typename T>
void require_matrix(const Tensor<T>& t, const std::string& op) {
  require(t.rank() == 2, op, "expected a matrix, got shape " + shape_string(t.shape));
}

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T, typename F, typename D>
Var<T> unary(const char* op, Var<T> a, F f, D dfdx) {
  const auto& x = a.value();
  Tensor<T> out(x.shape, std::vector<T>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
  const auto ia = a.id();
  return a.graph().record(op, std::move(out), {ia}, [ia, dfdx](Graph<T>& g, std::size_t self) {
    auto* ga = g.grad_if_needed(ia);
    if (!ga) return;
    const auto& gx = g.grad(self);
    const auto& xv = g.value(ia).data;
    const auto& yv = g.value(self).data;
    for (std::size_t i = 0; i < gx.size(); ++i) (*ga)[i] += gx[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& g = same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  require(bv.shape[0] == k, "matmul",
          "inner dimensions disagree: " + shape_string(av.shape) + " x " + shape_string(bv.shape));
  auto out = Tensor<T>::zeros({m, n});
  gemm_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  const auto ia = a.id(), ib = b.id();
  return g.record("matmul", std::move(out), {ia, ib}, [ia, ib, m, k, n](Graph<T>& g, std::size_t self) {
    const auto& dc = g.grad(self);
    if (auto* da = g.grad_if_needed(ia)) gemm_nt(dc.data(), g.value(ib).data.data(), da->data(), m, n, k);
    if (auto* db = g.grad_if_needed(ib)) gemm_tn(g.value(ia).data.data(), dc.data(), db->data(), m, k, n);
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const auto& av = a.value();
  require_matrix(av, "transpose");
  const std::size_t m = av.shape[0], n = av.shape[1];
  auto out = Tensor<T>::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = av.data[i * n + j];
  const auto ia = a.id();
  return a.graph().record("transpose", std::move(out), {ia}, [ia, m, n](Graph<T>& g, std::size_t self) {
    auto* ga = g.grad_if_needed(ia);
    if (!ga) return;
    const auto& gy = g.grad(self);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += gy[j * m + i];
  });
}

namespace {

template <typename T>
Var<T> binary(const char* op, Var<T> a, Var<T> b, int kind) {
  auto& g = same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require(av.shape == bv.shape, op, "shape mismatch " + shape_string(av.shape) + " vs " + shape_string(bv.shape));
  Tensor<T> out(av.shape, std::vector<T>(av.size()));
  for (std::size_t i = 0; i < av.size(); ++i) {
    out.data[i] = kind == 0 ? av.data[i] + bv.data[i] : kind == 1 ? av.data[i] - bv.data[i] : av.data[i] * bv.data[i];
  }
  const auto ia = a.id(), ib = b.id();
  return g.record(op, std::move(out), {ia, ib}, [ia, ib, kind](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    if (auto* ga = g.grad_if_needed(ia)) {
      const auto& bv = g.value(ib).data;
      for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += kind == 2 ? gy[i] * bv[i] : gy[i];
    }
    if (auto* gb = g.grad_if_needed(ib)) {
      const auto& av = g.value(ia).data;
      for (std::size_t i = 0; i < gy.size(); ++i) {
        (*gb)[i] += kind == 0 ? gy[i] : kind == 1 ? -gy[i] : gy[i] * av[i];
      }
    }
  });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary("add", a, b, 0);
}
template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary("sub", a, b, 1);
}
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary("mul", a, b, 2);
}

template <typename T>
Var<T> add_row(Var<T> x, Var<T> bias) {
  auto& g = same_graph(x, bias);
  const auto& xv = x.value();
  const auto& bv = bias.value();
  const std::size_t n = xv.cols(), m = xv.size() / std::max<std::size_t>(n, 1);
  require(bv.size() == n, "add_row", "bias length " + std::to_string(bv.size()) + " vs row width " + std::to_string(n));
  Tensor<T> out = xv;
  out.requires_grad = false;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += bv.data[j];
  const auto ix = x.id(), ib = bias.id();
  return g.record("add_row", std::move(out), {ix, ib}, [ix, ib, m, n](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    if (auto* gx = g.grad_if_needed(ix))
      for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i];
    if (auto* gb = g.grad_if_needed(ib))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += gy[i * n + j];
  });
}

template <typename T>
Var<T> scale(Var<T> a, double factor) {
  const T f = static_cast<T>(factor);
  return unary("scale", a, [f](T x) { return f * x; }, [f](T, T) { return f; });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary(
      "sigmoid", a,
      [](T x) {
        // Branch keeps exp() from overflowing for large |x|.
        if (x >= 0) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return unary("tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary("relu", a, [](T x) { return x > 0 ? x : T(0); }, [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> gelu(Var<T> a) {
  constexpr T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T k = static_cast<T>(0.044715);
  return unary(
      "gelu", a,
      [](T x) { return T(0.5) * x * (T(1) + std::tanh(c * (x + k * x * x * x))); },
      [](T x, T) {
        const T u = c * (x + k * x * x * x);
        const T t = std::tanh(u);
        const T du = c * (T(1) + T(3) * k * x * x);
        return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
      });
}

template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  const auto& xv = x.value();
  require(axis < std::max<std::size_t>(xv.rank(), 1), "softmax", "axis " + std::to_string(axis) + " out of range");
  std::size_t outer = 1, inner = 1;
  const std::size_t len = xv.rank() == 0 ? 1 : xv.shape[axis];
  for (std::size_t i = 0; i < axis; ++i) outer *= xv.shape[i];
  for (std::size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.shape[i];
  Tensor<T> out(xv.shape, std::vector<T>(xv.size()));
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xv.data[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, xv.data[base + l * inner]);
      T z = 0;
      for (std::size_t l = 0; l < len; ++l) {
        const T e = std::exp(xv.data[base + l * inner] - mx);
        out.data[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < len; ++l) out.data[base + l * inner] /= z;
    }
  }
  const auto ix = x.id();
  return x.graph().record("softmax", std::move(out), {ix}, [ix, outer, inner, len](Graph<T>& g, std::size_t self) {
    auto* gx = g.grad_if_needed(ix);
    if (!gx) return;
    const auto& gy = g.grad(self);
    const auto& y = g.value(self).data;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t l = 0; l < len; ++l) dot += gy[base + l * inner] * y[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const auto idx = base + l * inner;
          (*gx)[idx] += y[idx] * (gy[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, double eps) {
  auto& g = same_graph(x, gain);
  same_graph(x, bias);
  if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");
  const auto& xv = x.value();
  const std::size_t n = xv.cols(), m = xv.size() / n;
  require(gain.value().size() == n && bias.value().size() == n, "layer_norm", "gain/bias length must equal row width");
  Tensor<T> out(xv.shape, std::vector<T>(xv.size()));
  std::vector<T> xhat(xv.size()), inv_std(m);
  const auto& gv = gain.value().data;
  const auto& bv = bias.value().data;
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data.data() + i * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    inv_std[i] = T(1) / std::sqrt(var + static_cast<T>(eps));
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out.data[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return g.record("layer_norm", std::move(out), {ix, ig, ib},
                  [ix, ig, ib, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<T>& g, std::size_t self) {
                    const auto& gy = g.grad(self);
                    if (auto* gg = g.grad_if_needed(ig))
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) (*gg)[j] += gy[i * n + j] * xhat[i * n + j];
                    if (auto* gb = g.grad_if_needed(ib))
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += gy[i * n + j];
                    auto* gx = g.grad_if_needed(ix);
                    if (!gx) return;
                    const auto& gv = g.value(ig).data;
                    std::vector<T> dxhat(n);
                    for (std::size_t i = 0; i < m; ++i) {
                      T mean_d = 0, mean_dx = 0;
                      for (std::size_t j = 0; j < n; ++j) {
                        dxhat[j] = gy[i * n + j] * gv[j];
                        mean_d += dxhat[j];
                        mean_dx += dxhat[j] * xhat[i * n + j];
                      }
                      mean_d /= static_cast<T>(n);
                      mean_dx /= static_cast<T>(n);
                      for (std::size_t j = 0; j < n; ++j) {
                        (*gx)[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
                      }
                    }
                  });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::size_t> indices) {
  const auto& tv = table.value();
  require_matrix(tv, "gather_rows");
  const std::size_t rows = tv.shape[0], d = tv.shape[1];
  require(!indices.empty(), "gather_rows", "empty index list");
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  auto out = Tensor<T>::zeros({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < rows, "gather_rows", "index " + std::to_string(idx[i]) + " >= " + std::to_string(rows));
    std::copy_n(tv.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * d), d,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const auto it = table.id();
  return table.graph().record("gather_rows", std::move(out), {it}, [it, d, idx = std::move(idx)](Graph<T>& g, std::size_t self) {
    auto* gt = g.grad_if_needed(it);
    if (!gt) return;
    const auto& gy = g.grad(self);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) (*gt)[idx[i] * d + j] += gy[i * d + j];
  });
}

template <typename T>
Var<T> scale_rows(Var<T> x, Var<T> s) {
  auto& g = same_graph(x, s);
  const auto& xv = x.value();
  const auto& sv = s.value();
  require_matrix(xv, "scale_rows");
  const std::size_t m = xv.shape[0], n = xv.shape[1];
  require(sv.size() == m, "scale_rows", "score length " + std::to_string(sv.size()) + " vs " + std::to_string(m) + " rows");
  Tensor<T> out(xv.shape, std::vector<T>(xv.size()));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = sv.data[i] * xv.data[i * n + j];
  const auto ix = x.id(), is = s.id();
  return g.record("scale_rows", std::move(out), {ix, is}, [ix, is, m, n](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    if (auto* gx = g.grad_if_needed(ix)) {
      const auto& sv = g.value(is).data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += gy[i * n + j] * sv[i];
    }
    if (auto* gs = g.grad_if_needed(is)) {
      const auto& xv = g.value(ix).data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gs)[i] += gy[i * n + j] * xv[i * n + j];
    }
  });
}

template <typename T>
Var<T> masked_mean_rows(Var<T> x, std::span<const std::uint8_t> mask, std::size_t groups) {
  const auto& xv = x.value();
  require_matrix(xv, "masked_mean_rows");
  const std::size_t rows = xv.shape[0], d = xv.shape[1];
  require(groups > 0 && rows % groups == 0, "masked_mean_rows", "rows not divisible into groups");
  require(mask.size() == rows, "masked_mean_rows", "mask length must equal row count");
  const std::size_t len = rows / groups;
  std::vector<T> inv_count(groups, T(0));
  auto out = Tensor<T>::zeros({groups, d});
  for (std::size_t b = 0; b < groups; ++b) {
    std::size_t c = 0;
    for (std::size_t t = 0; t < len; ++t) c += mask[b * len + t] != 0;
    if (c == 0) continue;
    inv_count[b] = T(1) / static_cast<T>(c);
    for (std::size_t t = 0; t < len; ++t) {
      if (!mask[b * len + t]) continue;
      for (std::size_t j = 0; j < d; ++j) out.data[b * d + j] += xv.data[(b * len + t) * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out.data[b * d + j] *= inv_count[b];
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  const auto ix = x.id();
  return x.graph().record("masked_mean_rows", std::move(out), {ix},
                          [ix, groups, len, d, m = std::move(m), inv_count = std::move(inv_count)](Graph<T>& g, std::size_t self) {
                            auto* gx = g.grad_if_needed(ix);
                            if (!gx) return;
                            const auto& gy = g.grad(self);
                            for (std::size_t b = 0; b < groups; ++b)
                              for (std::size_t t = 0; t < len; ++t) {
                                if (!m[b * len + t]) continue;
                                for (std::size_t j = 0; j < d; ++j) (*gx)[(b * len + t) * d + j] += gy[b * d + j] * inv_count[b];
                              }
                          });
}

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::span<const std::uint8_t> key_mask, std::size_t batch,
                 std::size_t heads, Tensor<T>* weights_out) {
  auto& g = same_graph(q, k);
  same_graph(q, v);
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  require_matrix(qv, "attention");
  require_matrix(kv, "attention");
  require_matrix(vv, "attention");
  const std::size_t d = qv.shape[1];
  require(kv.shape[1] == d && vv.shape[1] == d, "attention", "query/key/value widths differ");
  require(kv.shape[0] == vv.shape[0], "attention", "key and value row counts differ");
  require(batch > 0 && qv.shape[0] % batch == 0 && kv.shape[0] % batch == 0, "attention", "rows not divisible by batch");
  require(heads > 0 && d % heads == 0, "attention", "head count must divide model width");
  require(key_mask.size() == kv.shape[0], "attention",
          "mask length " + std::to_string(key_mask.size()) + " vs " + std::to_string(kv.shape[0]) + " keys");
  const std::size_t tq = qv.shape[0] / batch, tk = kv.shape[0] / batch, dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));

  // probs[b][h][i][j]
  std::vector<T> probs(batch * heads * tq * tk, T(0));
  auto out = Tensor<T>::zeros({batch * tq, d});
  std::vector<T> row(tk);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::uint8_t* mk = key_mask.data() + b * tk;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < tq; ++i) {
        const T* qrow = qv.data.data() + (b * tq + i) * d + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < tk; ++j) {
          if (!mk[j]) continue;
          const T* krow = kv.data.data() + (b * tk + j) * d + h * dh;
          T s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += qrow[c] * krow[c];
          row[j] = s * inv_sqrt;
          mx = std::max(mx, row[j]);
        }
        T* p = probs.data() + ((b * heads + h) * tq + i) * tk;
        T z = 0;
        for (std::size_t j = 0; j < tk; ++j) {
          if (!mk[j]) continue;
          p[j] = std::exp(row[j] - mx);
          z += p[j];
        }
        if (z == T(0)) continue;  // every key masked: output row stays zero
        T* orow = out.data.data() + (b * tq + i) * d + h * dh;
        for (std::size_t j = 0; j < tk; ++j) {
          if (!mk[j]) continue;
          p[j] /= z;
          const T* vrow = vv.data.data() + (b * tk + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) orow[c] += p[j] * vrow[c];
        }
      }
    }
  }
  if (weights_out) *weights_out = Tensor<T>({batch, heads, tq, tk}, probs);

  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return g.record("attention", std::move(out), {iq, ik, iv},
                  [iq, ik, iv, batch, heads, tq, tk, d, dh, inv_sqrt, probs = std::move(probs)](Graph<T>& g, std::size_t self) {
                    const auto& gy = g.grad(self);
                    const auto& qv = g.value(iq).data;
                    const auto& kv = g.value(ik).data;
                    const auto& vv = g.value(iv).data;
                    auto* gq = g.grad_if_needed(iq);
                    auto* gk = g.grad_if_needed(ik);
                    auto* gv = g.grad_if_needed(iv);
                    std::vector<T> dp(tk);
                    for (std::size_t b = 0; b < batch; ++b)
                      for (std::size_t h = 0; h < heads; ++h)
                        for (std::size_t i = 0; i < tq; ++i) {
                          const T* p = probs.data() + ((b * heads + h) * tq + i) * tk;
                          const T* go = gy.data() + (b * tq + i) * d + h * dh;
                          T dot = 0;
                          for (std::size_t j = 0; j < tk; ++j) {
                            if (p[j] == T(0)) {
                              dp[j] = 0;
                              continue;
                            }
                            const T* vrow = vv.data() + (b * tk + j) * d + h * dh;
                            T s = 0;
                            for (std::size_t c = 0; c < dh; ++c) s += go[c] * vrow[c];
                            dp[j] = s;
                            dot += s * p[j];
                            if (gv) {
                              T* gvrow = gv->data() + (b * tk + j) * d + h * dh;
                              for (std::size_t c = 0; c < dh; ++c) gvrow[c] += p[j] * go[c];
                            }
                          }
                          const T* qrow = qv.data() + (b * tq + i) * d + h * dh;
                          for (std::size_t j = 0; j < tk; ++j) {
                            if (p[j] == T(0)) continue;
                            const T ds = p[j] * (dp[j] - dot) * inv_sqrt;
                            const T* krow = kv.data() + (b * tk + j) * d + h * dh;
                            if (gq) {
                              T* gqrow = gq->data() + (b * tq + i) * d + h * dh;
                              for (std::size_t c = 0; c < dh; ++c) gqrow[c] += ds * krow[c];
                            }
                            if (gk) {
                              T* gkrow = gk->data() + (b * tk + j) * d + h * dh;
                              for (std::size_t c = 0; c < dh; ++c) gkrow[c] += ds * qrow[c];
                            }
                          }
                        }
                  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> labels) {
  const auto& lv = logits.value();
  require_matrix(lv, "cross_entropy");
  const std::size_t b = lv.shape[0], c = lv.shape[1];
  require(labels.size() == b, "cross_entropy", "label count must equal batch rows");
  std::vector<T> probs(b * c);
  T loss = 0;
  for (std::size_t i = 0; i < b; ++i) {
    require(labels[i] < c, "cross_entropy", "label index out of range");
    const T* z = lv.data.data() + i * c;
    const T mx = *std::max_element(z, z + c);
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(z[j] - lse);
    loss += lse - z[labels[i]];
  }
  loss /= static_cast<T>(b);
  std::vector<std::size_t> y(labels.begin(), labels.end());
  const auto il = logits.id();
  return logits.graph().record("cross_entropy", Tensor<T>::scalar(loss), {il},
                               [il, b, c, y = std::move(y), probs = std::move(probs)](Graph<T>& g, std::size_t self) {
                                 auto* gl = g.grad_if_needed(il);
                                 if (!gl) return;
                                 const T up = g.grad(self)[0] / static_cast<T>(b);
                                 for (std::size_t i = 0; i < b; ++i)
                                   for (std::size_t j = 0; j < c; ++j)
                                     (*gl)[i * c + j] += up * (probs[i * c + j] - (j == y[i] ? T(1) : T(0)));
                               });
}

template <typename T>
Var<T> bce_with_logits(Var<T> logits, std::span<const T> targets, std::span<const T> weights) {
  const auto& zv = logits.value();
  const std::size_t n = zv.size();
  require(targets.size() == n && weights.size() == n, "bce_with_logits", "targets/weights length must equal logit count");
  T wsum = 0, loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T z = zv.data[i];
    const T l = std::max(z, T(0)) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
    loss += weights[i] * l;
    wsum += weights[i];
  }
  loss = wsum > 0 ? loss / wsum : T(0);
  std::vector<T> y(targets.begin(), targets.end()), w(weights.begin(), weights.end());
  const auto il = logits.id();
  return logits.graph().record("bce_with_logits", Tensor<T>::scalar(loss), {il},
                               [il, wsum, y = std::move(y), w = std::move(w)](Graph<T>& g, std::size_t self) {
                                 auto* gl = g.grad_if_needed(il);
                                 if (!gl || wsum <= 0) return;
                                 const T up = g.grad(self)[0] / wsum;
                                 const auto& z = g.value(il).data;
                                 for (std::size_t i = 0; i < z.size(); ++i) {
                                   if (w[i] == T(0)) continue;
                                   const T s = z[i] >= 0 ? T(1) / (T(1) + std::exp(-z[i])) : std::exp(z[i]) / (T(1) + std::exp(z[i]));
                                   (*gl)[i] += up * w[i] * (s - y[i]);
                                 }
                               });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (const T x : a.value().data) s += x;
  const auto ia = a.id();
  return a.graph().record("sum", Tensor<T>::scalar(s), {ia}, [ia](Graph<T>& g, std::size_t self) {
    auto* ga = g.grad_if_needed(ia);
    if (!ga) return;
    const T up = g.grad(self)[0];
    for (auto& x : *ga) x += up;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  require(shape_size(shape) == a.value().size(), "reshape",
          shape_string(a.shape()) + " cannot become " + shape_string(shape));
  Tensor<T> out(std::move(shape), a.value().data);
  const auto ia = a.id();
  return a.graph().record("reshape", std::move(out), {ia}, [ia](Graph<T>& g, std::size_t self) {
    auto* ga = g.grad_if_needed(ia);
    if (!ga) return;
    const auto& gy = g.grad(self);
    for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i];
  });
}

template <typename T>
Var<T> dropout(Var<T> a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw ContractError("dropout rate must be < 1");
  const auto& av = a.value();
  std::vector<T> keep(av.size());
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> out(av.shape, std::vector<T>(av.size()));
  for (std::size_t i = 0; i < av.size(); ++i) {
    keep[i] = rng.bernoulli(rate) ? T(0) : s;
    out.data[i] = av.data[i] * keep[i];
  }
  const auto ia = a.id();
  return a.graph().record("dropout", std::move(out), {ia}, [ia, keep = std::move(keep)](Graph<T>& g, std::size_t self) {
    auto* ga = g.grad_if_needed(ia);
    if (!ga) return;
    const auto& gy = g.grad(self);
    for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i] * keep[i];
  });
}

#define RAFT_INSTANTIATE_OPS(T)                                                                            \
  template Var<T> matmul(Var<T>, Var<T>);                                                                  \
  template Var<T> transpose(Var<T>);                                                                       \
  template Var<T> add(Var<T>, Var<T>);                                                                     \
  template Var<T> sub(Var<T>, Var<T>);                                                                     \
  template Var<T> mul(Var<T>, Var<T>);                                                                     \
  template Var<T> add_row(Var<T>, Var<T>);                                                                 \
  template Var<T> scale(Var<T>, double);                                                                   \
  template Var<T> sigmoid(Var<T>);                                                                         \
  template Var<T> tanh(Var<T>);                                                                            \
  template Var<T> relu(Var<T>);                                                                            \
  template Var<T> gelu(Var<T>);                                                                            \
  template Var<T> softmax(Var<T>, std::size_t);                                                            \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, double);                                              \
  template Var<T> gather_rows(Var<T>, std::span<const std::size_t>);                                       \
  template Var<T> scale_rows(Var<T>, Var<T>);                                                              \
  template Var<T> masked_mean_rows(Var<T>, std::span<const std::uint8_t>, std::size_t);                    \
  template Var<T> attention(Var<T>, Var<T>, Var<T>, std::span<const std::uint8_t>, std::size_t, std::size_t, \
                            Tensor<T>*);                                                                   \
  template Var<T> cross_entropy(Var<T>, std::span<const std::size_t>);                                     \
  template Var<T> bce_with_logits(Var<T>, std::span<const T>, std::span<const T>);                         \
  template Var<T> sum(Var<T>);                                                                             \
  template Var<T> mean(Var<T>);                                                                            \
  template Var<T> reshape(Var<T>, Shape);                                                                  \
  template Var<T> dropout(Var<T>, double, Rng&);

RAFT_INSTANTIATE_OPS(float)
RAFT_INSTANTIATE_OPS(double)

}  // namespace raft::numerics
