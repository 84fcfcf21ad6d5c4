#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "b2s/nn/tensor.hpp"

namespace b2s::nn {

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorKind::shape_mismatch,
          std::string(op) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (double* g = detail::grad_of(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = detail::val(self, 0);
    const auto& bv = detail::val(self, 1);
    if (double* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (double* g = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= s;
  return detail::make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    if (double* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return detail::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* g = detail::grad_of(self, 0)) {
      const auto& x = detail::val(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (x[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return detail::make_result({}, {s}, {a}, [](Node& self) {
    if (double* g = detail::grad_of(self, 0)) {
      const double gs = self.grad[0];
      const auto n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += gs;
    }
  });
}

inline Tensor mean(const Tensor& a) {
  require(a.numel() > 0, ErrorKind::shape_mismatch, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

// ------------------------------------------------------------------- shaping

inline Tensor reshape(const Tensor& a, Shape shape) {
  require(numel_of(shape) == a.numel(), ErrorKind::shape_mismatch,
          "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return detail::make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    if (double* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

/// out.shape[i] = in.shape[perm[i]].
inline Tensor permute(const Tensor& a, std::vector<std::size_t> perm) {
  const auto& in = a.shape();
  const auto r = in.size();
  require(perm.size() == r, ErrorKind::shape_mismatch, "permute: rank mismatch");
  Shape out_shape(r);
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in[perm[i]];
  // map[j] = source offset of output element j
  std::vector<std::size_t> map(a.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t j = 0; j < map.size(); ++j) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_stride[perm[i]];
    map[j] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = av[map[j]];
  return detail::make_result(std::move(out_shape), std::move(out), {a},
                             [map = std::move(map)](Node& self) {
                               if (double* g = detail::grad_of(self, 0))
                                 for (std::size_t j = 0; j < map.size(); ++j) g[map[j]] += self.grad[j];
                             });
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), ErrorKind::shape_mismatch, "concat: no inputs");
  const auto& s0 = parts[0].shape();
  require(axis < s0.size(), ErrorKind::shape_mismatch, "concat: bad axis");
  std::size_t outer = 1, inner = 1, total_axis = 0;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  for (const auto& p : parts) {
    const auto& s = p.shape();
    require(s.size() == s0.size(), ErrorKind::shape_mismatch, "concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      require(i == axis || s[i] == s0[i], ErrorKind::shape_mismatch,
              "concat: " + shape_str(s) + " vs " + shape_str(s0));
    total_axis += s[axis];
  }
  Shape out_shape = s0;
  out_shape[axis] = total_axis;
  std::vector<double> out(outer * total_axis * inner);
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.dim(axis) * inner);
  const std::size_t row = total_axis * inner;
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(o * row + col));
    col += widths[k];
  }
  return detail::make_result(std::move(out_shape), std::move(out), parts,
                             [widths, outer, row](Node& self) {
                               std::size_t col = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 if (double* g = detail::grad_of(self, k))
                                   for (std::size_t o = 0; o < outer; ++o)
                                     for (std::size_t i = 0; i < widths[k]; ++i)
                                       g[o * widths[k] + i] += self.grad[o * row + col + i];
                                 col += widths[k];
                               }
                             });
}

/// Rows of a [N, C] (or [N, ...]) tensor at `idx`.
inline Tensor gather_rows(const Tensor& x, std::vector<std::size_t> idx) {
  const auto n = x.dim(0);
  const auto c = x.numel() / std::max<std::size_t>(n, 1);
  std::vector<double> out(idx.size() * c);
  const auto xv = x.values();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < n, ErrorKind::shape_mismatch, "gather_rows: index out of range");
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(idx[r] * c), c,
                out.begin() + static_cast<std::ptrdiff_t>(r * c));
  }
  Shape s = x.shape();
  s[0] = idx.size();
  return detail::make_result(std::move(s), std::move(out), {x}, [idx = std::move(idx), c](Node& self) {
    if (double* g = detail::grad_of(self, 0))
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < c; ++j) g[idx[r] * c + j] += self.grad[r * c + j];
  });
}

/// Places the rows of x at `idx` in an n-row zero tensor (duplicates accumulate).
inline Tensor scatter_rows(const Tensor& x, std::vector<std::size_t> idx, std::size_t n) {
  require(idx.size() == x.dim(0), ErrorKind::shape_mismatch, "scatter_rows: index count");
  const auto c = x.numel() / std::max<std::size_t>(x.dim(0), 1);
  std::vector<double> out(n * c, 0.0);
  const auto xv = x.values();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < n, ErrorKind::shape_mismatch, "scatter_rows: index out of range");
    for (std::size_t j = 0; j < c; ++j) out[idx[r] * c + j] += xv[r * c + j];
  }
  Shape s = x.shape();
  s[0] = n;
  return detail::make_result(std::move(s), std::move(out), {x}, [idx = std::move(idx), c](Node& self) {
    if (double* g = detail::grad_of(self, 0))
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < c; ++j) g[r * c + j] += self.grad[idx[r] * c + j];
  });
}

/// Copy of `base` with rows `idx` (unique) replaced by `rows`.
inline Tensor row_merge(const Tensor& base, const Tensor& rows, std::vector<std::size_t> idx) {
  const auto c = base.numel() / std::max<std::size_t>(base.dim(0), 1);
  require(rows.numel() == idx.size() * c, ErrorKind::shape_mismatch, "row_merge: shape");
  std::vector<double> out(base.values().begin(), base.values().end());
  std::vector<char> replaced(base.dim(0), 0);
  const auto rv = rows.values();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < base.dim(0) && !replaced[idx[r]], ErrorKind::shape_mismatch,
            "row_merge: indices must be unique and in range");
    replaced[idx[r]] = 1;
    std::copy_n(rv.begin() + static_cast<std::ptrdiff_t>(r * c), c,
                out.begin() + static_cast<std::ptrdiff_t>(idx[r] * c));
  }
  return detail::make_result(base.shape(), std::move(out), {base, rows},
                             [idx = std::move(idx), replaced = std::move(replaced), c](Node& self) {
                               if (double* g = detail::grad_of(self, 0))
                                 for (std::size_t i = 0; i < replaced.size(); ++i)
                                   if (!replaced[i])
                                     for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j];
                               if (double* g = detail::grad_of(self, 1))
                                 for (std::size_t r = 0; r < idx.size(); ++r)
                                   for (std::size_t j = 0; j < c; ++j) g[r * c + j] += self.grad[idx[r] * c + j];
                             });
}

// ------------------------------------------------------------------ algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), ErrorKind::shape_mismatch,
          "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      const double* br = bv.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * br[j];
    }
  return detail::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& av = detail::val(self, 0);
    const auto& bv = detail::val(self, 1);
    const double* g = self.grad.data();
    if (double* ga = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
    if (double* gb = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double x = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * g[i * n + j];
        }
  });
}

/// x[..., Cin] * W[Cin, Cout] + b[Cout]; `b` may be undefined.
inline Tensor pointwise_linear(const Tensor& x, const Tensor& w, const Tensor& b = {}) {
  require(w.rank() == 2 && x.rank() >= 1 && x.shape().back() == w.dim(0), ErrorKind::shape_mismatch,
          "pointwise_linear: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  const auto cin = w.dim(0), cout = w.dim(1);
  const auto rows = x.numel() / cin;
  const bool has_bias = b.defined();
  if (has_bias)
    require(b.numel() == cout, ErrorKind::shape_mismatch, "pointwise_linear: bias size");
  std::vector<double> out(rows * cout, 0.0);
  const auto xv = x.values(), wv = w.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.data() + r * cout;
    if (has_bias) std::copy(b.values().begin(), b.values().end(), o);
    const double* xr = xv.data() + r * cin;
    for (std::size_t p = 0; p < cin; ++p) {
      const double xp = xr[p];
      if (xp == 0.0) continue;
      const double* wr = wv.data() + p * cout;
      for (std::size_t j = 0; j < cout; ++j) o[j] += xp * wr[j];
    }
  }
  Shape s = x.shape();
  s.back() = cout;
  auto backward = [rows, cin, cout, has_bias](Node& self) {
    const auto& xv = detail::val(self, 0);
    const auto& wv = detail::val(self, 1);
    const double* g = self.grad.data();
    if (double* gx = detail::grad_of(self, 0))
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g + r * cout;
        for (std::size_t p = 0; p < cin; ++p) {
          const double* wr = wv.data() + p * cout;
          double s = 0.0;
          for (std::size_t j = 0; j < cout; ++j) s += gr[j] * wr[j];
          gx[r * cin + p] += s;
        }
      }
    if (double* gw = detail::grad_of(self, 1))
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g + r * cout;
        const double* xr = xv.data() + r * cin;
        for (std::size_t p = 0; p < cin; ++p) {
          const double xp = xr[p];
          if (xp == 0.0) continue;
          double* gwr = gw + p * cout;
          for (std::size_t j = 0; j < cout; ++j) gwr[j] += xp * gr[j];
        }
      }
    if (has_bias)
      if (double* gb = detail::grad_of(self, 2))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < cout; ++j) gb[j] += g[r * cout + j];
  };
  if (has_bias) return detail::make_result(std::move(s), std::move(out), {x, w, b}, std::move(backward));
  return detail::make_result(std::move(s), std::move(out), {x, w}, std::move(backward));
}

inline Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  require(axis < s.size(), ErrorKind::shape_mismatch, "softmax: bad axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const auto n = s[axis];
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) z += (out[base + k * inner] = std::exp(xv[base + k * inner] - mx));
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= z;
    }
  return detail::make_result(s, std::move(out), {x}, [outer, inner, n](Node& self) {
    if (double* g = detail::grad_of(self, 0)) {
      const auto& y = self.value;
      const auto& gy = self.grad;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < n; ++k) dot += gy[base + k * inner] * y[base + k * inner];
          for (std::size_t k = 0; k < n; ++k)
            g[base + k * inner] += y[base + k * inner] * (gy[base + k * inner] - dot);
        }
    }
  });
}

/// Normalizes over the last axis, then applies gamma/beta.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  const auto c = x.shape().back();
  require(gamma.numel() == c && beta.numel() == c, ErrorKind::shape_mismatch, "layer_norm: affine size");
  const auto rows = x.numel() / c;
  std::vector<double> out(x.numel()), xhat(x.numel()), inv_std(rows);
  const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xr[j] - mu) * is;
      xhat[r * c + j] = h;
      out[r * c + j] = h * gv[j] + bv[j];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = detail::val(self, 1);
        const double* g = self.grad.data();
        if (double* gx = detail::grad_of(self, 0))
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g[r * c + j] * gv[j];
              m1 += d;
              m2 += d * xhat[r * c + j];
            }
            m1 /= static_cast<double>(c);
            m2 /= static_cast<double>(c);
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g[r * c + j] * gv[j];
              gx[r * c + j] += inv_std[r] * (d - m1 - xhat[r * c + j] * m2);
            }
          }
        if (double* gg = detail::grad_of(self, 1))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) gg[j] += g[r * c + j] * xhat[r * c + j];
        if (double* gb = detail::grad_of(self, 2))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
      });
}

/// 3x3 convolution with zero padding 1. x: [Cin, H, W], w: [Cout, Cin, 3, 3].
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride) {
  require(x.rank() == 3 && w.rank() == 4 && w.dim(2) == 3 && w.dim(3) == 3 && w.dim(1) == x.dim(0),
          ErrorKind::shape_mismatch, "conv2d: " + shape_str(x.shape()) + " * " + shape_str(w.shape()));
  require(stride == 1 || stride == 2, ErrorKind::invalid_argument, "conv2d: stride must be 1 or 2");
  const auto cin = x.dim(0), h = x.dim(1), wd = x.dim(2), cout = w.dim(0);
  require(b.numel() == cout, ErrorKind::shape_mismatch, "conv2d: bias size");
  const auto ho = (h - 1) / stride + 1, wo = (wd - 1) / stride + 1;
  std::vector<double> out(cout * ho * wo);
  const auto xv = x.values(), wv = w.values(), bv = b.values();
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out.data() + co * ho * wo;
    std::fill(o, o + ho * wo, bv[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* xc = xv.data() + ci * h * wd;
      const double* k = wv.data() + (co * cin + ci) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky)
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double kv = k[ky * 3 + kx];
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - 1;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            const double* xr = xc + iy * static_cast<std::ptrdiff_t>(wd);
            double* orow = o + oy * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - 1;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
              orow[ox] += kv * xr[ix];
            }
          }
        }
    }
  }
  return detail::make_result({cout, ho, wo}, std::move(out), {x, w, b},
                             [cin, h, wd, cout, ho, wo, stride](Node& self) {
    const auto& xv = detail::val(self, 0);
    const auto& wv = detail::val(self, 1);
    double* gx = detail::grad_of(self, 0);
    double* gw = detail::grad_of(self, 1);
    double* gb = detail::grad_of(self, 2);
    for (std::size_t co = 0; co < cout; ++co) {
      const double* g = self.grad.data() + co * ho * wo;
      if (gb)
        for (std::size_t i = 0; i < ho * wo; ++i) gb[co] += g[i];
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xc = xv.data() + ci * h * wd;
        const double* k = wv.data() + (co * cin + ci) * 9;
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx) {
            double acc = 0.0;
            const double kv = k[ky * 3 + kx];
            for (std::size_t oy = 0; oy < ho; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - 1;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - 1;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                const auto xi = static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix);
                acc += g[oy * wo + ox] * xc[xi];
                if (gx) gx[ci * h * wd + xi] += g[oy * wo + ox] * kv;
              }
            }
            if (gw) gw[(co * cin + ci) * 9 + ky * 3 + kx] += acc;
          }
      }
    }
  });
}

/// Nearest-neighbour upsampling of an [H*W*Z, C] volume (linear-index rows).
inline Tensor nearest_upsample3d(const Tensor& x, std::array<std::size_t, 3> dims,
                                 std::array<std::size_t, 3> factors) {
  const auto n = dims[0] * dims[1] * dims[2];
  require(x.rank() == 2 && x.dim(0) == n, ErrorKind::shape_mismatch,
          "nearest_upsample3d: rows " + shape_str(x.shape()) + " vs volume dims");
  const auto c = x.dim(1);
  const std::array<std::size_t, 3> od{dims[0] * factors[0], dims[1] * factors[1], dims[2] * factors[2]};
  std::vector<std::size_t> src(od[0] * od[1] * od[2]);
  for (std::size_t h = 0; h < od[0]; ++h)
    for (std::size_t w = 0; w < od[1]; ++w)
      for (std::size_t z = 0; z < od[2]; ++z)
        src[(h * od[1] + w) * od[2] + z] =
            ((h / factors[0]) * dims[1] + w / factors[1]) * dims[2] + z / factors[2];
  std::vector<double> out(src.size() * c);
  const auto xv = x.values();
  for (std::size_t i = 0; i < src.size(); ++i)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(src[i] * c), c,
                out.begin() + static_cast<std::ptrdiff_t>(i * c));
  const auto rows = src.size();
  return detail::make_result({rows, c}, std::move(out), {x}, [src = std::move(src), c](Node& self) {
    if (double* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < src.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) g[src[i] * c + j] += self.grad[i * c + j];
  });
}

/// Inverse of a space-to-depth reshuffle: row p of `x` [H*W*Z, s*C] holds the
/// s = fh*fw*fz children of parent voxel p, sub-position (dh*fw + dw)*fz + dz
/// first. A linear layer followed by this is a transposed convolution whose
/// kernel equals its stride.
inline Tensor unshuffle3d(const Tensor& x, std::array<std::size_t, 3> dims, std::array<std::size_t, 3> factors) {
  const auto n = dims[0] * dims[1] * dims[2];
  const auto s = factors[0] * factors[1] * factors[2];
  require(x.rank() == 2 && x.dim(0) == n && x.dim(1) % s == 0, ErrorKind::shape_mismatch,
          "unshuffle3d: " + shape_str(x.shape()) + " vs volume dims");
  const auto c = x.dim(1) / s;
  const std::array<std::size_t, 3> od{dims[0] * factors[0], dims[1] * factors[1], dims[2] * factors[2]};
  std::vector<std::size_t> src(n * s);  // output row -> flat offset of its first channel in x
  for (std::size_t h = 0; h < od[0]; ++h)
    for (std::size_t w = 0; w < od[1]; ++w)
      for (std::size_t z = 0; z < od[2]; ++z) {
        const auto parent = ((h / factors[0]) * dims[1] + w / factors[1]) * dims[2] + z / factors[2];
        const auto sub = ((h % factors[0]) * factors[1] + w % factors[1]) * factors[2] + z % factors[2];
        src[(h * od[1] + w) * od[2] + z] = parent * s * c + sub * c;
      }
  std::vector<double> out(src.size() * c);
  const auto xv = x.values();
  for (std::size_t i = 0; i < src.size(); ++i)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(src[i]), c, out.begin() + static_cast<std::ptrdiff_t>(i * c));
  const auto rows = src.size();
  return detail::make_result({rows, c}, std::move(out), {x}, [src = std::move(src), c](Node& self) {
    if (double* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < src.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) g[src[i] + j] += self.grad[i * c + j];
  });
}

}  // namespace b2s::nn
