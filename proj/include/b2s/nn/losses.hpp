#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "b2s/nn/tensor.hpp"

namespace b2s::nn {

namespace detail {

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Row-wise log-softmax into `out`.
inline void log_softmax_row(const double* z, std::size_t n, double* out) {
  double mx = z[0];
  for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, z[k]);
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(z[k] - mx);
  const double lse = mx + std::log(s);
  for (std::size_t k = 0; k < n; ++k) out[k] = z[k] - lse;
}

/// Focal loss of one row for target t and its gradient coefficient A, so
/// that dL/dz_j = A (delta_tj - p_j) with
/// A = -alpha [(1-p)^g - g (1-p)^(g-1) p log p].
inline std::pair<double, double> focal_term(const double* lp, const double* probs, std::size_t k, std::size_t t,
                                            double gamma, std::span<const double> alpha) {
  double one_minus = 0.0;  // summed from the other classes to keep precision near p_t = 1
  for (std::size_t j = 0; j < k; ++j)
    if (j != t) one_minus += probs[j];
  const double a = alpha.empty() ? 1.0 : alpha[t];
  const double mod = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
  const double dmod = gamma == 0.0 ? 0.0 : gamma * std::pow(one_minus, gamma - 1.0);
  return {-a * mod * lp[t], -a * (mod - dmod * probs[t] * lp[t])};
}

}  // namespace detail

/// Mean of softplus(x) - t*x over all elements.
inline Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  require(targets.size() == logits.numel() && !targets.empty(), ErrorKind::shape_mismatch,
          "bce_with_logits: target count");
  const auto xv = logits.values();
  double s = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) s += detail::softplus(xv[i]) - targets[i] * xv[i];
  const auto n = static_cast<double>(targets.size());
  std::vector<double> t(targets.begin(), targets.end());
  return detail::make_result({}, {s / n}, {logits}, [t = std::move(t), n](Node& self) {
    if (double* g = detail::grad_of(self, 0)) {
      const auto& xv = detail::val(self, 0);
      const double gs = self.grad[0] / n;
      for (std::size_t i = 0; i < t.size(); ++i) g[i] += gs * (detail::sigmoid(xv[i]) - t[i]);
    }
  });
}

/// Mean over rows of -alpha_t (1 - p_t)^gamma log p_t, p = softmax(row).
/// `alpha` may be empty (all ones) or hold one weight per class.
inline Tensor focal_loss(const Tensor& logits, std::span<const std::uint8_t> labels, double gamma,
                         std::span<const double> alpha = {}) {
  require(logits.rank() == 2 && labels.size() == logits.dim(0) && !labels.empty(),
          ErrorKind::shape_mismatch, "focal_loss: " + shape_str(logits.shape()) + " vs labels");
  const auto n = logits.dim(0), k = logits.dim(1);
  require(alpha.empty() || alpha.size() == k, ErrorKind::shape_mismatch, "focal_loss: alpha size");
  for (auto l : labels)
    require(l < k, ErrorKind::label_out_of_range,
            "focal_loss: label " + std::to_string(l) + " with " + std::to_string(k) + " classes");
  std::vector<double> coef(n), probs(n * k);
  std::vector<double> lp(k);
  const auto zv = logits.values();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    detail::log_softmax_row(zv.data() + r * k, k, lp.data());
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(lp[j]);
    const auto [loss, a] = detail::focal_term(lp.data(), probs.data() + r * k, k, labels[r], gamma, alpha);
    total += loss;
    coef[r] = a;
  }
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  return detail::make_result(
      {}, {total / static_cast<double>(n)}, {logits},
      [coef = std::move(coef), probs = std::move(probs), lab = std::move(lab), n, k](Node& self) {
        if (double* g = detail::grad_of(self, 0)) {
          const double gs = self.grad[0] / static_cast<double>(n);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < k; ++j)
              g[r * k + j] += gs * coef[r] * ((j == lab[r] ? 1.0 : 0.0) - probs[r * k + j]);
        }
      });
}

/// Two-class soft target: mass q1 on c1, q2 on c2, zero elsewhere.
struct SoftPair {
  std::uint8_t c1 = 0;
  double q1 = 1.0;
  std::uint8_t c2 = 0;
  double q2 = 0.0;
};

/// Mean over rows of -sum_j q_j log softmax(z)_j.
inline Tensor soft_target_ce(const Tensor& logits, std::span<const SoftPair> targets) {
  require(logits.rank() == 2 && targets.size() == logits.dim(0) && !targets.empty(),
          ErrorKind::shape_mismatch, "soft_target_ce: " + shape_str(logits.shape()) + " vs targets");
  const auto n = logits.dim(0), k = logits.dim(1);
  std::vector<double> probs(n * k), lp(k);
  const auto zv = logits.values();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& t = targets[r];
    require(t.c1 < k && t.c2 < k, ErrorKind::label_out_of_range, "soft_target_ce: class out of range");
    detail::log_softmax_row(zv.data() + r * k, k, lp.data());
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(lp[j]);
    total += -(t.q1 * lp[t.c1] + t.q2 * lp[t.c2]);
  }
  std::vector<SoftPair> tg(targets.begin(), targets.end());
  return detail::make_result({}, {total / static_cast<double>(n)}, {logits},
                             [probs = std::move(probs), tg = std::move(tg), n, k](Node& self) {
    if (double* g = detail::grad_of(self, 0)) {
      const double gs = self.grad[0] / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        const double mass = tg[r].q1 + tg[r].q2;
        for (std::size_t j = 0; j < k; ++j) g[r * k + j] += gs * mass * probs[r * k + j];
        g[r * k + tg[r].c1] -= gs * tg[r].q1;
        g[r * k + tg[r].c2] -= gs * tg[r].q2;
      }
    }
  });
}

/// Soft-target focal loss: mean over rows of q1 FL(c1) + q2 FL(c2). With
/// q1 = 1 it equals focal_loss on c1; with gamma = 0 it equals soft_target_ce.
inline Tensor soft_focal_loss(const Tensor& logits, std::span<const SoftPair> targets, double gamma,
                              std::span<const double> alpha = {}) {
  require(logits.rank() == 2 && targets.size() == logits.dim(0) && !targets.empty(),
          ErrorKind::shape_mismatch, "soft_focal_loss: " + shape_str(logits.shape()) + " vs targets");
  const auto n = logits.dim(0), k = logits.dim(1);
  require(alpha.empty() || alpha.size() == k, ErrorKind::shape_mismatch, "soft_focal_loss: alpha size");
  std::vector<double> probs(n * k), lp(k), coef(2 * n);
  const auto zv = logits.values();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& t = targets[r];
    require(t.c1 < k && t.c2 < k, ErrorKind::label_out_of_range, "soft_focal_loss: class out of range");
    detail::log_softmax_row(zv.data() + r * k, k, lp.data());
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(lp[j]);
    const auto [l1, a1] = detail::focal_term(lp.data(), probs.data() + r * k, k, t.c1, gamma, alpha);
    const auto [l2, a2] = detail::focal_term(lp.data(), probs.data() + r * k, k, t.c2, gamma, alpha);
    total += t.q1 * l1 + t.q2 * l2;
    coef[2 * r] = t.q1 * a1;
    coef[2 * r + 1] = t.q2 * a2;
  }
  std::vector<SoftPair> tg(targets.begin(), targets.end());
  return detail::make_result({}, {total / static_cast<double>(n)}, {logits},
                             [coef = std::move(coef), probs = std::move(probs), tg = std::move(tg), n, k](Node& self) {
    if (double* g = detail::grad_of(self, 0)) {
      const double gs = self.grad[0] / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        const double a = coef[2 * r] + coef[2 * r + 1];
        for (std::size_t j = 0; j < k; ++j) g[r * k + j] -= gs * a * probs[r * k + j];
        g[r * k + tg[r].c1] += gs * coef[2 * r];
        g[r * k + tg[r].c2] += gs * coef[2 * r + 1];
      }
    }
  });
}

}  // namespace b2s::nn
