#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mitodet/autodiff.hpp"
#include "mitodet/rng.hpp"
#include "mitodet/tensor.hpp"

namespace testutil {

using mitodet::Rng;
using mitodet::Shape4;
using mitodet::Tensor;

// Brute-force cross-correlation, independent of the library kernels.
inline Tensor conv2d_loop_oracle(const Tensor& x, const Tensor& w, const std::vector<double>& bias,
                                 int padding) {
  const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
  const int OC = w.shape.n, KH = w.shape.h, KW = w.shape.w;
  const int OH = H + 2 * padding - (KH - 1);
  const int OW = W + 2 * padding - (KW - 1);
  Tensor out({N, OC, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int oc = 0; oc < OC; ++oc)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double acc = bias[oc];
          for (int ic = 0; ic < C; ++ic)
            for (int ky = 0; ky < KH; ++ky)
              for (int kx = 0; kx < KW; ++kx) {
                const int iy = oy - padding + ky;
                const int ix = ox - padding + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += w.at(oc, ic, ky, kx) * x.at(n, ic, iy, ix);
              }
          out.at(n, oc, oy, ox) = acc;
        }
  return out;
}

inline Tensor maxpool_loop_oracle(const Tensor& x) {
  const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
  Tensor out({N, C, H / 2, W / 2});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < H / 2; ++oy)
        for (int ox = 0; ox < W / 2; ++ox) {
          double best = x.at(n, c, 2 * oy, 2 * ox);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) best = std::max(best, x.at(n, c, 2 * oy + dy, 2 * ox + dx));
          out.at(n, c, oy, ox) = best;
        }
  return out;
}

inline Tensor upsample_index_oracle(const Tensor& x) {
  const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
  Tensor out({N, C, 2 * H, 2 * W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < 2 * H; ++y)
        for (int xx = 0; xx < 2 * W; ++xx) out.at(n, c, y, xx) = x.at(n, c, y / 2, xx / 2);
  return out;
}

inline Tensor random_tensor(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Random tensor whose values sit on a coarse grid with per-window gaps, so
// finite differences never straddle a relu/pool/huber kink.
inline Tensor random_tensor_margin(Shape4 s, Rng& rng, double margin = 0.02) {
  Tensor t(s);
  for (auto& v : t.data) {
    double x = rng.uniform(-1.0, 1.0);
    // push away from zero (relu kink)
    if (std::abs(x) < margin) x = x < 0 ? x - margin : x + margin;
    v = x;
  }
  return t;
}

// Central finite difference of scalar function `f` with respect to data[i].
inline double numeric_gradient(const std::function<double()>& f, std::vector<mitodet::real>& data,
                               std::size_t i, double eps) {
  const double saved = data[i];
  data[i] = saved + eps;
  const double plus = f();
  data[i] = saved - eps;
  const double minus = f();
  data[i] = saved;
  return (plus - minus) / (2.0 * eps);
}

inline double rel_error(double a, double b) {
  const double diff = std::abs(a - b);
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return diff / scale;
}

// Checks every analytic gradient entry of `leaf` against central finite
// differences of the recomputed forward value.
inline double max_grad_error(const std::function<mitodet::Var()>& forward, mitodet::Var leaf,
                             double eps = 1e-3) {
  using mitodet::backward;
  leaf.node()->clear_grad();
  mitodet::Var loss = forward();
  backward(loss);
  const Tensor analytic = leaf.grad();
  auto eval = [&]() { return forward().value().data[0]; };
  double worst = 0.0;
  for (std::size_t i = 0; i < leaf.value().size(); ++i) {
    const double numeric = numeric_gradient(eval, leaf.value().data, i, eps);
    const double analytic_i = analytic.data[i];
    if (std::abs(numeric) < 1e-9 && std::abs(analytic_i) < 1e-9) continue;
    worst = std::max(worst, rel_error(analytic_i, numeric));
  }
  return worst;
}

}  // namespace testutil
