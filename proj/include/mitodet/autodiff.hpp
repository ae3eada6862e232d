#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mitodet/tensor.hpp"

namespace mitodet {

struct HuberConfig {
  real delta = real(1);
};

inline void validate(const HuberConfig& cfg) {
  if (!(cfg.delta > 0)) {
    throw std::invalid_argument("HuberConfig: delta must be > 0");
  }
}

class Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the recorded forward computation. Gradients accumulate into
// `grad` until explicitly cleared, and leaf nodes keep theirs across graphs.
class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated on first touch, same shape as value
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.data.empty()) grad = Tensor(value.shape);
  }
  void clear_grad() {
    if (!grad.data.empty()) grad.fill(real(0));
  }
};

// Value-semantic handle to a Node.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor t) { return Var(std::move(t), false); }
  static Var leaf(Tensor t, bool requires_grad) { return Var(std::move(t), requires_grad); }
  static Var parameter(Tensor t) { return Var(std::move(t), true); }

  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  Tensor& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  Shape4 shape() const { return node_->value.shape; }
  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

  // Used by the op builders below.
  static Var from_node(NodePtr n) {
    Var v;
    v.node_ = std::move(n);
    return v;
  }

 private:
  Var(Tensor t, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(t);
    node_->requires_grad = requires_grad;
  }

  NodePtr node_;
};

namespace detail {

inline NodePtr make_op_node(Tensor value, std::vector<NodePtr> inputs,
                            std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs) {
    if (in->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

}  // namespace detail

// 2-d cross-correlation (no kernel flip). weights: (out_ch, in_ch, kh, kw),
// bias: (out_ch,1,1,1), odd kernel, output size = in + 2*padding - (k-1).
inline Var conv2d(const Var& input, const Var& weight, const Var& bias, int padding) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();

  const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
  const int OC = w.shape.n, IC = w.shape.c, KH = w.shape.h, KW = w.shape.w;
  if (C != IC) {
    throw std::invalid_argument("conv2d: input shape " + x.shape.str() +
                                " incompatible with weight shape " + w.shape.str() +
                                " (channel mismatch)");
  }
  if (KH % 2 == 0 || KW % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel dims must be odd, got " + w.shape.str());
  }
  if (padding < 0) {
    throw std::invalid_argument("conv2d: padding must be >= 0");
  }
  if (b.shape.n != OC || b.shape.numel() != static_cast<std::size_t>(OC)) {
    throw std::invalid_argument("conv2d: bias shape " + b.shape.str() +
                                " does not match " + std::to_string(OC) + " output channels");
  }
  const int OH = H + 2 * padding - (KH - 1);
  const int OW = W + 2 * padding - (KW - 1);
  if (OH <= 0 || OW <= 0) {
    throw std::invalid_argument("conv2d: kernel " + w.shape.str() +
                                " exceeds padded input " + x.shape.str());
  }

  Tensor out({N, OC, OH, OW});
  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < OC; ++oc) {
      real* op = out.plane(n, oc);
      const real bv = b.data[oc];
      for (int i = 0; i < OH * OW; ++i) op[i] = bv;
      for (int ic = 0; ic < C; ++ic) {
        const real* xp = x.plane(n, ic);
        for (int ky = 0; ky < KH; ++ky) {
          for (int kx = 0; kx < KW; ++kx) {
            const real wv = w.at(oc, ic, ky, kx);
            if (wv == real(0)) continue;
            const int oy0 = std::max(0, padding - ky);
            const int oy1 = std::min(OH, H + padding - ky);
            const int ox0 = std::max(0, padding - kx);
            const int ox1 = std::min(OW, W + padding - kx);
            for (int oy = oy0; oy < oy1; ++oy) {
              const real* src = xp + (oy - padding + ky) * W + (ox0 - padding + kx);
              real* dst = op + oy * OW + ox0;
              const int len = ox1 - ox0;
              for (int i = 0; i < len; ++i) dst[i] += wv * src[i];
            }
          }
        }
      }
    }
  }

  NodePtr xn = input.node(), wn = weight.node(), bn = bias.node();
  auto backward = [xn, wn, bn, padding, N, C, H, W, OC, KH, KW, OH, OW](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& x = xn->value;
    const Tensor& w = wn->value;
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int oc = 0; oc < OC; ++oc) {
        real acc = 0;
        for (int n = 0; n < N; ++n) {
          const real* gp = g.plane(n, oc);
          for (int i = 0; i < OH * OW; ++i) acc += gp[i];
        }
        bn->grad.data[oc] += acc;
      }
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      for (int oc = 0; oc < OC; ++oc) {
        for (int ic = 0; ic < C; ++ic) {
          for (int ky = 0; ky < KH; ++ky) {
            for (int kx = 0; kx < KW; ++kx) {
              const int oy0 = std::max(0, padding - ky);
              const int oy1 = std::min(OH, H + padding - ky);
              const int ox0 = std::max(0, padding - kx);
              const int ox1 = std::min(OW, W + padding - kx);
              real acc = 0;
              for (int n = 0; n < N; ++n) {
                const real* gp = g.plane(n, oc);
                const real* xp = x.plane(n, ic);
                for (int oy = oy0; oy < oy1; ++oy) {
                  const real* grow = gp + oy * OW + ox0;
                  const real* xrow = xp + (oy - padding + ky) * W + (ox0 - padding + kx);
                  const int len = ox1 - ox0;
                  for (int i = 0; i < len; ++i) acc += grow[i] * xrow[i];
                }
              }
              wn->grad.at(oc, ic, ky, kx) += acc;
            }
          }
        }
      }
    }
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
          const real* gp = g.plane(n, oc);
          for (int ic = 0; ic < C; ++ic) {
            real* dxp = xn->grad.plane(n, ic);
            for (int ky = 0; ky < KH; ++ky) {
              for (int kx = 0; kx < KW; ++kx) {
                const real wv = w.at(oc, ic, ky, kx);
                if (wv == real(0)) continue;
                const int oy0 = std::max(0, padding - ky);
                const int oy1 = std::min(OH, H + padding - ky);
                const int ox0 = std::max(0, padding - kx);
                const int ox1 = std::min(OW, W + padding - kx);
                for (int oy = oy0; oy < oy1; ++oy) {
                  const real* grow = gp + oy * OW + ox0;
                  real* drow = dxp + (oy - padding + ky) * W + (ox0 - padding + kx);
                  const int len = ox1 - ox0;
                  for (int i = 0; i < len; ++i) drow[i] += wv * grow[i];
                }
              }
            }
          }
        }
      }
    }
  };

  return Var::from_node(detail::make_op_node(std::move(out), {xn, wn, bn}, std::move(backward)));
}

// 2x2 max pooling, stride 2. Spatial dims must be even.
inline Var maxpool2d(const Var& input) {
  const Tensor& x = input.value();
  const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
  if (H % 2 != 0 || W % 2 != 0) {
    throw std::invalid_argument("maxpool2d: spatial dims must be even, got " + x.shape.str());
  }
  const int OH = H / 2, OW = W / 2;
  Tensor out({N, C, OH, OW});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  std::size_t oi = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const real* xp = x.plane(n, c);
      const std::size_t base = x.index(n, c, 0, 0);
      for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox, ++oi) {
          const int y = 2 * oy, xcol = 2 * ox;
          std::size_t best = static_cast<std::size_t>(y) * W + xcol;
          real bv = xp[best];
          const std::size_t cands[3] = {best + 1, best + W, best + W + 1};
          for (std::size_t cand : cands) {
            if (xp[cand] > bv) {
              bv = xp[cand];
              best = cand;
            }
          }
          out.data[oi] = bv;
          (*argmax)[oi] = static_cast<std::uint32_t>(base + best);
        }
      }
    }
  }

  NodePtr xn = input.node();
  auto backward = [xn, argmax](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const Tensor& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      xn->grad.data[(*argmax)[i]] += g.data[i];
    }
  };
  return Var::from_node(detail::make_op_node(std::move(out), {xn}, std::move(backward)));
}

// Nearest-neighbor 2x spatial replication.
inline Var upsample2x(const Var& input) {
  const Tensor& x = input.value();
  const int N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
  Tensor out({N, C, H * 2, W * 2});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const real* xp = x.plane(n, c);
      real* op = out.plane(n, c);
      for (int y = 0; y < 2 * H; ++y) {
        const real* xrow = xp + (y / 2) * W;
        real* orow = op + y * (2 * W);
        for (int xcol = 0; xcol < 2 * W; ++xcol) orow[xcol] = xrow[xcol / 2];
      }
    }
  }
  NodePtr xn = input.node();
  auto backward = [xn, N, C, H, W](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const Tensor& g = self.grad;
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        const real* gp = g.plane(n, c);
        real* dxp = xn->grad.plane(n, c);
        for (int y = 0; y < 2 * H; ++y) {
          const real* grow = gp + y * (2 * W);
          real* drow = dxp + (y / 2) * W;
          for (int xcol = 0; xcol < 2 * W; ++xcol) drow[xcol / 2] += grow[xcol];
        }
      }
    }
  };
  return Var::from_node(detail::make_op_node(std::move(out), {xn}, std::move(backward)));
}

// Channel concatenation; a's channels precede b's.
inline Var concat_channels(const Var& a, const Var& b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.shape.n != tb.shape.n || ta.shape.h != tb.shape.h || ta.shape.w != tb.shape.w) {
    throw std::invalid_argument("concat_channels: batch/spatial mismatch " + ta.shape.str() +
                                " vs " + tb.shape.str());
  }
  const int N = ta.shape.n, CA = ta.shape.c, CB = tb.shape.c, H = ta.shape.h, W = ta.shape.w;
  Tensor out({N, CA + CB, H, W});
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < CA; ++c) {
      std::copy_n(ta.plane(n, c), plane, out.plane(n, c));
    }
    for (int c = 0; c < CB; ++c) {
      std::copy_n(tb.plane(n, c), plane, out.plane(n, CA + c));
    }
  }
  NodePtr an = a.node(), bn = b.node();
  auto backward = [an, bn, N, CA, CB, H, W](Node& self) {
    const Tensor& g = self.grad;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    if (an->requires_grad) {
      an->ensure_grad();
      for (int n = 0; n < N; ++n) {
        for (int c = 0; c < CA; ++c) {
          const real* gp = g.plane(n, c);
          real* dp = an->grad.plane(n, c);
          for (std::size_t i = 0; i < plane; ++i) dp[i] += gp[i];
        }
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int n = 0; n < N; ++n) {
        for (int c = 0; c < CB; ++c) {
          const real* gp = g.plane(n, CA + c);
          real* dp = bn->grad.plane(n, c);
          for (std::size_t i = 0; i < plane; ++i) dp[i] += gp[i];
        }
      }
    }
  };
  return Var::from_node(detail::make_op_node(std::move(out), {an, bn}, std::move(backward)));
}

inline Var relu(const Var& input) {
  const Tensor& x = input.value();
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.data[i] = x.data[i] > real(0) ? x.data[i] : real(0);
  }
  NodePtr xn = input.node();
  auto backward = [xn](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const Tensor& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xn->value.data[i] > real(0)) xn->grad.data[i] += g.data[i];
    }
  };
  return Var::from_node(detail::make_op_node(std::move(out), {xn}, std::move(backward)));
}

// Mean Huber loss: 0.5 r^2 for |r| <= delta, delta*(|r| - 0.5 delta) beyond.
inline Var huber_loss(const Var& prediction, const Var& target, const HuberConfig& cfg) {
  validate(cfg);
  const Tensor& p = prediction.value();
  const Tensor& t = target.value();
  require_same_shape(p, t, "huber_loss");
  if (p.size() == 0) {
    throw std::invalid_argument("huber_loss: empty tensors");
  }
  const real delta = cfg.delta;
  real acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const real r = p.data[i] - t.data[i];
    const real a = std::abs(r);
    acc += a <= delta ? real(0.5) * r * r : delta * (a - real(0.5) * delta);
  }
  Tensor out({1, 1, 1, 1});
  out.data[0] = acc / static_cast<real>(p.size());

  NodePtr pn = prediction.node(), tn = target.node();
  auto backward = [pn, tn, delta](Node& self) {
    const real gscale = self.grad.data[0] / static_cast<real>(pn->value.size());
    const Tensor& p = pn->value;
    const Tensor& t = tn->value;
    if (pn->requires_grad) {
      pn->ensure_grad();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const real r = p.data[i] - t.data[i];
        pn->grad.data[i] += gscale * std::clamp(r, -delta, delta);
      }
    }
    if (tn->requires_grad) {
      tn->ensure_grad();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const real r = p.data[i] - t.data[i];
        tn->grad.data[i] -= gscale * std::clamp(r, -delta, delta);
      }
    }
  };
  return Var::from_node(detail::make_op_node(std::move(out), {pn, tn}, std::move(backward)));
}

inline Var huber_loss(const Var& prediction, const Tensor& target, const HuberConfig& cfg) {
  return huber_loss(prediction, Var::constant(target), cfg);
}

// Reverse-mode sweep from a scalar root. Gradients accumulate into every
// node reached; parameter leaves keep theirs until cleared.
inline void backward(const Var& root) {
  if (!root) throw std::invalid_argument("backward: empty variable");
  Node* r = root.node().get();
  if (r->value.size() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got shape " +
                                r->value.shape.str());
  }

  // Iterative post-order DFS; order is structural, so repeated runs over an
  // identically built graph visit nodes identically.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* node;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  stack.push_back({r, 0});
  seen.insert(r);
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next_input < top.node->inputs.size()) {
      Node* child = top.node->inputs[top.next_input++].get();
      if (seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(top.node);
      stack.pop_back();
    }
  }

  r->ensure_grad();
  r->grad.data[0] += real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

}  // namespace mitodet
