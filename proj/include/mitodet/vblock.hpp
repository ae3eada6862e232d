#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mitodet/autodiff.hpp"
#include "mitodet/optim.hpp"
#include "mitodet/rng.hpp"

namespace mitodet {

// Dense four-stage block: each stage squeezes the running tensor to f
// channels with a 1x1 conv, grows k fresh channels with a 3x3 conv, and
// concatenates them back on, ending at f + 4k = 2f channels.
struct VBlockConfig {
  int f = 16;
  int k = 4;
  static constexpr int stages = 4;

  static VBlockConfig from_f(int f) {
    if (f <= 0 || f % 4 != 0) {
      throw std::invalid_argument("VBlockConfig: f must be a positive multiple of 4, got " +
                                  std::to_string(f));
    }
    return VBlockConfig{f, f / 4};
  }
};

inline void validate(const VBlockConfig& cfg) {
  if (cfg.f <= 0 || cfg.f % 4 != 0 || cfg.k * 4 != cfg.f) {
    throw std::invalid_argument("VBlockConfig: require f divisible by 4 and k = f/4, got f=" +
                                std::to_string(cfg.f) + " k=" + std::to_string(cfg.k));
  }
}

// Running channel widths before each stage and after the last one:
// f, f+k, f+2k, f+3k, f+4k.
inline std::vector<int> vblock_channel_trace(const VBlockConfig& cfg) {
  validate(cfg);
  std::vector<int> trace;
  for (int i = 0; i <= VBlockConfig::stages; ++i) trace.push_back(cfg.f + i * cfg.k);
  return trace;
}

struct ConvParams {
  Var w;
  Var b;
};

// He-style fan-in uniform init, zero bias. Draw order is fixed by creation
// order, which keeps seeded builds reproducible.
inline ConvParams make_conv_params(std::vector<Parameter>& store, const std::string& name,
                                   int out_ch, int in_ch, int kh, int kw, Rng& rng) {
  Tensor w({out_ch, in_ch, kh, kw});
  const double bound = std::sqrt(6.0 / (static_cast<double>(in_ch) * kh * kw));
  for (auto& v : w.data) v = static_cast<real>(rng.uniform(-bound, bound));
  store.emplace_back(name + ".w", std::move(w));
  Var wv = store.back().var;
  store.emplace_back(name + ".b", Tensor({out_ch, 1, 1, 1}));
  Var bv = store.back().var;
  return ConvParams{wv, bv};
}

struct VBlockParams {
  VBlockConfig cfg;
  std::array<ConvParams, VBlockConfig::stages> squeeze;  // 1x1, running -> f
  std::array<ConvParams, VBlockConfig::stages> grow;     // 3x3, f -> k
};

inline VBlockParams make_vblock_params(std::vector<Parameter>& store, const std::string& prefix,
                                       const VBlockConfig& cfg, Rng& rng) {
  validate(cfg);
  VBlockParams p;
  p.cfg = cfg;
  for (int s = 0; s < VBlockConfig::stages; ++s) {
    const int running = cfg.f + s * cfg.k;
    const std::string stage = prefix + ".s" + std::to_string(s);
    p.squeeze[s] = make_conv_params(store, stage + ".squeeze", cfg.f, running, 1, 1, rng);
    p.grow[s] = make_conv_params(store, stage + ".grow", cfg.k, cfg.f, 3, 3, rng);
  }
  return p;
}

inline Var vblock_forward(const Var& input, const VBlockParams& params) {
  const VBlockConfig& cfg = params.cfg;
  validate(cfg);
  if (input.shape().c != cfg.f) {
    throw std::invalid_argument("vblock_forward: input has " + std::to_string(input.shape().c) +
                                " channels, config expects f=" + std::to_string(cfg.f));
  }
  Var running = input;
  for (int s = 0; s < VBlockConfig::stages; ++s) {
    Var squeezed = relu(conv2d(running, params.squeeze[s].w, params.squeeze[s].b, 0));
    Var grown = relu(conv2d(squeezed, params.grow[s].w, params.grow[s].b, 1));
    running = concat_channels(running, grown);
  }
  return running;
}

}  // namespace mitodet
