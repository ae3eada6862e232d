#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mitodet/autodiff.hpp"
#include "mitodet/optim.hpp"
#include "mitodet/rng.hpp"
#include "mitodet/vblock.hpp"

namespace mitodet {

struct UVNetConfig {
  int in_channels = 3;
  int out_channels = 2;  // channel 0 mitosis, channel 1 hard-negative
  int base_f = 16;
  int depth = 4;
  std::uint64_t seed = 0;
};

inline void validate(const UVNetConfig& cfg) {
  if (cfg.in_channels < 1) throw std::invalid_argument("UVNetConfig: in_channels must be >= 1");
  if (cfg.out_channels < 1) throw std::invalid_argument("UVNetConfig: out_channels must be >= 1");
  if (cfg.base_f <= 0 || cfg.base_f % 4 != 0) {
    throw std::invalid_argument("UVNetConfig: base_f must be a positive multiple of 4, got " +
                                std::to_string(cfg.base_f));
  }
  if (cfg.depth < 1) throw std::invalid_argument("UVNetConfig: depth must be >= 1");
}

// Encoder-decoder heatmap regressor built from V-blocks.
//
// stem 3x3 conv (in -> base_f), then per encoder level a V-block (doubling
// channels) and a 2x2 maxpool; a bottleneck V-block; per decoder level a 2x
// nearest upsample, skip concat, 1x1 reduction back to the level's f, and a
// V-block. A linear 1x1 head maps to out_channels.
class UVNet {
 public:
  explicit UVNet(UVNetConfig cfg) : cfg_(cfg) {
    validate(cfg_);
    Rng rng(cfg_.seed);
    stem_ = make_conv_params(params_, "stem", cfg_.base_f, cfg_.in_channels, 3, 3, rng);
    int f = cfg_.base_f;
    for (int level = 0; level < cfg_.depth; ++level) {
      enc_.push_back(make_vblock_params(params_, "enc" + std::to_string(level),
                                        VBlockConfig::from_f(f), rng));
      f *= 2;
    }
    bottleneck_ = make_vblock_params(params_, "bottleneck", VBlockConfig::from_f(f), rng);
    reduce_.resize(cfg_.depth);
    dec_.resize(cfg_.depth);
    for (int level = cfg_.depth - 1; level >= 0; --level) {
      const int level_f = cfg_.base_f << level;
      // incoming: upsampled 4*level_f plus skip 2*level_f
      reduce_[level] = make_conv_params(params_, "dec" + std::to_string(level) + ".reduce",
                                        level_f, 6 * level_f, 1, 1, rng);
      dec_[level] = make_vblock_params(params_, "dec" + std::to_string(level),
                                       VBlockConfig::from_f(level_f), rng);
    }
    head_ = make_conv_params(params_, "head", cfg_.out_channels, 2 * cfg_.base_f, 1, 1, rng);
  }

  const UVNetConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  Var forward(const Var& input) const {
    const Shape4 s = input.shape();
    if (s.c != cfg_.in_channels) {
      throw std::invalid_argument("UVNet::forward: input has " + std::to_string(s.c) +
                                  " channels, config expects " + std::to_string(cfg_.in_channels));
    }
    Var t = relu(conv2d(input, stem_.w, stem_.b, 1));
    std::vector<Var> skips;
    skips.reserve(cfg_.depth);
    for (int level = 0; level < cfg_.depth; ++level) {
      t = vblock_forward(t, enc_[level]);
      skips.push_back(t);
      const Shape4 cur = t.shape();
      if (cur.h % 2 != 0 || cur.w % 2 != 0) {
        throw std::invalid_argument("UVNet::forward: spatial dims " + cur.str() +
                                    " not divisible by 2 at encoder level " +
                                    std::to_string(level) + " (input must be divisible by 2^" +
                                    std::to_string(cfg_.depth) + ")");
      }
      t = maxpool2d(t);
    }
    t = vblock_forward(t, bottleneck_);
    for (int level = cfg_.depth - 1; level >= 0; --level) {
      t = upsample2x(t);
      t = concat_channels(t, skips[level]);
      t = relu(conv2d(t, reduce_[level].w, reduce_[level].b, 0));
      t = vblock_forward(t, dec_[level]);
    }
    return conv2d(t, head_.w, head_.b, 0);  // linear head
  }

  // Forward pass on plain data; the transient graph is discarded.
  Tensor predict(const Tensor& input) const {
    return forward(Var::constant(input)).value();
  }

  // Replace weight values by name (shapes must match).
  void load_weight_values(const std::vector<std::pair<std::string, Tensor>>& named) {
    std::unordered_map<std::string, Parameter*> by_name;
    for (Parameter& p : params_) by_name[p.name] = &p;
    for (const auto& [name, tensor] : named) {
      auto it = by_name.find(name);
      if (it == by_name.end()) {
        throw std::runtime_error("UVNet: unknown parameter '" + name + "'");
      }
      if (!(it->second->weights().shape == tensor.shape)) {
        throw std::runtime_error("UVNet: parameter '" + name + "' shape mismatch: have " +
                                 it->second->weights().shape.str() + ", got " +
                                 tensor.shape.str());
      }
      it->second->weights() = tensor;
    }
  }

  std::vector<std::pair<std::string, Tensor>> snapshot_weights() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(params_.size());
    for (const Parameter& p : params_) out.emplace_back(p.name, p.weights());
    return out;
  }

 private:
  UVNetConfig cfg_;
  std::vector<Parameter> params_;
  ConvParams stem_, head_;
  std::vector<VBlockParams> enc_;
  VBlockParams bottleneck_;
  std::vector<ConvParams> reduce_;
  std::vector<VBlockParams> dec_;
};

}  // namespace mitodet
