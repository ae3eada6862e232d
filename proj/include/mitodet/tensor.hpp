#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mitodet {

// Compute precision. Tests and gradient checks assume 64-bit; define
// MITODET_REAL_FLOAT to trade precision for training speed.
#ifdef MITODET_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

// Rank-4 extent (batch, channels, height, width).
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  bool operator==(const Shape4&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense row-major rank-4 array. The universal carrier for patches,
// feature maps, heatmaps and convolution weights (out,in,kh,kw).
class Tensor {
 public:
  Shape4 shape;
  std::vector<real> data;

  Tensor() = default;
  explicit Tensor(Shape4 s, real fill = real(0)) : shape(s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw std::invalid_argument("Tensor: negative dimension in shape " + s.str());
    }
    data.assign(s.numel(), fill);
  }
  Tensor(Shape4 s, std::vector<real> values) : shape(s), data(std::move(values)) {
    if (data.size() != s.numel()) {
      throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + s.str());
    }
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x;
  }
  real& at(int n, int c, int y, int x) { return data[index(n, c, y, x)]; }
  real at(int n, int c, int y, int x) const { return data[index(n, c, y, x)]; }

  // Start of the (n,c) spatial plane.
  real* plane(int n, int c) { return data.data() + index(n, c, 0, 0); }
  const real* plane(int n, int c) const { return data.data() + index(n, c, 0, 0); }

  void fill(real v) { data.assign(data.size(), v); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape == b.shape)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape.str() +
                                " vs " + b.shape.str());
  }
}

}  // namespace mitodet
