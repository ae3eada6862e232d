#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mitodet/image.hpp"

namespace mitodet {

// Macenko constants: alpha is the robust angle percentile, beta the OD
// threshold below which a pixel counts as background, i0 the white level.
struct StainParams {
  double alpha = 1.0;
  double beta = 0.15;
  double i0 = 255.0;
};

inline void validate(const StainParams& p) {
  if (!(p.alpha > 0 && p.alpha < 50)) throw std::invalid_argument("StainParams: alpha must be in (0,50)");
  if (!(p.beta >= 0)) throw std::invalid_argument("StainParams: beta must be >= 0");
  if (!(p.i0 > 0)) throw std::invalid_argument("StainParams: i0 must be > 0");
}

// Per-pixel optical densities, 3 reals per pixel (R,G,B order).
struct OdImage {
  int width = 0;
  int height = 0;
  std::vector<double> od;  // height*width*3

  std::size_t index(int y, int x, int ch) const {
    return (static_cast<std::size_t>(y) * width + x) * 3 + ch;
  }
  double& at(int y, int x, int ch) { return od[index(y, x, ch)]; }
  double at(int y, int x, int ch) const { return od[index(y, x, ch)]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// 3x2 matrix of unit-norm stain OD vectors; column 0 hematoxylin, column 1
// eosin (hematoxylin carries the larger blue component).
struct StainMatrix {
  std::array<double, 3> hematoxylin{};
  std::array<double, 3> eosin{};

  double at(int row, int col) const { return col == 0 ? hematoxylin[row] : eosin[row]; }

  // column-major 6-number form used by the on-disk reference file
  std::array<double, 6> column_major() const {
    return {hematoxylin[0], hematoxylin[1], hematoxylin[2], eosin[0], eosin[1], eosin[2]};
  }
  static StainMatrix from_column_major(const std::array<double, 6>& v) {
    return StainMatrix{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
  }
};

// Widely used reference H&E basis and robust-max concentrations.
inline StainMatrix reference_stain_matrix() {
  return StainMatrix{{0.5626, 0.7201, 0.4062}, {0.2159, 0.8012, 0.5581}};
}
inline std::array<double, 2> reference_max_concentrations() { return {1.9705, 1.0308}; }

// OD = -log10((I + eps)/I0), eps = 1 so I = 0 stays finite; clamped at 0
// because (I0 + eps)/I0 slightly exceeds 1 at pure white.
inline OdImage rgb_to_od(const RgbImage& img, const StainParams& params = {}) {
  validate(params);
  OdImage out;
  out.width = img.width;
  out.height = img.height;
  out.od.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double od = -std::log10((img.pixels[i] + 1.0) / params.i0);
    out.od[i] = od > 0 ? od : 0.0;
  }
  return out;
}

inline RgbImage od_to_rgb(const OdImage& od, const StainParams& params = {}) {
  validate(params);
  RgbImage img(od.width, od.height);
  for (std::size_t i = 0; i < od.od.size(); ++i) {
    const double intensity = params.i0 * std::pow(10.0, -od.od[i]) - 1.0;
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(intensity, 0.0, 255.0)));
  }
  return img;
}

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix. Eigenvalues
// come out sorted descending; eigenvectors are the matching columns, each
// oriented so its largest-magnitude component is positive.
inline void jacobi_eigen3(const std::array<std::array<double, 3>, 3>& input,
                          std::array<double, 3>& eigenvalues,
                          std::array<std::array<double, 3>, 3>& eigenvectors) {
  std::array<std::array<double, 3>, 3> a = input;
  std::array<std::array<double, 3>, 3> v = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    const double diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
    if (off <= 1e-30 * (diag + 1e-300)) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int r = 0; r < 3; ++r) {
          const double arp = a[r][p], arq = a[r][q];
          a[r][p] = c * arp - s * arq;
          a[r][q] = s * arp + c * arq;
        }
        for (int r = 0; r < 3; ++r) {
          const double apr = a[p][r], aqr = a[q][r];
          a[p][r] = c * apr - s * aqr;
          a[q][r] = s * apr + c * aqr;
        }
        for (int r = 0; r < 3; ++r) {
          const double vrp = v[r][p], vrq = v[r][q];
          v[r][p] = c * vrp - s * vrq;
          v[r][q] = s * vrp + c * vrq;
        }
      }
    }
  }
  std::array<int, 3> order{0, 1, 2};
  std::array<double, 3> evals{a[0][0], a[1][1], a[2][2]};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return evals[i] > evals[j]; });
  for (int k = 0; k < 3; ++k) {
    eigenvalues[k] = evals[order[k]];
    std::array<double, 3> col{v[0][order[k]], v[1][order[k]], v[2][order[k]]};
    int biggest = 0;
    for (int r = 1; r < 3; ++r)
      if (std::abs(col[r]) > std::abs(col[biggest])) biggest = r;
    if (col[biggest] < 0)
      for (double& x : col) x = -x;
    for (int r = 0; r < 3; ++r) eigenvectors[r][k] = col[r];
  }
}

inline double percentile_interpolated(std::vector<double>& values, double pct) {
  std::sort(values.begin(), values.end());
  const double pos = (values.size() - 1) * pct / 100.0;
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

}  // namespace detail

// Macenko estimation: keep tissue pixels (every OD component above beta),
// find the top-2 eigenplane of the OD scatter, and read the stain vectors
// off the alpha / (100-alpha) percentile angles inside that plane. Tissue
// pixels are canonically sorted first so the estimate is independent of
// pixel order.
inline StainMatrix estimate_stain_matrix(const OdImage& image, const StainParams& params = {}) {
  validate(params);
  std::vector<std::array<double, 3>> tissue;
  tissue.reserve(image.pixel_count());
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    const double r = image.od[3 * p], g = image.od[3 * p + 1], b = image.od[3 * p + 2];
    if (r > params.beta && g > params.beta && b > params.beta) tissue.push_back({r, g, b});
  }
  if (tissue.size() < 2) {
    throw std::runtime_error("estimate_stain_matrix: degenerate input, only " +
                             std::to_string(tissue.size()) +
                             " tissue pixels above beta=" + std::to_string(params.beta));
  }
  std::sort(tissue.begin(), tissue.end());

  std::array<std::array<double, 3>, 3> scatter{};
  for (const auto& od : tissue) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) scatter[i][j] += od[i] * od[j];
  }
  const double inv_n = 1.0 / static_cast<double>(tissue.size());
  for (auto& row : scatter)
    for (double& x : row) x *= inv_n;

  std::array<double, 3> eigenvalues{};
  std::array<std::array<double, 3>, 3> eigenvectors{};
  detail::jacobi_eigen3(scatter, eigenvalues, eigenvectors);
  if (!(eigenvalues[0] > 0) || eigenvalues[1] <= 1e-9 * eigenvalues[0]) {
    throw std::runtime_error(
        "estimate_stain_matrix: degenerate OD scatter (rank < 2; single-stain image?)");
  }
  if (eigenvalues[1] - eigenvalues[2] <= 1e-9 * eigenvalues[0]) {
    throw std::runtime_error(
        "estimate_stain_matrix: degenerate OD scatter (tied eigenvalues, no unique stain plane)");
  }

  std::array<double, 3> e1{eigenvectors[0][0], eigenvectors[1][0], eigenvectors[2][0]};
  std::array<double, 3> e2{eigenvectors[0][1], eigenvectors[1][1], eigenvectors[2][1]};
  // orient e1 towards the data so all angles live on one branch of atan2
  double mean_p1 = 0;
  for (const auto& od : tissue) mean_p1 += od[0] * e1[0] + od[1] * e1[1] + od[2] * e1[2];
  if (mean_p1 < 0)
    for (double& x : e1) x = -x;

  std::vector<double> angles;
  angles.reserve(tissue.size());
  for (const auto& od : tissue) {
    const double p1 = od[0] * e1[0] + od[1] * e1[1] + od[2] * e1[2];
    const double p2 = od[0] * e2[0] + od[1] * e2[1] + od[2] * e2[2];
    angles.push_back(std::atan2(p2, p1));
  }
  const double phi_lo = detail::percentile_interpolated(angles, params.alpha);
  const double phi_hi = detail::percentile_interpolated(angles, 100.0 - params.alpha);

  auto direction = [&](double phi) {
    std::array<double, 3> v;
    for (int i = 0; i < 3; ++i) v[i] = std::cos(phi) * e1[i] + std::sin(phi) * e2[i];
    for (double& x : v) x = std::max(x, 0.0);  // stain ODs are nonnegative
    const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (!(norm > 0)) {
      throw std::runtime_error("estimate_stain_matrix: degenerate extreme direction");
    }
    for (double& x : v) x /= norm;
    return v;
  };
  const auto v_lo = direction(phi_lo);
  const auto v_hi = direction(phi_hi);

  StainMatrix m;
  if (v_lo[2] >= v_hi[2]) {  // hematoxylin has the larger blue OD component
    m.hematoxylin = v_lo;
    m.eosin = v_hi;
  } else {
    m.hematoxylin = v_hi;
    m.eosin = v_lo;
  }
  return m;
}

// Per-pixel least squares ||od - S c|| via the 2x2 normal equations,
// clamped at zero.
inline std::vector<std::array<double, 2>> compute_concentrations(const OdImage& image,
                                                                 const StainMatrix& stain) {
  const auto& h = stain.hematoxylin;
  const auto& e = stain.eosin;
  const double hh = h[0] * h[0] + h[1] * h[1] + h[2] * h[2];
  const double he = h[0] * e[0] + h[1] * e[1] + h[2] * e[2];
  const double ee = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
  const double det = hh * ee - he * he;
  if (std::abs(det) < 1e-12) {
    throw std::runtime_error("compute_concentrations: singular stain matrix");
  }
  std::vector<std::array<double, 2>> out(image.pixel_count());
  for (std::size_t p = 0; p < out.size(); ++p) {
    const double* od = &image.od[3 * p];
    const double oh = od[0] * h[0] + od[1] * h[1] + od[2] * h[2];
    const double oe = od[0] * e[0] + od[1] * e[1] + od[2] * e[2];
    const double ch = (ee * oh - he * oe) / det;
    const double ce = (hh * oe - he * oh) / det;
    out[p] = {ch > 0 ? ch : 0.0, ce > 0 ? ce : 0.0};
  }
  return out;
}

// Robust per-stain maxima: 99th percentile over tissue pixels.
inline std::array<double, 2> concentration_robust_max(
    const OdImage& image, const std::vector<std::array<double, 2>>& concentrations,
    const StainParams& params = {}) {
  std::vector<double> ch, ce;
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    const double* od = &image.od[3 * p];
    if (od[0] > params.beta && od[1] > params.beta && od[2] > params.beta) {
      ch.push_back(concentrations[p][0]);
      ce.push_back(concentrations[p][1]);
    }
  }
  if (ch.empty()) {
    throw std::runtime_error("concentration_robust_max: no tissue pixels above beta");
  }
  return {detail::percentile_interpolated(ch, 99.0), detail::percentile_interpolated(ce, 99.0)};
}

// Full Macenko normalization: express the image in `target_stain` with the
// concentration scale matched to `target_max_concentrations`.
inline RgbImage normalize_to_target(const RgbImage& image, const StainMatrix& target_stain,
                                    const std::array<double, 2>& target_max_concentrations,
                                    const StainParams& params = {}) {
  const OdImage od = rgb_to_od(image, params);
  const StainMatrix source = estimate_stain_matrix(od, params);
  auto concentrations = compute_concentrations(od, source);
  const auto source_max = concentration_robust_max(od, concentrations, params);
  std::array<double, 2> scale;
  for (int i = 0; i < 2; ++i) {
    scale[i] = source_max[i] > 1e-9 ? target_max_concentrations[i] / source_max[i] : 1.0;
  }
  OdImage out;
  out.width = image.width;
  out.height = image.height;
  out.od.resize(od.od.size());
  for (std::size_t p = 0; p < concentrations.size(); ++p) {
    const double ch = concentrations[p][0] * scale[0];
    const double ce = concentrations[p][1] * scale[1];
    for (int i = 0; i < 3; ++i) {
      out.od[3 * p + i] = ch * target_stain.hematoxylin[i] + ce * target_stain.eosin[i];
    }
  }
  return od_to_rgb(out, params);
}

inline void save_stain_matrix(const StainMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_stain_matrix: cannot open " + path.string());
  const auto cm = m.column_major();
  out << nlohmann::json(cm) << "\n";
}

inline StainMatrix load_stain_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_stain_matrix: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  if (!j.is_array() || j.size() != 6) {
    throw std::runtime_error("load_stain_matrix: " + path.string() +
                             " must hold a 6-number column-major array");
  }
  std::array<double, 6> v{};
  for (int i = 0; i < 6; ++i) v[i] = j[i].get<double>();
  return StainMatrix::from_column_major(v);
}

}  // namespace mitodet
