#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "mitodet/tensor.hpp"

namespace mitodet {

// 8-bit interleaved RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // height*width*3, row-major RGB

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 255)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t index(int y, int x, int ch) const {
    return (static_cast<std::size_t>(y) * width + x) * 3 + ch;
  }
  std::uint8_t& at(int y, int x, int ch) { return pixels[index(y, x, ch)]; }
  std::uint8_t at(int y, int x, int ch) const { return pixels[index(y, x, ch)]; }
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  std::transform(tail.begin(), tail.end(), tail.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return tail == suffix;
}

inline RgbImage read_png_file(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw std::runtime_error("read_image: cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("read_image: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("read_image: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_image: " + path.string() + " is not a valid PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);

  // normalize everything to 8-bit RGB
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  RgbImage img(static_cast<int>(width), static_cast<int>(height));
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = img.pixels.data() + img.index(y, 0, 0);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png_file(const std::filesystem::path& path, const RgbImage& img) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw std::runtime_error("write_image: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("write_image: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("write_image: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_image: failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = const_cast<png_bytep>(img.pixels.data() + img.index(y, 0, 0));
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline RgbImage read_ppm_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_image: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error("read_image: " + path.string() + " is not binary PPM");
  auto next_int = [&]() {
    // skip whitespace and # comments
    while (true) {
      const int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    int v = 0;
    in >> v;
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  in.get();  // single whitespace after header
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error("read_image: unsupported PPM header in " + path.string());
  }
  RgbImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw std::runtime_error("read_image: truncated PPM " + path.string());
  return img;
}

inline void write_ppm_file(const std::filesystem::path& path, const RgbImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_image: cannot open " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("write_image: failed writing " + path.string());
}

}  // namespace detail

inline RgbImage read_image(const std::filesystem::path& path) {
  const std::string s = path.string();
  if (detail::has_suffix(s, ".png")) return detail::read_png_file(path);
  if (detail::has_suffix(s, ".ppm")) return detail::read_ppm_file(path);
  throw std::runtime_error("read_image: unsupported extension (want .png or .ppm): " + s);
}

inline void write_image(const std::filesystem::path& path, const RgbImage& img) {
  const std::string s = path.string();
  if (detail::has_suffix(s, ".png")) return detail::write_png_file(path, img);
  if (detail::has_suffix(s, ".ppm")) return detail::write_ppm_file(path, img);
  throw std::runtime_error("write_image: unsupported extension (want .png or .ppm): " + s);
}

// Header-only dimension probe; avoids decoding whole rasters during ingest.
inline std::pair<int, int> probe_image_size(const std::filesystem::path& path) {
  const std::string s = path.string();
  if (detail::has_suffix(s, ".png")) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("probe_image_size: cannot open " + s);
    std::uint8_t header[24];
    in.read(reinterpret_cast<char*>(header), 24);
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (!in || !std::equal(sig, sig + 8, header)) {
      throw std::runtime_error("probe_image_size: " + s + " is not a PNG");
    }
    auto be32 = [&](int off) {
      return (header[off] << 24) | (header[off + 1] << 16) | (header[off + 2] << 8) | header[off + 3];
    };
    return {be32(16), be32(20)};
  }
  if (detail::has_suffix(s, ".ppm")) {
    RgbImage img = detail::read_ppm_file(path);
    return {img.width, img.height};
  }
  throw std::runtime_error("probe_image_size: unsupported extension: " + s);
}

// Scale to [0,1] doubles, channels-first.
inline Tensor image_to_tensor(const RgbImage& img) {
  Tensor t({1, 3, img.height, img.width});
  for (int c = 0; c < 3; ++c) {
    real* p = t.plane(0, c);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) p[y * img.width + x] = img.at(y, x, c) / real(255);
  }
  return t;
}

inline RgbImage tensor_to_image(const Tensor& t) {
  if (t.shape.n != 1 || t.shape.c != 3) {
    throw std::invalid_argument("tensor_to_image: want shape (1,3,H,W), got " + t.shape.str());
  }
  RgbImage img(t.shape.w, t.shape.h);
  for (int c = 0; c < 3; ++c) {
    const real* p = t.plane(0, c);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const real v = std::clamp(p[y * img.width + x], real(0), real(1));
        img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255));
      }
  }
  return img;
}

}  // namespace mitodet
