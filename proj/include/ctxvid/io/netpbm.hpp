#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxvid/nn/tensor.hpp"

namespace ctxvid::io {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary greyscale PGM (P5), 8-bit.
inline void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height, const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != width * height) throw ImageIoError("write_pgm: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
}

inline std::uint8_t to_byte(double v01) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v01, 0.0, 1.0) * 255.0));
}

/// Binary colour PPM (P6) from an H x W x 3 image in [0, 1].
inline void write_ppm(const std::filesystem::path& path, const nn::Tensor<double>& image) {
  if (image.ndim() != 3 || image.dim(2) != 3) throw ImageIoError("write_ppm: expected H x W x 3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write " + path.string());
  out << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  std::vector<std::uint8_t> bytes(image.size());
  std::transform(image.vec().begin(), image.vec().end(), bytes.begin(), to_byte);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

namespace detail {
inline std::string next_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}
}  // namespace detail

/// Reads a binary PPM (P6) with maxval 255 into an H x W x 3 image in [0, 1].
inline nn::Tensor<double> read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot read " + path.string());
  if (detail::next_token(in) != "P6") throw ImageIoError(path.string() + ": not a binary PPM");
  const std::size_t w = std::stoul(detail::next_token(in));
  const std::size_t h = std::stoul(detail::next_token(in));
  if (std::stoul(detail::next_token(in)) != 255) throw ImageIoError(path.string() + ": only maxval 255 supported");
  std::vector<std::uint8_t> bytes(w * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!in) throw ImageIoError(path.string() + ": truncated pixel data");
  nn::Tensor<double> img({h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) img[i] = bytes[i] / 255.0;
  return img;
}

}  // namespace ctxvid::io
