#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ctxvid/geometry/camera.hpp"
#include "ctxvid/geometry/epipolar.hpp"
#include "ctxvid/io/netpbm.hpp"

// One camera per line, whitespace separated:
//   timestamp fx fy cx cy 0 0 r11 r12 r13 t1 r21 r22 r23 t2 r31 r32 r33 t3
// Intrinsics are divided by the image width (fx, cx) and height (fy, cy);
// the extrinsics are the world-to-camera [R|t], row-major. A normalized
// principal point c maps to pixel coordinate c * size - 0.5 because pixel
// centres sit at integer coordinates.

namespace ctxvid::geometry {

class PoseFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PoseRecord {
  std::int64_t timestamp = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;  // normalized by image size
  CameraPose pose;

  Intrinsics intrinsics(int width, int height) const {
    return Intrinsics{fx * width, fy * height, cx * width - 0.5, cy * height - 0.5, width, height};
  }

  static PoseRecord from(std::int64_t timestamp, const Intrinsics& K, const CameraPose& pose) {
    return PoseRecord{timestamp,
                      K.fx / K.width,
                      K.fy / K.height,
                      (K.cx + 0.5) / K.width,
                      (K.cy + 0.5) / K.height,
                      pose};
  }
};

namespace detail {
inline double parse_double(const std::string& tok, std::size_t line_no) {
  double v = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw PoseFileError("line " + std::to_string(line_no) + ": bad number '" + tok + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
}  // namespace detail

/// Parses one pose line. Throws PoseFileError on malformed input.
inline PoseRecord parse_pose_line(const std::string& line, std::size_t line_no = 0) {
  std::istringstream ss(line);
  std::vector<std::string> tok;
  for (std::string t; ss >> t;) tok.push_back(t);
  if (tok.size() != 19) throw PoseFileError("line " + std::to_string(line_no) + ": expected 19 fields, got " + std::to_string(tok.size()));
  PoseRecord r;
  {
    const auto& ts = tok[0];
    auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), r.timestamp);
    if (ec != std::errc() || ptr != ts.data() + ts.size()) throw PoseFileError("line " + std::to_string(line_no) + ": bad timestamp '" + ts + "'");
  }
  r.fx = detail::parse_double(tok[1], line_no);
  r.fy = detail::parse_double(tok[2], line_no);
  r.cx = detail::parse_double(tok[3], line_no);
  r.cy = detail::parse_double(tok[4], line_no);
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) r.pose.rotation(row, col) = detail::parse_double(tok[7 + row * 4 + col], line_no);
    r.pose.translation[row] = detail::parse_double(tok[7 + row * 4 + 3], line_no);
  }
  return r;
}

/// Shortest round-trip formatting, so write -> read reproduces every double.
inline std::string format_pose_line(const PoseRecord& r) {
  using detail::format_double;
  std::string s = std::to_string(r.timestamp);
  for (double v : {r.fx, r.fy, r.cx, r.cy}) s += ' ' + format_double(v);
  s += " 0 0";
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) s += ' ' + format_double(r.pose.rotation(row, col));
    s += ' ' + format_double(r.pose.translation[row]);
  }
  return s;
}

/// Reads every pose line; blank lines are skipped and a leading single-token
/// line (a source URL, as in RealEstate10K dumps) is ignored.
inline std::vector<PoseRecord> read_pose_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PoseFileError("cannot open pose file " + path.string());
  std::vector<PoseRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (n == 1 && line.find_first_of(" \t") == std::string::npos) continue;
    out.push_back(parse_pose_line(line, n));
  }
  return out;
}

inline void write_pose_file(const std::filesystem::path& path, const std::vector<PoseRecord>& records) {
  std::ofstream out(path);
  if (!out) throw PoseFileError("cannot write pose file " + path.string());
  for (const auto& r : records) out << format_pose_line(r) << '\n';
}

/// Writes one P5 image per (query frame t, context view j) block of the mask:
/// (h*w) x (h*w), white where admissible. Files are named mask_t{t}_j{j}.pgm.
inline std::vector<std::filesystem::path> write_mask_slices(const std::filesystem::path& dir, const EpipolarMask& mask, std::size_t T,
                                                            std::size_t N, std::size_t hw) {
  if (mask.rows() != T * hw || mask.cols() != N * hw) throw ShapeError("write_mask_slices: mask shape mismatch");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < N; ++j) {
      std::vector<std::uint8_t> px(hw * hw);
      for (std::size_t r = 0; r < hw; ++r)
        for (std::size_t c = 0; c < hw; ++c) px[r * hw + c] = mask.get(t * hw + r, j * hw + c) ? 255 : 0;
      auto p = dir / ("mask_t" + std::to_string(t) + "_j" + std::to_string(j) + ".pgm");
      io::write_pgm(p, hw, hw, px);
      written.push_back(p);
    }
  return written;
}

}  // namespace ctxvid::geometry
