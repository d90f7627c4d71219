#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ctxvid/geometry/pose_io.hpp"

namespace ctxvid::harness {

/// Named palette used by the generator and the caption templates.
struct PaletteColor {
  const char* name;
  double r, g, b;
};

inline const std::array<PaletteColor, 10>& palette() {
  static const std::array<PaletteColor, 10> p{{{"red", 0.85, 0.2, 0.2},
                                               {"green", 0.25, 0.75, 0.3},
                                               {"blue", 0.2, 0.35, 0.9},
                                               {"yellow", 0.9, 0.85, 0.25},
                                               {"cyan", 0.25, 0.8, 0.85},
                                               {"magenta", 0.8, 0.3, 0.75},
                                               {"orange", 0.95, 0.55, 0.15},
                                               {"white", 0.92, 0.92, 0.9},
                                               {"gray", 0.5, 0.5, 0.52},
                                               {"purple", 0.5, 0.3, 0.8}}};
  return p;
}

struct Box {
  Eigen::Vector3d lo, hi;
  std::size_t color;  // palette index
};

/// Small sphere; rendered with a ray-sphere test so occlusion stays exact.
struct Splat {
  Eigen::Vector3d center;
  double radius;
  std::size_t color;
};

/// Axis-aligned room, world y pointing down. Everything generated lies inside.
struct RoomBounds {
  Eigen::Vector3d lo{-4.0, -3.0, -4.0};
  Eigen::Vector3d hi{4.0, 1.0, 4.0};

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

struct Scene {
  std::uint64_t seed = 0;
  RoomBounds room;
  std::vector<Box> boxes;
  std::vector<Splat> splats;
  std::array<double, 3> background{0.12, 0.12, 0.16};

  std::size_t object_count() const { return boxes.size() + splats.size(); }
};

/// Canonical text form: every field at full precision, one object per line.
inline std::string serialize(const Scene& s) {
  using geometry::detail::format_double;
  std::ostringstream os;
  os << "scene " << s.seed << '\n';
  auto vec = [&](const Eigen::Vector3d& v) {
    os << format_double(v.x()) << ' ' << format_double(v.y()) << ' ' << format_double(v.z());
  };
  for (const auto& b : s.boxes) {
    os << "box ";
    vec(b.lo);
    os << ' ';
    vec(b.hi);
    os << ' ' << palette()[b.color].name << '\n';
  }
  for (const auto& p : s.splats) {
    os << "splat ";
    vec(p.center);
    os << ' ' << format_double(p.radius) << ' ' << palette()[p.color].name << '\n';
  }
  return os.str();
}

/// FNV-1a of the object list (seed excluded), for distinctness checks.
inline std::uint64_t content_hash(const Scene& s) {
  const std::string text = serialize(s);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = text.find('\n') + 1; i < text.size(); ++i) h = (h ^ std::uint8_t(text[i])) * 1099511628211ull;
  return h;
}

/// Boxes resting on the floor or stacked in mid-air, plus small spheres.
/// Object centres stay within |x|, |z| <= 3 so orbiting cameras see them.
inline Scene generate_scene(std::uint64_t seed) {
  Scene s;
  s.seed = seed;
  std::mt19937_64 rng(seed ^ 0x5ce7e5eedull);
  std::uniform_real_distribution<double> pos(-3.0, 3.0), size(0.5, 1.6), height(0.6, 2.2), u01(0.0, 1.0), rad(0.12, 0.25);
  std::uniform_int_distribution<std::size_t> color(0, palette().size() - 1);
  std::uniform_int_distribution<int> n_boxes(8, 12), n_splats(6, 14);

  const double floor_y = s.room.hi.y();
  const int nb = n_boxes(rng);
  for (int i = 0; i < nb; ++i) {
    Box b;
    const double cx = pos(rng), cz = pos(rng), sx = size(rng), sz = size(rng), sy = height(rng);
    const bool floating = u01(rng) < 0.25;
    const double bottom = floating ? floor_y - 0.8 - 1.0 * u01(rng) : floor_y;
    b.lo = {cx - sx / 2, bottom - sy, cz - sz / 2};
    b.hi = {cx + sx / 2, bottom, cz + sz / 2};
    b.lo = b.lo.cwiseMax(s.room.lo);
    b.hi = b.hi.cwiseMin(s.room.hi);
    b.color = color(rng);
    s.boxes.push_back(b);
  }
  const int ns = n_splats(rng);
  for (int i = 0; i < ns; ++i) {
    Splat p;
    p.radius = rad(rng);
    p.center = {pos(rng), floor_y - p.radius - 2.5 * u01(rng), pos(rng)};
    p.color = color(rng);
    s.splats.push_back(p);
  }
  return s;
}

}  // namespace ctxvid::harness
