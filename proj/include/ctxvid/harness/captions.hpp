#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "ctxvid/harness/scene.hpp"
#include "ctxvid/harness/trajectory.hpp"

namespace ctxvid::harness {

/// Closed word list of the caption templates. Id 0 is the null token used by
/// the unconditional branch.
inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w{"<null>", "a", "room", "with", "and", "box", "boxes", "sphere", "spheres",
                               "camera", "pans", "orbits", "dollies", "few", "many"};
    for (const auto& c : palette()) w.emplace_back(c.name);
    return w;
  }();
  return words;
}

/// "a room with a red box and a blue box ... camera orbits". Lists up to four
/// boxes in generation order, then summarises the spheres.
inline std::string make_caption(const Scene& s, TrajectoryKind kind) {
  std::ostringstream os;
  os << "a room with";
  const std::size_t listed = std::min<std::size_t>(4, s.boxes.size());
  for (std::size_t i = 0; i < listed; ++i) os << (i ? " and" : "") << " a " << palette()[s.boxes[i].color].name << " box";
  if (s.boxes.size() > listed) os << " and " << (s.boxes.size() - listed > 3 ? "many" : "few") << " boxes";
  if (!s.splats.empty()) os << " and " << (s.splats.size() > 9 ? "many" : "few") << " spheres";
  os << " camera " << (kind == TrajectoryKind::pan ? "pans" : kind == TrajectoryKind::orbit ? "orbits" : "dollies");
  return os.str();
}

inline std::vector<std::size_t> tokenize(const std::string& caption) {
  const auto& vocab = vocabulary();
  std::vector<std::size_t> ids;
  std::istringstream is(caption);
  for (std::string w; is >> w;) {
    const auto it = std::find(vocab.begin(), vocab.end(), w);
    if (it == vocab.end() || it == vocab.begin()) throw ConfigError("caption word '" + w + "' is not in the vocabulary");
    ids.push_back(std::size_t(it - vocab.begin()));
  }
  return ids;
}

}  // namespace ctxvid::harness
