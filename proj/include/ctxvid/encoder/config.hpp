#pragma once

#include <stdexcept>
#include <string>

#include "ctxvid/nn/tensor.hpp"

namespace ctxvid::encoder {

/// Which context streams feed the denoiser.
enum class Stream { both, semantic, visual };

inline Stream parse_stream(const std::string& s) {
  if (s == "both") return Stream::both;
  if (s == "semantic") return Stream::semantic;
  if (s == "visual") return Stream::visual;
  throw ConfigError("unknown stream '" + s + "' (expected both, semantic or visual)");
}

inline std::string to_string(Stream s) {
  switch (s) {
    case Stream::both: return "both";
    case Stream::semantic: return "semantic";
    case Stream::visual: return "visual";
  }
  return "both";
}

/// Raised when a context-conditioned forward pass receives no context frames.
class MissingContextError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EncoderConfig {
  std::size_t dim = 32;          // token width of both streams
  std::size_t heads = 4;
  std::size_t sem_queries = 16;  // |T_sem|
  std::size_t sem_layers = 2;
  std::size_t ffn_mult = 4;
  std::size_t max_context = 4;
  Stream stream = Stream::both;
  bool temporal_embedding = true;

  bool semantic() const { return stream != Stream::visual; }
  bool visual() const { return stream != Stream::semantic; }

  void validate() const {
    if (dim == 0 || dim % 4) throw ConfigError("encoder dim must be a positive multiple of 4");
    if (heads == 0 || dim % heads) throw ConfigError("encoder dim must be divisible by heads");
    if (sem_queries == 0 || sem_layers == 0) throw ConfigError("semantic stream needs queries and layers");
    if (max_context == 0) throw ConfigError("max_context must be at least 1");
  }
};

}  // namespace ctxvid::encoder
