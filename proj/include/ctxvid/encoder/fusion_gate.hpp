#pragma once

#include "ctxvid/nn/conv3d.hpp"

namespace ctxvid::encoder {

using nn::Graph;
using nn::Var;
using nn::Volume;
using nn::add;
using nn::concat_cols;

/// fused = z_ref + ZeroConv3D([z_ref, F_vis]); the convolution starts at zero
/// so an untrained gate leaves the native condition untouched.
template <class S>
class FusionGate {
 public:
  FusionGate() = default;
  FusionGate(nn::ParamStore<S>& store, const std::string& name, std::size_t channels, std::size_t vis_dim, std::mt19937_64& rng)
      : conv_(store, name, channels + vis_dim, channels, rng, true), channels_(channels), vis_dim_(vis_dim) {}

  Var<S> operator()(Graph<S>& g, const Var<S>& z_ref, const Var<S>& f_vis, const Volume& vol) const {
    if (z_ref.rows() != vol.size() || f_vis.rows() != vol.size() || z_ref.cols() != channels_ || f_vis.cols() != vis_dim_)
      throw ShapeError("fusion gate: z_ref " + shape_str(z_ref.value().shape()) + ", F_vis " + shape_str(f_vis.value().shape()));
    return add(z_ref, conv_(g, concat_cols<S>({z_ref, f_vis}), vol));
  }

  const nn::Conv3d<S>& conv() const { return conv_; }

 private:
  nn::Conv3d<S> conv_;
  std::size_t channels_ = 0, vis_dim_ = 0;
};

}  // namespace ctxvid::encoder
