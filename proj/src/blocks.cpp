#include "wavec2r/blocks.hpp"

namespace wavec2r::nn {

ResBlock2D::ResBlock2D(ParameterSet& params, const std::string& name, int in_channels,
                       int out_channels, int stride, std::mt19937_64& rng, int time_dim)
    : norm1_(params, name + ".norm1", in_channels),
      conv1_(params, name + ".conv1", in_channels, out_channels, 3, rng,
             {.stride = stride, .padding = 1}),
      norm2_(params, name + ".norm2", out_channels),
      conv2_(params, name + ".conv2", out_channels, out_channels, 3, rng, {.padding = 1}),
      has_shortcut_(in_channels != out_channels || stride != 1),
      has_time_(time_dim > 0) {
  if (has_time_) time_proj_ = Linear(params, name + ".time", time_dim, out_channels, rng);
  if (has_shortcut_) {
    shortcut_ = Conv2d(params, name + ".shortcut", in_channels, out_channels, 1, rng, {.stride = stride});
  }
}

ag::Var ResBlock2D::operator()(const ag::Var& x, const ag::Var& time_embedding) const {
  ag::Var h = conv1_(ag::gelu(norm1_(x)));
  if (has_time_ && time_embedding.defined()) {
    h = ag::add_channel_embedding(h, time_proj_(time_embedding));
  }
  h = conv2_(ag::gelu(norm2_(h)));
  return ag::add(has_shortcut_ ? shortcut_(x) : x, h);
}

Upsample::Upsample(ParameterSet& params, const std::string& name, int in_channels,
                   int out_channels, std::mt19937_64& rng)
    : conv_(params, name + ".conv", in_channels, out_channels, 3, rng, {.padding = 1}) {}

}  // namespace wavec2r::nn
