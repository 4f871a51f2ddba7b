#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "wavec2r/autograd.hpp"

namespace wavec2r::nn {

/// Ordered, named collection of trainable leaves.
class ParameterSet {
 public:
  ag::Var create(const std::string& name, Tensor init);

  const std::vector<std::pair<std::string, ag::Var>>& entries() const noexcept { return entries_; }
  std::vector<std::pair<std::string, ag::Var>>& entries() noexcept { return entries_; }

  /// Nullptr when absent.
  ag::Var* find(const std::string& name);
  std::size_t count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, ag::Var>> entries_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(Shape shape, int fan_in, std::mt19937_64& rng);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet& params, const std::string& name, int in_channels, int out_channels,
         int kernel, std::mt19937_64& rng, ag::Conv2dOptions opts = {});

  ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, weight_, bias_, opts_); }

  /// Zero weights and bias; the layer then outputs zeros.
  void zero();

  const ag::Var& weight() const { return weight_; }

 private:
  ag::Var weight_;
  ag::Var bias_;
  ag::Conv2dOptions opts_;
};

/// Group count used for `channels`: the largest divisor of channels <= 8.
int default_groups(int channels);

class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(ParameterSet& params, const std::string& name, int channels);
  ag::Var operator()(const ag::Var& x) const;

 private:
  ag::Var gamma_;
  ag::Var beta_;
  int groups_ = 1;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, int in_features, int out_features,
         std::mt19937_64& rng);
  ag::Var operator()(const ag::Var& x) const { return ag::linear(x, weight_, bias_); }
  void zero();

 private:
  ag::Var weight_;
  ag::Var bias_;
};

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 1.0;
};

class Adam {
 public:
  Adam(ParameterSet& params, AdamOptions options);

  /// Applies one update from the current gradients and returns the global
  /// gradient norm before clipping.
  double step();

  const AdamOptions& options() const noexcept { return options_; }

 private:
  ParameterSet& params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long step_ = 0;
};

/// Sinusoidal embedding of integer steps: (N, dim), first half sin, second
/// half cos, frequencies 10000^(-k / (dim/2)).
Tensor timestep_embedding(const std::vector<int>& steps, int dim);

}  // namespace wavec2r::nn
