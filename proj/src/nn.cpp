#include "wavec2r/nn.hpp"

#include <cmath>

#include "wavec2r/errors.hpp"

namespace wavec2r::nn {

ag::Var ParameterSet::create(const std::string& name, Tensor init) {
  if (find(name)) throw ConfigurationError("duplicate parameter name '" + name + "'");
  entries_.emplace_back(name, ag::parameter(std::move(init)));
  return entries_.back().second;
}

ag::Var* ParameterSet::find(const std::string& name) {
  for (auto& [n, v] : entries_)
    if (n == name) return &v;
  return nullptr;
}

std::size_t ParameterSet::count() const {
  std::size_t total = 0;
  for (const auto& [n, v] : entries_) total += v.value().size();
  return total;
}

void ParameterSet::zero_grad() {
  for (auto& [n, v] : entries_) v.zero_grad();
}

Tensor fan_in_uniform(Shape shape, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  return Tensor::uniform(std::move(shape), rng, -bound, bound);
}

Conv2d::Conv2d(ParameterSet& params, const std::string& name, int in_channels, int out_channels,
               int kernel, std::mt19937_64& rng, ag::Conv2dOptions opts)
    : opts_(opts) {
  const int fan_in = in_channels / opts.groups * kernel * kernel;
  weight_ = params.create(name + ".weight",
                          fan_in_uniform({out_channels, in_channels / opts.groups, kernel, kernel},
                                         fan_in, rng));
  bias_ = params.create(name + ".bias", fan_in_uniform({out_channels}, fan_in, rng));
}

void Conv2d::zero() {
  weight_.mutable_value().fill(0.0);
  bias_.mutable_value().fill(0.0);
}

int default_groups(int channels) {
  for (int g = 8; g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

GroupNorm::GroupNorm(ParameterSet& params, const std::string& name, int channels)
    : groups_(default_groups(channels)) {
  gamma_ = params.create(name + ".gamma", Tensor({channels}, 1.0));
  beta_ = params.create(name + ".beta", Tensor({channels}, 0.0));
}

ag::Var GroupNorm::operator()(const ag::Var& x) const {
  return ag::group_norm(x, gamma_, beta_, groups_);
}

Linear::Linear(ParameterSet& params, const std::string& name, int in_features, int out_features,
               std::mt19937_64& rng) {
  weight_ = params.create(name + ".weight", fan_in_uniform({in_features, out_features}, in_features, rng));
  bias_ = params.create(name + ".bias", fan_in_uniform({out_features}, in_features, rng));
}

void Linear::zero() {
  weight_.mutable_value().fill(0.0);
  bias_.mutable_value().fill(0.0);
}

Adam::Adam(ParameterSet& params, AdamOptions options) : params_(params), options_(options) {
  for (const auto& [name, v] : params_.entries()) {
    m_.emplace_back(v.shape());
    v_.emplace_back(v.shape());
  }
}

double Adam::step() {
  auto& entries = params_.entries();
  double sq = 0.0;
  for (const auto& [name, v] : entries) {
    if (v.grad().empty()) continue;
    for (double g : v.grad().values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  const double clip =
      (options_.clip_norm > 0.0 && norm > options_.clip_norm) ? options_.clip_norm / norm : 1.0;

  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    ag::Var& var = entries[p].second;
    if (var.grad().empty()) continue;
    Tensor& value = var.mutable_value();
    const Tensor& grad = var.grad();
    Tensor& m = m_[p];
    Tensor& v = v_[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] * clip;
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      value[i] -= options_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
    }
  }
  return norm;
}

Tensor timestep_embedding(const std::vector<int>& steps, int dim) {
  if (dim <= 0 || dim % 2) throw ValidationError("timestep embedding dimension must be even");
  const int half = dim / 2;
  Tensor out({static_cast<int>(steps.size()), dim});
  for (std::size_t n = 0; n < steps.size(); ++n) {
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / half);
      const double arg = steps[n] * freq;
      out[n * dim + k] = std::sin(arg);
      out[n * dim + half + k] = std::cos(arg);
    }
  }
  return out;
}

}  // namespace wavec2r::nn
