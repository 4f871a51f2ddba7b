#include "wavec2r/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wavec2r/errors.hpp"

namespace wavec2r::diffusion {

const char* schedule_kind_name(ScheduleKind k) {
  return k == ScheduleKind::linear ? "linear" : "cosine";
}

ScheduleKind schedule_kind_from_name(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw ConfigurationError("unknown noise schedule '" + name + "' (expected linear or cosine)");
}

const char* sampler_kind_name(SamplerKind k) {
  return k == SamplerKind::ancestral ? "ancestral" : "deterministic";
}

SamplerKind sampler_kind_from_name(const std::string& name) {
  if (name == "ancestral") return SamplerKind::ancestral;
  if (name == "deterministic") return SamplerKind::deterministic;
  throw ConfigurationError("unknown sampler '" + name + "' (expected deterministic or ancestral)");
}

// ------------------------------------------------------------- NoiseSchedule

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas, ScheduleKind kind) {
  if (betas.empty()) throw ValidationError("noise schedule needs at least one step");
  NoiseSchedule s;
  s.kind_ = kind;
  double ab = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw ValidationError("noise schedule betas must lie in (0, 1)");
    ab *= 1.0 - b;
    s.alpha_bar_.push_back(ab);
  }
  s.beta_ = std::move(betas);
  s.model_steps_.resize(s.beta_.size());
  std::iota(s.model_steps_.begin(), s.model_steps_.end(), 1);
  return s;
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps <= 0) throw ValidationError("noise schedule needs at least one step");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    betas[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
  }
  return from_betas(std::move(betas), ScheduleKind::linear);
}

NoiseSchedule NoiseSchedule::cosine(int steps, double offset) {
  if (steps <= 0) throw ValidationError("noise schedule needs at least one step");
  auto f = [&](int t) {
    const double c = std::cos((static_cast<double>(t) / steps + offset) / (1.0 + offset) * M_PI / 2.0);
    return c * c;
  };
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) betas[t - 1] = std::min(1.0 - f(t) / f(t - 1), 0.999);
  return from_betas(std::move(betas), ScheduleKind::cosine);
}

NoiseSchedule NoiseSchedule::respaced(int count) const {
  const int total = steps();
  if (count <= 0 || count > total) {
    throw ValidationError("respaced step count must lie in [1, " + std::to_string(total) + "]");
  }
  NoiseSchedule s;
  s.kind_ = kind_;
  double prev = 1.0;
  for (int i = 1; i <= count; ++i) {
    const int t = static_cast<int>(std::lround(static_cast<double>(i) * total / count));
    const double ab = alpha_bar(t);
    s.beta_.push_back(1.0 - ab / prev);
    s.alpha_bar_.push_back(ab);
    s.model_steps_.push_back(model_timestep(t));
    prev = ab;
  }
  return s;
}

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps()) {
    throw ValidationError("diffusion step " + std::to_string(t) + " outside [1, " +
                          std::to_string(steps()) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  check_step(t);
  return beta_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  check_step(t);
  return alpha_bar_[t - 1];
}

double NoiseSchedule::posterior_variance(int t) const {
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

int NoiseSchedule::model_timestep(int t) const {
  check_step(t);
  return model_steps_[t - 1];
}

// ------------------------------------------------------------------ q_sample

Raster q_sample(const Raster& x0, int t, const Raster& eps, const NoiseSchedule& schedule) {
  if (!x0.same_shape(eps)) throw ValidationError("q_sample: x0 and eps differ in shape");
  const double ab = schedule.alpha_bar(t);
  if (t == 0) throw ValidationError("q_sample: step must be >= 1");
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Raster z(x0.height(), x0.width(), 0.0, x0.modality());
  for (std::size_t i = 0; i < z.size(); ++i) z.values()[i] = a * x0.values()[i] + b * eps.values()[i];
  return z;
}

Tensor q_sample(const Tensor& x0, const std::vector<int>& t, const Tensor& eps,
                const NoiseSchedule& schedule) {
  require_same_shape(x0, eps, "q_sample");
  if (x0.rank() == 0 || static_cast<std::size_t>(x0.dim(0)) != t.size()) {
    throw ValidationError("q_sample: one step per batch entry required");
  }
  Tensor z(x0.shape());
  const std::size_t per = x0.size() / t.size();
  for (std::size_t n = 0; n < t.size(); ++n) {
    if (t[n] < 1) throw ValidationError("q_sample: step must be >= 1");
    const double ab = schedule.alpha_bar(t[n]);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) z[i] = a * x0[i] + b * eps[i];
  }
  return z;
}

// ------------------------------------------------------ FreqFeatureExtractor

FreqFeatureExtractor::FreqFeatureExtractor(nn::ParameterSet& params, const std::string& name,
                                           int in_channels, int width, std::mt19937_64& rng)
    : in_channels_(in_channels) {
  auto path = [&](const std::string& p) {
    return Path{nn::Conv2d(params, p + ".in", in_channels, width, 1, rng),
                nn::Conv2d(params, p + ".dw", width, width, 3, rng, {.padding = 1, .groups = width}),
                nn::Conv2d(params, p + ".out", width, width, 1, rng)};
  };
  low_ = path(name + ".lf");
  high_ = path(name + ".hf");
}

FreqFeatureExtractor::Output FreqFeatureExtractor::operator()(const ag::Var& stack) const {
  if (stack.value().rank() != 4 || stack.dim(1) != in_channels_) {
    throw ValidationError("frequency extractor: expected (N, " + std::to_string(in_channels_) +
                          ", H, W), got " + to_string(stack.shape()));
  }
  if (stack.dim(2) % 2 || stack.dim(3) % 2) {
    throw ValidationError("frequency extractor: H and W must be even, got " + to_string(stack.shape()));
  }
  const int c = in_channels_;
  const ag::Var bands = ag::dwt2(stack);
  const ag::Var ll = ag::slice_channels(bands, 0, c);
  const ag::Var high = ag::add(ag::add(ag::slice_channels(bands, c, c), ag::slice_channels(bands, 2 * c, c)),
                               ag::slice_channels(bands, 3 * c, c));
  return {low_(ll), high_(high)};
}

// ------------------------------------------------------------------ Denoiser

Denoiser::Denoiser(const DenoiserConfig& cfg) : cfg_(cfg) {
  const int w0 = cfg.widths[0], w1 = cfg.widths[1];
  if (cfg.in_channels <= 0 || w0 <= 0 || w1 <= 0 || cfg.feature_width <= 0 || w0 % 2) {
    throw ValidationError("denoiser: channels and widths must be positive, widths[0] even");
  }
  if (!(cfg.sigma_data >= 0.0) || !std::isfinite(cfg.sigma_data)) {
    throw ValidationError("denoiser: sigma_data must be finite and non-negative");
  }
  if (cfg.sigma_data > 0.0 && cfg.schedule.steps() == 0) {
    throw ValidationError("denoiser: preconditioning needs a schedule");
  }
  std::mt19937_64 rng(cfg.seed);
  auto& p = params_;
  const int tdim = 4 * w0;
  if (cfg.use_hlf) extractor_ = FreqFeatureExtractor(p, "freq", cfg.in_channels, cfg.feature_width, rng);
  time1_ = nn::Linear(p, "time.fc1", w0, tdim, rng);
  time2_ = nn::Linear(p, "time.fc2", tdim, tdim, rng);
  stem_ = nn::Conv2d(p, "stem", 2 + cfg.in_channels, w0, 3, rng, {.padding = 1});
  enc1_ = nn::ResBlock2D(p, "enc1", w0, w0, 1, rng, tdim);
  down1_ = nn::ResBlock2D(p, "down1", w0, w1, 2, rng, tdim);
  if (cfg.use_hlf) inject_ = nn::Conv2d(p, "inject", 2 * cfg.feature_width, w1, 1, rng);
  enc2_ = nn::ResBlock2D(p, "enc2", w1, w1, 1, rng, tdim);
  down2_ = nn::ResBlock2D(p, "down2", w1, w1, 2, rng, tdim);
  mid_ = nn::ResBlock2D(p, "mid", w1, w1, 1, rng, tdim);
  up2_ = nn::Upsample(p, "up2", w1, w1, rng);
  dec2_ = nn::ResBlock2D(p, "dec2", 2 * w1, w1, 1, rng, tdim);
  up1_ = nn::Upsample(p, "up1", w1, w0, rng);
  dec1_ = nn::ResBlock2D(p, "dec1", 2 * w0, w0, 1, rng, tdim);
  head_norm_ = nn::GroupNorm(p, "head.norm", w0);
  head_ = nn::Conv2d(p, "head.conv", w0, 1, 3, rng, {.padding = 1});
}

ag::Var Denoiser::time_features(const std::vector<int>& timesteps, int batch) const {
  if (static_cast<int>(timesteps.size()) != batch) {
    throw ValidationError("denoiser: one timestep per batch entry required");
  }
  const ag::Var emb = ag::constant(nn::timestep_embedding(timesteps, cfg_.widths[0]));
  return time2_(ag::gelu(time1_(emb)));
}

ag::Var Denoiser::forward(const ag::Var& z_t, const ag::Var& mu, const ag::Var& x,
                          const std::vector<int>& timesteps) const {
  return forward(z_t, mu, x, cfg_.use_hlf ? extractor_(x) : FreqFeatureExtractor::Output{}, timesteps);
}

ag::Var Denoiser::forward(const ag::Var& z_t, const ag::Var& mu, const ag::Var& x,
                          const FreqFeatureExtractor::Output& priors,
                          const std::vector<int>& timesteps) const {
  const Shape& zs = z_t.shape();
  if (zs.size() != 4 || zs[1] != 1 || mu.shape() != zs) {
    throw ValidationError("denoiser: z_t and mu must both be (N, 1, H, W), got " + to_string(zs) +
                          " and " + to_string(mu.shape()));
  }
  if (x.value().rank() != 4 || x.dim(0) != zs[0] || x.dim(1) != cfg_.in_channels || x.dim(2) != zs[2] ||
      x.dim(3) != zs[3]) {
    throw ValidationError("denoiser: observation stack " + to_string(x.shape()) +
                          " inconsistent with z_t " + to_string(zs));
  }
  if (zs[2] % 4 || zs[3] % 4) throw ValidationError("denoiser: H and W must be divisible by 4");

  const ag::Var temb = time_features(timesteps, zs[0]);
  const double sd = cfg_.sigma_data;
  Tensor c_in, c_z, c_f;
  if (sd > 0.0) {
    c_in = Tensor(zs);
    c_z = Tensor(zs);
    c_f = Tensor(zs);
    const std::size_t per = c_in.size() / static_cast<std::size_t>(zs[0]);
    for (int i = 0; i < zs[0]; ++i) {
      const double ab = cfg_.schedule.alpha_bar(timesteps[static_cast<std::size_t>(i)]);
      const double s2 = (1.0 - ab) / ab, sigma = std::sqrt(s2), norm = s2 + sd * sd;
      for (std::size_t k = i * per; k < (i + 1) * per; ++k) {
        c_in[k] = 1.0 / std::sqrt(1.0 - ab + ab * sd * sd);
        c_z[k] = sigma / (norm * std::sqrt(ab));
        c_f[k] = sd / std::sqrt(norm);
      }
    }
  }
  const ag::Var z_in = sd > 0.0 ? ag::mul(z_t, ag::constant(c_in)) : z_t;
  const ag::Var inputs[] = {z_in, mu, x};
  const ag::Var s1 = enc1_(stem_(ag::concat_channels(inputs)), temb);
  ag::Var h = down1_(s1, temb);
  if (cfg_.use_hlf) {
    const Shape expect{zs[0], cfg_.feature_width, zs[2] / 2, zs[3] / 2};
    if (!priors.f_lf.defined() || priors.f_lf.shape() != expect || priors.f_hf.shape() != expect) {
      throw ValidationError("denoiser: wavelet priors must be " + to_string(expect));
    }
    const ag::Var fused[] = {priors.f_lf, priors.f_hf};
    h = ag::add(h, inject_(ag::concat_channels(fused)));
  }
  const ag::Var s2 = enc2_(h, temb);
  h = mid_(down2_(s2, temb), temb);
  const ag::Var cat2[] = {up2_(h), s2};
  h = dec2_(ag::concat_channels(cat2), temb);
  const ag::Var cat1[] = {up1_(h), s1};
  h = dec1_(ag::concat_channels(cat1), temb);
  const ag::Var out = head_(ag::gelu(head_norm_(h)));
  if (sd == 0.0) return out;
  return ag::sub(ag::mul(z_t, ag::constant(c_z)), ag::mul(out, ag::constant(c_f)));
}

namespace {

Tensor stack_tensor(const ObservationStack& stack) {
  return stack.channels.reshaped({1, stack.channel_count(), stack.height(), stack.width()});
}

}  // namespace

ConditioningBundle make_conditioning(const CoarseEstimate& mu, const ObservationStack& stack,
                                     const Denoiser& model) {
  stack.validate();
  if (mu.height() != stack.height() || mu.width() != stack.width()) {
    throw ValidationError("conditioning: coarse estimate and stack differ in shape");
  }
  if (stack.channel_count() != model.config().in_channels) {
    throw ValidationError("conditioning: stack has " + std::to_string(stack.channel_count()) +
                          " channels, model expects " + std::to_string(model.config().in_channels));
  }
  ConditioningBundle c{mu, stack, {}, {}};
  if (model.config().use_hlf) {
    ag::NoGradGuard no_grad;
    const auto p = model.priors(ag::constant(stack_tensor(stack)));
    c.f_lf = p.f_lf.value();
    c.f_hf = p.f_hf.value();
  }
  return c;
}

Raster denoiser_forward(const Raster& z_t, const ConditioningBundle& cond, int timestep,
                        const Denoiser& model) {
  if (!z_t.same_shape(cond.mu)) throw ValidationError("denoiser: z_t and mu differ in shape");
  ag::NoGradGuard no_grad;
  FreqFeatureExtractor::Output priors;
  if (model.config().use_hlf) priors = {ag::constant(cond.f_lf), ag::constant(cond.f_hf)};
  const Tensor eps = model
                         .forward(ag::constant(z_t.to_tensor()), ag::constant(cond.mu.to_tensor()),
                                  ag::constant(stack_tensor(cond.stack)), priors, {timestep})
                         .value();
  return Raster::from_tensor(eps, 0, 0, z_t.modality());
}

// ------------------------------------------------------------------ sampling

DiffusionState p_sample_step(const DiffusionState& state, const EpsPredictor& predict,
                             const NoiseSchedule& schedule, std::mt19937_64& rng,
                             const SamplerOptions& options) {
  const int t = state.t;
  if (t < 1) throw ValidationError("p_sample_step: state is already at t = 0");
  const Raster eps = predict(state.z, schedule.model_timestep(t));
  if (!eps.same_shape(state.z)) throw ValidationError("p_sample_step: eps prediction shape mismatch");

  const double ab = schedule.alpha_bar(t), ab_prev = schedule.alpha_bar(t - 1);
  const double beta = schedule.beta(t);
  const double c_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
  const double c_z = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
  const double sigma = t > 1 ? std::sqrt(schedule.posterior_variance(t)) : 0.0;
  const double inv_sqrt_ab = 1.0 / std::sqrt(ab), noise_scale = std::sqrt(1.0 - ab);

  std::normal_distribution<double> normal(0.0, 1.0);
  DiffusionState next{state.z, t - 1};
  for (std::size_t i = 0; i < next.z.size(); ++i) {
    const double z = state.z.values()[i];
    double x0 = (z - noise_scale * eps.values()[i]) * inv_sqrt_ab;
    if (options.clip_x0) x0 = std::clamp(x0, options.x0_min, options.x0_max);
    double v = c_x0 * x0 + c_z * z;
    if (t > 1) v += sigma * normal(rng);
    next.z.values()[i] = v;
  }
  return next;
}

DiffusionState ddim_step(const DiffusionState& state, const EpsPredictor& predict,
                         const NoiseSchedule& schedule, const SamplerOptions& options) {
  const int t = state.t;
  if (t < 1) throw ValidationError("ddim_step: state is already at t = 0");
  const Raster eps = predict(state.z, schedule.model_timestep(t));
  if (!eps.same_shape(state.z)) throw ValidationError("ddim_step: eps prediction shape mismatch");

  const double ab = schedule.alpha_bar(t), ab_prev = schedule.alpha_bar(t - 1);
  const double sqrt_ab = std::sqrt(ab), sqrt_1mab = std::sqrt(1.0 - ab);
  DiffusionState next{state.z, t - 1};
  for (std::size_t i = 0; i < next.z.size(); ++i) {
    const double z = state.z.values()[i];
    double x0 = (z - sqrt_1mab * eps.values()[i]) / sqrt_ab;
    if (options.clip_x0) x0 = std::clamp(x0, options.x0_min, options.x0_max);
    const double e = (z - sqrt_ab * x0) / sqrt_1mab;
    next.z.values()[i] = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * e;
  }
  return next;
}

Raster sample_chain(int height, int width, const EpsPredictor& predict, const NoiseSchedule& schedule,
                    std::mt19937_64& rng, const SamplerOptions& options) {
  if (height <= 0 || width <= 0) throw ValidationError("sample_chain: empty grid");
  DiffusionState state{Raster(height, width, 0.0, Modality::vil), schedule.steps()};
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : state.z.values()) v = normal(rng);
  while (state.t > 0) {
    state = options.kind == SamplerKind::deterministic ? ddim_step(state, predict, schedule, options)
                                                       : p_sample_step(state, predict, schedule, rng, options);
  }
  return state.z;
}

Raster refine(const CoarseEstimate& mu, const ObservationStack& stack, const Denoiser& model,
              const NoiseSchedule& schedule, std::mt19937_64& rng, const RefineOptions& options) {
  if (stack.channel_count() != model.config().in_channels) {
    throw ValidationError("refine: stack has " + std::to_string(stack.channel_count()) +
                          " channels, model expects " + std::to_string(model.config().in_channels));
  }
  const ConditioningBundle cond = make_conditioning(mu, stack, model);
  const NoiseSchedule sampler = schedule.respaced(std::min(options.sampling_steps, schedule.steps()));
  SamplerOptions so;
  so.kind = options.sampler;
  if (options.residual) so.x0_min = -1.0;
  const EpsPredictor predict = [&](const Raster& z, int t) { return denoiser_forward(z, cond, t, model); };
  Raster y = sample_chain(mu.height(), mu.width(), predict, sampler, rng, so);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = y.values()[i] + (options.residual ? mu.values()[i] : 0.0);
    y.values()[i] = std::clamp(v, 0.0, 1.0);
  }
  return y;
}

// ------------------------------------------------------------------ training

std::vector<Stage2Sample> attach_coarse(std::span<const wtformer::Sample> samples,
                                        const wtformer::Wtformer& stage1) {
  std::vector<Stage2Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.stack, wtformer::wtformer_forward(s.stack, stage1), s.target});
  return out;
}

namespace {

struct Batch {
  Tensor x, mu, y;
};

Batch make_batch(std::span<const Stage2Sample> data, std::span<const std::size_t> idx) {
  std::vector<ObservationStack> stacks;
  std::vector<Raster> mus, ys;
  for (std::size_t i : idx) {
    stacks.push_back(data[i].stack);
    mus.push_back(data[i].mu);
    ys.push_back(data[i].target);
  }
  return {batch_stacks(stacks), batch_rasters(mus), batch_rasters(ys)};
}

}  // namespace

Stage2Result train_stage2(Denoiser& model, std::span<const Stage2Sample> dataset,
                          const NoiseSchedule& schedule, const Stage2Config& cfg, const Stage2Hook& on_nan) {
  if (dataset.empty()) throw ValidationError("stage 2: training dataset is empty");
  if (cfg.steps <= 0 || cfg.batch_size <= 0) throw ValidationError("stage 2: steps and batch size must be positive");
  if (cfg.lambda_freq < 0.0 || !std::isfinite(cfg.lambda_freq)) {
    throw ValidationError("stage 2: lambda_freq must be finite and non-negative");
  }
  cfg.fibl.validate();
  for (const auto& s : dataset) {
    s.stack.validate();
    if (s.stack.channel_count() != model.config().in_channels) {
      throw ValidationError("stage 2: sample channel count does not match the denoiser");
    }
    if (!s.mu.same_shape(s.target) || s.target.height() != s.stack.height() ||
        s.target.width() != s.stack.width()) {
      throw ValidationError("stage 2: sample stack, coarse estimate and target differ in shape");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> draw_t(1, schedule.steps());
  nn::Adam optimizer(model.parameters(), {.learning_rate = cfg.learning_rate, .clip_norm = cfg.clip_norm});

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const bool full_batch = static_cast<std::size_t>(cfg.batch_size) >= dataset.size();
  const Batch full = full_batch ? make_batch(dataset, order) : Batch{};

  Stage2Result result;
  for (int step = 0; step < cfg.steps; ++step) {
    Batch partial;
    if (!full_batch) {
      std::shuffle(order.begin(), order.end(), rng);
      partial = make_batch(dataset, std::span(order).first(static_cast<std::size_t>(cfg.batch_size)));
    }
    const Batch& b = full_batch ? full : partial;
    const int n = b.y.dim(0);

    std::vector<int> t(static_cast<std::size_t>(n));
    for (int& v : t) v = draw_t(rng);
    const Tensor eps = Tensor::randn(b.y.shape(), rng);
    const Tensor x0 = cfg.residual ? b.y - b.mu : b.y;
    const Tensor z = q_sample(x0, t, eps, schedule);

    // x0^ = z / sqrt(ab) - eps^ * sqrt(1 - ab) / sqrt(ab), per batch entry.
    Tensor z_scaled(z.shape()), eps_coef(z.shape());
    const std::size_t per = z.size() / static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
      const double ab = schedule.alpha_bar(t[i]);
      for (std::size_t k = i * per; k < (i + 1) * per; ++k) {
        z_scaled[k] = z[k] / std::sqrt(ab);
        eps_coef[k] = std::sqrt((1.0 - ab) / ab);
      }
    }

    model.parameters().zero_grad();
    const ag::Var mu = ag::constant(b.mu);
    const ag::Var eps_pred = model.forward(ag::constant(z), mu, ag::constant(b.x), t);
    ag::Var x0_hat = ag::sub(ag::constant(z_scaled), ag::mul(eps_pred, ag::constant(eps_coef)));
    if (cfg.residual) x0_hat = ag::add(x0_hat, mu);
    const losses::Stage2Terms terms =
        losses::stage2_loss(eps_pred, ag::constant(eps), x0_hat, ag::constant(b.y), cfg.lambda_freq, cfg.fibl);

    Stage2Step rec{step, t, terms.total.item(), terms.diffusion.item(), terms.wavelet.item(), 0.0};
    if (!std::isfinite(rec.total)) {
      if (on_nan) on_nan(model, step);
      throw NumericError("stage 2: non-finite loss at step " + std::to_string(step));
    }
    terms.total.backward();
    rec.grad_norm = optimizer.step();
    result.history.push_back(std::move(rec));
  }
  return result;
}

}  // namespace wavec2r::diffusion
