#include "wavec2r/wtformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "wavec2r/errors.hpp"

namespace wavec2r::wtformer {

namespace {

void require_heads(int channels, int heads) {
  if (heads <= 0 || channels % heads) {
    throw ValidationError("channel count " + std::to_string(channels) +
                          " is not divisible by head count " + std::to_string(heads));
  }
}

}  // namespace

// ------------------------------------------------------------ WindowAttention

WindowAttention::WindowAttention(nn::ParameterSet& params, const std::string& name, int channels,
                                 int heads, std::mt19937_64& rng)
    : qkv_(params, name + ".qkv", channels, 3 * channels, 1, rng),
      out_(params, name + ".out", channels, channels, 1, rng),
      channels_(channels),
      heads_(heads) {
  require_heads(channels, heads);
}

ag::Var WindowAttention::operator()(const ag::Var& features, int window,
                                    ag::AttentionProbe* probe) const {
  if (features.value().rank() != 4 || features.dim(1) != channels_) {
    throw ValidationError("window attention: expected (N, " + std::to_string(channels_) +
                          ", H, W), got " + to_string(features.shape()));
  }
  const int h = features.dim(2), w = features.dim(3);
  if (window <= 0 || h % window || w % window) {
    throw ValidationError("window attention: " + std::to_string(h) + "x" + std::to_string(w) +
                          " is not divisible by window " + std::to_string(window));
  }
  const ag::Var qkv = qkv_(features);
  auto tokens = [&](int part) {
    return ag::window_partition(ag::slice_channels(qkv, part * channels_, channels_), window, window);
  };
  const ag::Var attended = ag::attention(tokens(0), tokens(1), tokens(2), heads_, probe);
  return out_(ag::window_merge(attended, features.shape(), window, window));
}

// -------------------------------------------------------------- WthlAttention

WthlAttention::WthlAttention(nn::ParameterSet& params, const std::string& name, int channels,
                             int heads, std::mt19937_64& rng)
    : w_q_(params, name + ".w_q", channels, channels, rng),
      w_k_(params, name + ".w_k", channels, channels, rng),
      w_v_low_(params, name + ".w_v_low", channels, channels, rng),
      w_v_high_(params, name + ".w_v_high", channels, channels, rng),
      band_conv_(params, name + ".band_conv", channels, 4 * channels, 3, rng, {.padding = 1}),
      channels_(channels),
      heads_(heads) {
  require_heads(channels, heads);
}

ag::Var WthlAttention::operator()(const ag::Var& features, ag::AttentionProbe* probe) const {
  if (features.value().rank() != 4 || features.dim(1) != channels_) {
    throw ValidationError("WTHL attention: expected (N, " + std::to_string(channels_) +
                          ", H, W), got " + to_string(features.shape()));
  }
  const int h = features.dim(2), w = features.dim(3);
  if (h % 2 || w % 2) {
    throw ValidationError("WTHL attention: spatial dimensions must be even, got " +
                          to_string(features.shape()));
  }
  const int c = channels_;
  const ag::Var bands = ag::dwt2(features);
  const ag::Var low = ag::slice_channels(bands, 0, c);
  const ag::Var high = ag::add(ag::add(ag::slice_channels(bands, c, c), ag::slice_channels(bands, 2 * c, c)),
                               ag::slice_channels(bands, 3 * c, c));

  // One token per half-resolution position, C features each.
  const int th = h / 2, tw = w / 2;
  const ag::Var low_tokens = ag::window_partition(low, th, tw);
  const ag::Var high_tokens = ag::window_partition(high, th, tw);
  const ag::Var q = w_q_(low_tokens);
  const ag::Var k = w_k_(high_tokens);
  // A_l + A_h = P V_l + P V_h = P (V_l + V_h).
  const ag::Var v = ag::add(w_v_low_(low_tokens), w_v_high_(high_tokens));
  const ag::Var fused = ag::gelu(ag::attention(q, k, v, heads_, probe));

  const Shape half_shape{features.dim(0), c, th, tw};
  return ag::idwt2(band_conv_(ag::window_merge(fused, half_shape, th, tw)));
}

// ------------------------------------------------------------------- WtfBlock

WtfBlock::WtfBlock(nn::ParameterSet& params, const std::string& name, int channels, int heads,
                   int expansion, std::mt19937_64& rng)
    : conv_norm_(params, name + ".conv_norm", channels),
      expand_(params, name + ".expand", channels, expansion * channels, 1, rng),
      depthwise_(params, name + ".depthwise", expansion * channels, expansion * channels, 3, rng,
                 {.padding = 1, .groups = expansion * channels}),
      project_(params, name + ".project", expansion * channels, channels, 1, rng),
      wthl_norm_(params, name + ".wthl_norm", channels),
      wthl_(params, name + ".wthl", channels, heads, rng) {}

ag::Var WtfBlock::operator()(const ag::Var& features, ag::AttentionProbe* probe) const {
  const ag::Var conv_path =
      project_(ag::gelu(depthwise_(ag::gelu(expand_(conv_norm_(features))))));
  const ag::Var wthl_path = wthl_(wthl_norm_(features), probe);
  return ag::add(ag::add(features, conv_path), wthl_path);
}

void WtfBlock::zero_output_projections() {
  project_.zero();
  wthl_.zero_output_projection();
}

// ------------------------------------------------------- WindowAttentionBlock

WindowAttentionBlock::WindowAttentionBlock(nn::ParameterSet& params, const std::string& name,
                                           int channels, int heads, std::mt19937_64& rng)
    : norm_(params, name + ".norm", channels), attn_(params, name + ".attn", channels, heads, rng) {}

ag::Var WindowAttentionBlock::operator()(const ag::Var& x, int window) const {
  return ag::add(x, attn_(norm_(x), window));
}

// ------------------------------------------------------------------- Wtformer

Wtformer::Wtformer(const WtformerConfig& cfg) : cfg_(cfg) {
  const int w0 = cfg.widths[0], w1 = cfg.widths[1];
  if (cfg.in_channels <= 0 || w0 <= 0 || w1 <= 0 || cfg.window <= 0 || cfg.expansion <= 0) {
    throw ValidationError("wtformer: widths, channels, window and expansion must be positive");
  }
  require_heads(w0, cfg.heads);
  require_heads(w1, cfg.heads);
  std::mt19937_64 rng(cfg.seed);
  auto& p = params_;
  auto level = [&](const std::string& name, int in, int width) {
    Level l;
    l.res = nn::ResBlock2D(p, name + ".res", in, width, 1, rng);
    l.attn = WindowAttentionBlock(p, name + ".attn", width, cfg.heads, rng);
    if (cfg.use_wtf) l.wtf = WtfBlock(p, name + ".wtf", width, cfg.heads, cfg.expansion, rng);
    return l;
  };
  stem_ = nn::Conv2d(p, "stem", cfg.in_channels, w0, 3, rng, {.padding = 1});
  enc1_ = level("enc1", w0, w0);
  down1_ = nn::ResBlock2D(p, "down1", w0, w1, 2, rng);
  enc2_ = level("enc2", w1, w1);
  down2_ = nn::ResBlock2D(p, "down2", w1, w1, 2, rng);
  mid_res_ = nn::ResBlock2D(p, "mid.res", w1, w1, 1, rng);
  mid_attn_ = WindowAttentionBlock(p, "mid.attn", w1, cfg.heads, rng);
  up2_ = nn::Upsample(p, "up2", w1, w1, rng);
  dec2_ = level("dec2", 2 * w1, w1);
  up1_ = nn::Upsample(p, "up1", w1, w0, rng);
  dec1_ = level("dec1", 2 * w0, w0);
  head_norm_ = nn::GroupNorm(p, "head.norm", w0);
  head_ = nn::Conv2d(p, "head.conv", w0, 1, 3, rng, {.padding = 1});
}

namespace {

int effective_window(int requested, int h, int w) {
  const int win = std::min({requested, h, w});
  if (h % win || w % win) {
    throw ValidationError("attention window " + std::to_string(win) + " does not divide " +
                          std::to_string(h) + "x" + std::to_string(w));
  }
  return win;
}

}  // namespace

ag::Var Wtformer::run_level(const Level& level, const ag::Var& x) const {
  ag::Var h = level.res(x);
  h = level.attn(h, effective_window(cfg_.window, h.dim(2), h.dim(3)));
  if (cfg_.use_wtf) h = level.wtf(h);
  return h;
}

ag::Var Wtformer::forward(const ag::Var& x) const {
  if (x.value().rank() != 4 || x.dim(1) != cfg_.in_channels) {
    throw ValidationError("wtformer: expected (N, " + std::to_string(cfg_.in_channels) +
                          ", H, W) input, got " + to_string(x.shape()));
  }
  if (x.dim(2) % 4 || x.dim(3) % 4) {
    throw ValidationError("wtformer: H and W must be divisible by 4, got " + to_string(x.shape()));
  }
  const ag::Var s1 = run_level(enc1_, stem_(x));
  const ag::Var s2 = run_level(enc2_, down1_(s1));
  ag::Var h = mid_res_(down2_(s2));
  h = mid_attn_(h, effective_window(cfg_.window, h.dim(2), h.dim(3)));

  const ag::Var cat2[] = {up2_(h), s2};
  h = run_level(dec2_, ag::concat_channels(cat2));
  const ag::Var cat1[] = {up1_(h), s1};
  h = run_level(dec1_, ag::concat_channels(cat1));
  return head_(ag::gelu(head_norm_(h)));
}

void Wtformer::zero_output_projections() {
  for (Level* l : {&enc1_, &enc2_, &dec2_, &dec1_}) {
    l->res.zero_output_projection();
    l->attn.zero_output_projection();
    if (cfg_.use_wtf) l->wtf.zero_output_projections();
  }
  down1_.zero_output_projection();
  down2_.zero_output_projection();
  mid_res_.zero_output_projection();
  mid_attn_.zero_output_projection();
}

CoarseEstimate wtformer_forward(const ObservationStack& stack, const Wtformer& model) {
  stack.validate();
  ag::NoGradGuard no_grad;
  const Tensor x = stack.channels.reshaped({1, stack.channel_count(), stack.height(), stack.width()});
  const Tensor out = model.forward(ag::constant(x)).value();
  Raster mu = Raster::from_tensor(out, 0, 0, Modality::vil);
  for (double& v : mu.values()) v = std::clamp(v, 0.0, 1.0);
  return mu;
}

// ------------------------------------------------------------------- training

namespace {

struct Batch {
  Tensor inputs;
  Tensor targets;
};

Batch make_batch(std::span<const Sample> dataset, const std::vector<std::size_t>& idx) {
  std::vector<ObservationStack> stacks;
  std::vector<Raster> targets;
  for (std::size_t i : idx) {
    stacks.push_back(dataset[i].stack);
    targets.push_back(dataset[i].target);
  }
  return {batch_stacks(stacks), batch_rasters(targets)};
}

void validate_dataset(std::span<const Sample> dataset, int in_channels) {
  if (dataset.empty()) throw ValidationError("training dataset is empty");
  for (const Sample& s : dataset) {
    s.stack.validate();
    if (s.stack.channel_count() != in_channels) {
      throw ValidationError("sample has " + std::to_string(s.stack.channel_count()) +
                            " channels, model expects " + std::to_string(in_channels));
    }
    if (s.target.height() != s.stack.height() || s.target.width() != s.stack.width()) {
      throw ValidationError("sample target and inputs differ in shape");
    }
  }
}

}  // namespace

Stage1Result train_stage1(Wtformer& model, std::span<const Sample> dataset, const Stage1Config& cfg,
                          const DiagnosticHook& on_nan) {
  validate_dataset(dataset, model.config().in_channels);
  if (cfg.steps <= 0 || cfg.batch_size <= 0) {
    throw ValidationError("stage 1: steps and batch size must be positive");
  }

  Stage1Result result;
  losses::FiblConfig fibl_cfg = cfg.fibl;
  if (cfg.alpha_mode == AlphaMode::energy) {
    std::vector<Raster> targets;
    for (const Sample& s : dataset) targets.push_back(s.target);
    fibl_cfg.alpha = losses::alpha_from_energy(targets, cfg.alpha_bounds).alpha;
  }
  fibl_cfg.validate();
  result.alpha = fibl_cfg.alpha;

  std::mt19937_64 batch_rng(cfg.seed);
  losses::ScheduleState schedule{.step = 0,
                                 .total_steps = cfg.steps,
                                 .rng = std::mt19937_64(cfg.seed ^ 0x5ca1ab1eULL),
                                 .direction = cfg.direction};
  nn::Adam optimizer(model.parameters(), {.learning_rate = cfg.learning_rate, .clip_norm = cfg.clip_norm});

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const bool full_batch = static_cast<std::size_t>(cfg.batch_size) >= dataset.size();
  const Batch full = full_batch ? make_batch(dataset, order) : Batch{};

  for (int step = 0; step < cfg.steps; ++step) {
    schedule.step = step;
    const double probability = schedule.probability();
    const losses::LossKind tag = losses::schedule_select(schedule);

    Batch partial;
    if (!full_batch) {
      std::shuffle(order.begin(), order.end(), batch_rng);
      partial = make_batch(dataset, {order.begin(), order.begin() + cfg.batch_size});
    }
    const Batch& batch = full_batch ? full : partial;

    model.parameters().zero_grad();
    const ag::Var pred = model.forward(ag::constant(batch.inputs));
    const ag::Var target = ag::constant(batch.targets);
    const ag::Var loss =
        tag == losses::LossKind::fgl ? losses::fgl(pred, target) : losses::fibl(pred, target, fibl_cfg).total;
    const double value = loss.item();
    if (!std::isfinite(value)) {
      if (on_nan) on_nan(model, step);
      throw NumericError("stage 1: non-finite " + std::string(losses::loss_kind_name(tag)) +
                         " loss at step " + std::to_string(step));
    }
    loss.backward();
    const double grad_norm = optimizer.step();
    result.history.push_back({step, value, tag, probability, grad_norm});
  }
  return result;
}

double evaluate_fibl(const Wtformer& model, std::span<const Sample> dataset,
                     const losses::FiblConfig& cfg) {
  validate_dataset(dataset, model.config().in_channels);
  ag::NoGradGuard no_grad;
  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), 0);
  const Batch batch = make_batch(dataset, all);
  const ag::Var pred = model.forward(ag::constant(batch.inputs));
  return losses::fibl(pred, ag::constant(batch.targets), cfg).total.item();
}

}  // namespace wavec2r::wtformer
