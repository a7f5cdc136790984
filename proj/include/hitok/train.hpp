#pragma once

// Tokenizer and generator training loops.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hitok/ar_generator.hpp"
#include "hitok/config.hpp"
#include "hitok/hier_vae.hpp"
#include "hitok/lfq.hpp"
#include "hitok/metrics.hpp"
#include "hitok/ops.hpp"
#include "hitok/param_store.hpp"
#include "hitok/synth_data.hpp"

namespace hitok {

// Parallelism cap from HITOK_THREADS (default 1). Training evaluates a batch
// as one graph, so the value only bounds; it never changes results.
inline std::size_t thread_cap() {
  const char* s = std::getenv("HITOK_THREADS");
  if (!s || !*s) return 1;
  char* end = nullptr;
  const long v = std::strtol(s, &end, 10);
  if (*end || v < 1) throw UsageError(std::string("HITOK_THREADS must be a positive integer, got '") + s + "'");
  return static_cast<std::size_t>(v);
}

// ---------------------------------------------------------------------------
// Tokenizer

template <class Real>
struct TokenizerLoss {
  Tensor<Real> total;
  Real l1 = 0;
  Real mse = 0;      // already multiplied by the mse weight
  Real entropy = 0;  // already multiplied by the entropy weight
};

// mean|video - recon| + mse_weight * mean((video - recon)^2) + weight * sum
// of per-layer entropy penalties over the given pre-quantization latents.
// video and recon are in [0,1] units.
template <class Real>
TokenizerLoss<Real> tokenizer_loss(const Tensor<Real>& video, const Tensor<Real>& recon,
                                   const std::vector<std::pair<Tensor<Real>, std::size_t>>& latents, double weight,
                                   const lfq::EntropyParams& ep = {}, double mse_weight = 0.0) {
  const Tensor<Real> d = sub(video, recon);
  const Tensor<Real> l1 = mean(abs(d));
  std::vector<Tensor<Real>> terms{l1};
  std::vector<Real> w{Real(1)};
  Real sq = 0;
  if (mse_weight != 0.0) {
    const Tensor<Real> m = mean(mul(d, d));
    terms.push_back(m);
    w.push_back(static_cast<Real>(mse_weight));
    sq = static_cast<Real>(mse_weight) * m.item();
  }
  Real ent = 0;
  for (const auto& [z, qd] : latents) {
    const Tensor<Real> e = lfq::entropy_penalty(z, qd, ep);
    terms.push_back(e);
    w.push_back(static_cast<Real>(weight));
    ent += static_cast<Real>(weight) * e.item();
  }
  TokenizerLoss<Real> out;
  out.total = weighted_sum(terms, w);
  out.l1 = l1.item();
  out.mse = sq;
  out.entropy = ent;
  return out;
}

struct ProgressiveStage {
  bool coarse_only = false;
  std::vector<std::size_t> active;  // layer ids
};

// Before boundary * total steps only the coarse layers train; the dense layer
// is replaced by the learned placeholder.
inline ProgressiveStage progressive_stage(std::size_t step, std::size_t total, double boundary, std::size_t layers) {
  if (step >= total) throw UsageError("progressive_stage: step out of range");
  ProgressiveStage s;
  s.coarse_only = layers > 1 && static_cast<double>(step) < boundary * static_cast<double>(total);
  for (std::size_t m = s.coarse_only ? 1 : 0; m < layers; ++m) s.active.push_back(m);
  return s;
}

using LogSink = std::function<void(const nlohmann::json&)>;

inline LogSink jsonl_sink(std::ostream& os) {
  return [&os](const nlohmann::json& j) { os << j.dump() << '\n' << std::flush; };
}

template <class Real>
void require_finite(Real v, const std::string& what, std::size_t step) {
  if (!std::isfinite(v)) throw NumericError(what + " became non-finite at step " + std::to_string(step));
}

// Epoch-shuffled sample order; the permutation is drawn from `rng`.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, Rng& rng) : rng_(&rng), order_(n) {
    if (n == 0) throw UsageError("training data is empty");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_->shuffle(order_);
  }
  std::vector<std::size_t> next(std::size_t b) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < b; ++i) {
      if (pos_ == order_.size()) {
        rng_->shuffle(order_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  Rng* rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

template <class Real>
struct TokenizerStep {
  Real loss = 0, l1 = 0, mse = 0, entropy = 0;
};

// Loss for one batch with gradients accumulated into the model's store.
template <class Real>
TokenizerStep<Real> tokenizer_batch(HierVae<Real>& vae, const std::vector<const VideoBlock*>& clips,
                                    const ProgressiveStage& stage, const TrainConfig& tc, bool with_grad) {
  ParamBinding<Real> p(vae.params(), with_grad);
  std::vector<Tensor<Real>> xs, ys;
  const std::size_t nl = vae.config().layers.size();
  std::vector<std::vector<Tensor<Real>>> zs(nl);
  DecodeOptions opt;
  if (stage.coarse_only) opt.dense = DecodeOptions::Dense::kLearned;
  for (const VideoBlock* v : clips) {
    const Tensor<Real> x = to_network_input<Real>(vae.prepare(*v));
    auto lat = vae.encode_tensor(x, p);
    const Tensor<Real> y = vae.decode_tensor(vae.signs_of(lat), p, opt);
    xs.push_back(x);
    ys.push_back(y);
    for (std::size_t m = 0; m < nl; ++m) zs[m].push_back(lat.layers[m].z);
  }
  // [0,1] units: (y+1)/2 - (x+1)/2 = (y-x)/2.
  const Tensor<Real> x01 = scale(concat(xs), Real(0.5));
  const Tensor<Real> y01 = scale(concat(ys), Real(0.5));
  std::vector<std::pair<Tensor<Real>, std::size_t>> lat;
  for (std::size_t m : stage.active) lat.emplace_back(concat(zs[m]), vae.config().layers[m].quant_dim);
  const auto loss =
      tokenizer_loss(x01, y01, lat, tc.entropy_weight, {tc.entropy_tau, tc.entropy_gamma}, tc.recon_mse_weight);
  if (with_grad) {
    backward(loss.total);
    p.accumulate_into(vae.params());
  }
  return {loss.total.item(), loss.l1, loss.mse, loss.entropy};
}

struct TrainSummary {
  double first_loss = 0, final_loss = 0;
  double first_l1 = 0, final_l1 = 0;
  double seconds = 0;
};

// Trains the tokenizer in place. One JSON record per logged step.
template <class Real>
TrainSummary train_tokenizer(HierVae<Real>& vae, const std::vector<VideoBlock>& data, const TrainConfig& tc,
                             const LogSink& log = {}) {
  tc.validate();
  thread_cap();
  if (data.empty()) throw UsageError("train_tokenizer: dataset is empty");
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(tc.seed);
  BatchSampler sampler(data.size(), rng);
  const AdamConfig adam{tc.lr, 0.9, 0.999, 1e-8};
  TrainSummary sum;
  const std::size_t nl = vae.config().layers.size();
  for (std::size_t step = 0; step < tc.steps; ++step) {
    const auto stage = progressive_stage(step, tc.steps, tc.progressive_boundary, nl);
    std::vector<const VideoBlock*> batch;
    for (std::size_t i : sampler.next(tc.batch_size)) batch.push_back(&data[i]);
    vae.params().zero_grad();
    const auto r = tokenizer_batch(vae, batch, stage, tc, true);
    require_finite(r.loss, "tokenizer loss", step);
    vae.params().adam_step(adam);
    if (step == 0) sum.first_loss = r.loss, sum.first_l1 = r.l1;
    sum.final_loss = r.loss;
    sum.final_l1 = r.l1;
    if (log && (step % tc.log_every == 0 || step + 1 == tc.steps)) {
      log({{"step", step},
           {"phase", stage.coarse_only ? "coarse" : "full"},
           {"loss", r.loss},
           {"l1", r.l1},
           {"mse", r.mse},
           {"entropy", r.entropy}});
    }
  }
  sum.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sum;
}

// ---------------------------------------------------------------------------
// Generator

// w_m proportional to 1/N_m, normalized to sum 1.
inline std::vector<double> inverse_count_weights(const std::vector<std::size_t>& tokens) {
  std::vector<double> w;
  double s = 0;
  for (auto n : tokens) {
    if (n == 0) throw UsageError("layer weights: empty layer");
    w.push_back(1.0 / static_cast<double>(n));
    s += w.back();
  }
  for (auto& x : w) x /= s;
  return w;
}

inline std::vector<double> layer_loss_weights(const TrainConfig& tc, const SequenceLayout& layout) {
  if (tc.layer_weights.empty()) {
    if (tc.layer_weight_rule == LayerWeightRule::kInverseCount) return inverse_count_weights(layout.layer_tokens);
    return std::vector<double>(layout.layers(), 1.0 / static_cast<double>(layout.layers()));
  }
  if (tc.layer_weights.size() != layout.layers()) throw UsageError("layer_weights must have one entry per layer");
  double s = 0;
  for (double w : tc.layer_weights) s += w;
  if (!(s > 0)) throw UsageError("layer_weights must not all be zero");
  std::vector<double> w = tc.layer_weights;
  for (auto& x : w) x /= s;
  return w;
}

// Targets of layer m in a flattened stream: the tokens the head rows predict.
inline std::vector<std::uint32_t> layer_targets(const std::vector<std::uint32_t>& seq, const SequenceLayout& layout,
                                                std::size_t m) {
  const auto b = seq.begin() + static_cast<std::ptrdiff_t>(layout.layer_start[m]);
  return {b, b + static_cast<std::ptrdiff_t>(layout.layer_tokens[m])};
}

template <class Real>
struct GeneratorLoss {
  Tensor<Real> total;
  std::vector<Real> per_layer;  // unweighted mean CE per layer
};

// sum_m w_m * CE(logits_m, targets_m).
template <class Real>
GeneratorLoss<Real> generator_loss(const std::vector<Tensor<Real>>& logits,
                                   const std::vector<std::vector<std::uint32_t>>& targets, const std::vector<double>& w) {
  if (logits.size() != targets.size() || logits.size() != w.size()) throw ShapeError("generator_loss: layer count mismatch");
  GeneratorLoss<Real> out;
  std::vector<Tensor<Real>> terms;
  std::vector<Real> rw;
  for (std::size_t m = 0; m < logits.size(); ++m) {
    if (logits[m].rank() != 2 || logits[m].dim(0) != targets[m].size()) {
      throw ShapeError("generator_loss: layer " + std::to_string(m) + " positions do not match targets");
    }
    terms.push_back(cross_entropy(logits[m], targets[m]));
    rw.push_back(static_cast<Real>(w[m]));
    out.per_layer.push_back(terms.back().item());
  }
  out.total = weighted_sum(terms, rw);
  return out;
}

// Weighted uniform-logits cross-entropy: sum_m w_m * qd_m * ln 2.
inline double uniform_baseline(const SequenceLayout& layout, const std::vector<double>& w) {
  double b = 0;
  for (std::size_t m = 0; m < layout.layers(); ++m) b += w[m] * static_cast<double>(layout.quant_dims[m]) * std::log(2.0);
  return b;
}

struct TokenizedSample {
  std::vector<std::uint32_t> seq;  // caption ids then video tokens in stream order
};

template <class Real>
std::vector<TokenizedSample> tokenize_dataset(const HierVae<Real>& vae, const SequenceLayout& layout,
                                              const std::vector<synth::Clip>& clips) {
  std::vector<TokenizedSample> out;
  out.reserve(clips.size());
  for (const auto& c : clips) {
    const auto stream = vae.encode(c.video).tokens(vae.config());
    out.push_back({layout.flatten(synth::tokenize_caption(c.caption, layout.text_len), stream)});
  }
  return out;
}

// Mean weighted CE over samples, conditional, without dropout.
template <class Real>
double generator_eval(const ArGenerator<Real>& gen, const std::vector<TokenizedSample>& data, const std::vector<double>& w,
                      std::vector<double>* per_layer = nullptr) {
  auto p = ParamBinding<Real>(gen.params(), false);
  double total = 0;
  std::vector<double> pl(gen.layout().layers(), 0.0);
  for (const auto& s : data) {
    const auto logits = gen.stream_logits(s.seq, false, p);
    std::vector<std::vector<std::uint32_t>> tg;
    for (std::size_t m = 0; m < logits.size(); ++m) tg.push_back(layer_targets(s.seq, gen.layout(), m));
    const auto l = generator_loss(logits, tg, w);
    total += l.total.item();
    for (std::size_t m = 0; m < pl.size(); ++m) pl[m] += l.per_layer[m];
  }
  const double n = static_cast<double>(data.size());
  if (per_layer) {
    for (auto& x : pl) x /= n;
    *per_layer = pl;
  }
  return total / n;
}

template <class Real>
TrainSummary train_generator(ArGenerator<Real>& gen, const std::vector<TokenizedSample>& data, const TrainConfig& tc,
                             const LogSink& log = {}) {
  tc.validate();
  thread_cap();
  if (data.empty()) throw UsageError("train_generator: dataset is empty");
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(tc.seed);
  BatchSampler sampler(data.size(), rng);
  Rng drop_rng = rng.fork();
  const AdamConfig adam{tc.lr, 0.9, 0.999, 1e-8};
  const auto w = layer_loss_weights(tc, gen.layout());
  const GeneratorDropout drop{tc.residual_dropout, tc.ffn_dropout, tc.token_dropout};
  TrainSummary sum;
  for (std::size_t step = 0; step < tc.steps; ++step) {
    gen.params().zero_grad();
    ParamBinding<Real> p(gen.params(), true);
    std::vector<Tensor<Real>> losses;
    std::vector<Real> lw;
    std::size_t uncond_count = 0;
    for (std::size_t i : sampler.next(tc.batch_size)) {
      const auto& s = data[i];
      const bool uncond = drop_rng.bernoulli(tc.cond_dropout);
      uncond_count += uncond;
      const auto logits = gen.stream_logits(s.seq, uncond, p, drop, &drop_rng);
      std::vector<std::vector<std::uint32_t>> tg;
      for (std::size_t m = 0; m < logits.size(); ++m) tg.push_back(layer_targets(s.seq, gen.layout(), m));
      losses.push_back(generator_loss(logits, tg, w).total);
      lw.push_back(Real(1) / static_cast<Real>(tc.batch_size));
    }
    const Tensor<Real> loss = weighted_sum(losses, lw);
    require_finite(loss.item(), "generator loss", step);
    backward(loss);
    p.accumulate_into(gen.params());
    gen.params().adam_step(adam);
    if (step == 0) sum.first_loss = loss.item();
    sum.final_loss = loss.item();
    if (log && (step % tc.log_every == 0 || step + 1 == tc.steps)) {
      log({{"step", step}, {"loss", loss.item()}, {"uncond_samples", uncond_count}});
    }
  }
  sum.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sum;
}

// Teacher-forced greedy accuracy on layer m: the share of its tokens whose
// argmax prediction from the ground-truth prefix matches.
template <class Real>
double teacher_forced_accuracy(const ArGenerator<Real>& gen, const std::vector<TokenizedSample>& data, std::size_t m) {
  auto p = ParamBinding<Real>(gen.params(), false);
  std::size_t hit = 0, total = 0;
  for (const auto& s : data) {
    const auto logits = gen.stream_logits(s.seq, false, p);
    const auto tg = layer_targets(s.seq, gen.layout(), m);
    const auto& l = logits[m];
    const std::size_t v = l.dim(1);
    for (std::size_t i = 0; i < tg.size(); ++i) {
      const auto row = l.vec().begin() + static_cast<std::ptrdiff_t>(i * v);
      const auto arg = static_cast<std::uint32_t>(std::max_element(row, row + static_cast<std::ptrdiff_t>(v)) - row);
      hit += arg == tg[i];
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

}  // namespace hitok
