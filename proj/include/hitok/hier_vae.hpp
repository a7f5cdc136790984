#pragma once

// Hierarchical LFQ tokenizer: a causal 3D residual encoder to the dense
// latent, cascaded two-conv compressors to coarser latents, per-layer sign
// quantization, and a mirrored decoder that fuses the layers coarse to dense
// by addition.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hitok/codec_io.hpp"
#include "hitok/config.hpp"
#include "hitok/conv3d.hpp"
#include "hitok/dyn_mask.hpp"
#include "hitok/lfq.hpp"
#include "hitok/ops.hpp"
#include "hitok/param_store.hpp"
#include "hitok/video.hpp"

namespace hitok {

struct LayerShape {
  std::size_t tokens = 0;
  std::size_t quant_dim = 0;
};

struct TokenShapes {
  std::vector<LayerShape> layers;  // index 0 = densest
  std::size_t total_tokens = 0;
  std::uint64_t total_bits = 0;
};

inline TokenShapes token_shapes(const HierarchyConfig& cfg) {
  TokenShapes s;
  for (const auto& l : cfg.layers) {
    s.layers.push_back({l.token_count(), l.quant_dim});
    s.total_tokens += l.token_count();
    s.total_bits += static_cast<std::uint64_t>(l.token_count()) * l.quant_dim;
  }
  return s;
}

template <class Real = float>
struct LayerLatent {
  Tensor<Real> z;  // pre-quantization [T,H,W,qd]
  lfq::LfqCodes<Real> codes;
  std::optional<MaskPlan> mask;
};

template <class Real = float>
struct HierLatents {
  std::vector<LayerLatent<Real>> layers;  // index 0 = densest

  HierTokenStream tokens(const HierarchyConfig& cfg) const {
    HierTokenStream s;
    for (std::size_t m = 0; m < layers.size(); ++m) {
      LayerTokens lt;
      lt.quant_dim = cfg.layers[m].quant_dim;
      lt.shape = cfg.layers[m].latent;
      lt.indices = layers[m].codes.indices;
      if (layers[m].mask && !layers[m].mask->empty()) {
        lt.mask = layers[m].mask->mask;
        lt.strategy = layers[m].mask->strategy;
      }
      s.layers.push_back(std::move(lt));
    }
    return s;
  }
};

// How each layer enters the decoder.
struct DecodeOptions {
  // Per-layer redundancy masks (missing or empty entries: no masking).
  std::vector<std::optional<MaskPlan>> masks;
  // Replace the whole dense layer by the learned placeholder (coarse phase of
  // progressive training) or by zeros (coarse-only evaluation).
  enum class Dense { kKeep, kLearned, kZero } dense = Dense::kKeep;
};

template <class Real = float>
class HierVae {
 public:
  static constexpr TemporalPad kPad = TemporalPad::kReplicate;

  HierVae(HierarchyConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const Dims3 in = cfg_.encoder_input();
    std::size_t pt = 1, ps = 1;
    for (const auto& s : cfg_.stages) pt *= s.t_stride, ps *= s.s_stride;
    if (in.t % pt || in.h % ps || in.w % ps) {
      throw UsageError("hierarchy: encoder input " + to_string(in) + " must be divisible by the stage stride product");
    }
    for (const auto& s : cfg_.stages) {
      if (s.channels % cfg_.norm_groups) throw UsageError("hierarchy: stage channels must be divisible by norm_groups");
    }
    Rng rng(seed);
    declare(rng);
  }

  const HierarchyConfig& config() const { return cfg_; }
  ParamStore<Real>& params() { return store_; }
  const ParamStore<Real>& params() const { return store_; }
  ParamBinding<Real> inference_binding() const { return ParamBinding<Real>(store_, false); }

  HierLatents<Real> encode(const VideoBlock& video, ParamBinding<Real>& p) const {
    return encode_tensor(to_network_input<Real>(prepare(video)), p);
  }
  HierLatents<Real> encode(const VideoBlock& video) const {
    auto p = inference_binding();
    return encode(video, p);
  }

  HierLatents<Real> encode_tensor(const Tensor<Real>& x, ParamBinding<Real>& p) const {
    const Dims3 in = cfg_.encoder_input();
    if (x.rank() != 4 || x.dim(0) != in.t || x.dim(1) != in.h || x.dim(2) != in.w || x.dim(3) != cfg_.channels) {
      throw ShapeError("encode: expected input " + to_string(in) + "x" + std::to_string(cfg_.channels) + ", got " +
                       to_string(x.shape()));
    }
    Tensor<Real> h = x;
    for (std::size_t s = 0; s < cfg_.stages.size(); ++s) h = enc_block(h, s, p);
    h = silu(group_norm(h, p("enc.out.norm.g"), p("enc.out.norm.b"), cfg_.norm_groups));
    HierLatents<Real> out;
    Tensor<Real> z = rms_normalize(conv(h, "enc.out.proj", p));
    for (std::size_t m = 0; m < cfg_.layers.size(); ++m) {
      if (m > 0) {
        const std::string pre = "comp" + std::to_string(m);
        const Dims3 r = cfg_.layer_ratio(m);
        z = rms_normalize(conv(silu(conv(z, pre + ".conv_a", p, {r.t, r.h, r.w})), pre + ".conv_b", p));
      }
      check_latent(z, m);
      LayerLatent<Real> l;
      l.z = z;
      l.codes = lfq::quantize(z, cfg_.layers[m].quant_dim);
      out.layers.push_back(std::move(l));
    }
    return out;
  }

  // Network-scale ([-1,1], unclamped) reconstruction from per-layer sign grids.
  Tensor<Real> decode_tensor(const std::vector<Tensor<Real>>& signs, ParamBinding<Real>& p,
                             const DecodeOptions& opt = {}) const {
    const std::size_t nl = cfg_.layers.size();
    if (signs.size() != nl) throw ShapeError("decode: expected " + std::to_string(nl) + " layers, got " + std::to_string(signs.size()));
    Tensor<Real> f;
    for (std::size_t k = nl; k-- > 0;) {
      check_latent(signs[k], k);
      Tensor<Real> q = signs[k];
      if (k < opt.masks.size() && opt.masks[k] && !opt.masks[k]->empty()) {
        const auto& plan = *opt.masks[k];
        if (plan.strategy == MaskStrategy::kLearned) {
          const std::string name = "mask_token.l" + std::to_string(k);
          if (!p.contains(name)) throw UsageError("decode: layer " + std::to_string(k) + " has no learned mask token");
          const auto tok = p(name);
          q = apply_mask(q, plan, &tok);
        } else {
          q = apply_mask(q, plan);
        }
      }
      if (k == 0 && opt.dense != DecodeOptions::Dense::kKeep) q = dense_placeholder(q, p, opt.dense);
      Tensor<Real> qp = conv(q, "fuse.l" + std::to_string(k), p);
      if (k + 1 < nl) {
        const std::string pre = "up" + std::to_string(k + 1);
        const Dims3 r = cfg_.layer_ratio(k + 1);
        Tensor<Real> u = silu(transpose_causal_conv3d(f, p(pre + ".tconv.w"), nullptr, {r.t, r.h, r.w}, kPad));
        u = causal_conv3d(u, p(pre + ".proj.w"), nullptr, {}, kPad);
        qp = add(qp, u);
      }
      f = qp;
    }
    Tensor<Real> h = conv(f, "dec.in", p);
    for (std::size_t s = cfg_.stages.size(); s-- > 0;) h = dec_block(h, s, p);
    h = silu(group_norm(h, p("dec.out.norm.g"), p("dec.out.norm.b"), cfg_.norm_groups));
    return conv(h, "dec.out.proj", p);
  }

  std::vector<Tensor<Real>> signs_of(const HierLatents<Real>& lat) const {
    std::vector<Tensor<Real>> s;
    for (const auto& l : lat.layers) s.push_back(l.codes.signs);
    return s;
  }

  std::vector<Tensor<Real>> signs_of(const HierTokenStream& stream) const {
    check_stream(stream);
    std::vector<Tensor<Real>> s;
    for (std::size_t m = 0; m < stream.layers.size(); ++m) {
      const auto& d = cfg_.layers[m].latent;
      s.push_back(lfq::signs_from_indices<Real>(stream.layers[m].indices, cfg_.layers[m].quant_dim, {d.t, d.h, d.w}));
    }
    return s;
  }

  VideoBlock decode(const HierLatents<Real>& lat, const DecodeOptions& opt = {}) const {
    DecodeOptions o = opt;
    if (o.masks.empty()) {
      for (const auto& l : lat.layers) o.masks.push_back(l.mask);
    }
    auto p = inference_binding();
    return finish(decode_tensor(signs_of(lat), p, o));
  }

  // Decodes a token stream; masked layers are substituted with the stream's
  // own strategy.
  VideoBlock decode(const HierTokenStream& stream, const DecodeOptions& opt = {}) const {
    DecodeOptions o = opt;
    if (o.masks.empty()) {
      for (std::size_t m = 0; m < stream.layers.size(); ++m) {
        const auto& l = stream.layers[m];
        if (!l.masked()) {
          o.masks.emplace_back();
          continue;
        }
        MaskPlan plan = empty_plan(cfg_.layers[m].latent, l.strategy);
        plan.mask = l.mask;
        plan.cap = 1.0;
        o.masks.push_back(std::move(plan));
      }
    }
    auto p = inference_binding();
    return finish(decode_tensor(signs_of(stream), p, o));
  }

  VideoBlock reconstruct(const VideoBlock& v) const { return decode(encode(v)); }

  // Maps a network-scale output back to a clip of the configured input size.
  VideoBlock finish(const Tensor<Real>& y) const {
    VideoBlock v = from_network_output(y);
    return resample_nearest(v, cfg_.input.h, cfg_.input.w);
  }

  VideoBlock prepare(const VideoBlock& v) const {
    if (v.t != cfg_.input.t || v.h != cfg_.input.h || v.w != cfg_.input.w || v.c != cfg_.channels) {
      throw ShapeError("video " + std::to_string(v.t) + "x" + std::to_string(v.h) + "x" + std::to_string(v.w) + "x" +
                       std::to_string(v.c) + " does not match configured input " + to_string(cfg_.input) + "x" +
                       std::to_string(cfg_.channels));
    }
    const Dims3 e = cfg_.encoder_input();
    return resample_nearest(v, e.h, e.w);
  }

  void check_stream(const HierTokenStream& s) const {
    if (s.layers.size() != cfg_.layers.size()) throw FormatError(FormatErrc::kInvalidField, "token stream layer count does not match the tokenizer");
    for (std::size_t m = 0; m < s.layers.size(); ++m) {
      if (s.layers[m].quant_dim != cfg_.layers[m].quant_dim || !(s.layers[m].shape == cfg_.layers[m].latent)) {
        throw FormatError(FormatErrc::kInvalidField, "token stream layer " + std::to_string(m) + " does not match the tokenizer");
      }
    }
  }

 private:
  void declare(Rng& rng) {
    std::size_t cin = cfg_.channels;
    for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
      const std::size_t c = cfg_.stages[s].channels;
      const std::string pre = "enc.s" + std::to_string(s);
      if (s > 0) norm_params(pre + ".norm_a", cin);
      conv_params(pre + ".conv_a", 3, cin, c, rng);
      norm_params(pre + ".norm_b", c);
      conv_params(pre + ".conv_b", 3, c, c, rng, 0.5);
      conv_params(pre + ".skip", 1, cin, c, rng);
      cin = c;
    }
    norm_params("enc.out.norm", cin);
    conv_params("enc.out.proj", 1, cin, cfg_.layers[0].quant_dim, rng);
    for (std::size_t m = 1; m < cfg_.layers.size(); ++m) {
      const std::string pre = "comp" + std::to_string(m);
      conv_params(pre + ".conv_a", 3, cfg_.layers[m - 1].quant_dim, cfg_.compressor_width, rng);
      conv_params(pre + ".conv_b", 3, cfg_.compressor_width, cfg_.layers[m].quant_dim, rng);
    }

    const std::size_t fw = cfg_.compressor_width;
    for (std::size_t m = 0; m < cfg_.layers.size(); ++m) {
      conv_params("fuse.l" + std::to_string(m), 1, cfg_.layers[m].quant_dim, fw, rng, 1.0, false);
      if (m > 0) {
        const std::string pre = "up" + std::to_string(m);
        conv_params(pre + ".tconv", 3, fw, fw, rng, 1.0, false);
        conv_params(pre + ".proj", 1, fw, fw, rng, 1.0, false);
      }
    }
    store_.add_const("mask_token.l0", {cfg_.layers[0].quant_dim}, Real(0));

    const std::size_t top = cfg_.stages.back().channels;
    conv_params("dec.in", 3, fw, top, rng);
    for (std::size_t s = cfg_.stages.size(); s-- > 0;) {
      const std::size_t c = cfg_.stages[s].channels;
      const std::size_t cout = s > 0 ? cfg_.stages[s - 1].channels : cfg_.stages[0].channels;
      const std::string pre = "dec.s" + std::to_string(s);
      norm_params(pre + ".norm_a", c);
      conv_params(pre + ".conv_a", 3, c, cout, rng);
      norm_params(pre + ".norm_b", cout);
      conv_params(pre + ".conv_b", 3, cout, cout, rng, 0.5);
      conv_params(pre + ".skip", 1, c, cout, rng);
    }
    norm_params("dec.out.norm", cfg_.stages[0].channels);
    conv_params("dec.out.proj", 3, cfg_.stages[0].channels, cfg_.channels, rng);
  }

  void conv_params(const std::string& name, std::size_t k, std::size_t cin, std::size_t cout, Rng& rng,
                   double gain = 1.0, bool bias = true) {
    const std::size_t kt = k, ks = k;
    const double fan_in = static_cast<double>(kt * ks * ks * cin);
    store_.add_normal(name + ".w", {kt, ks, ks, cin, cout}, gain * std::sqrt(1.0 / fan_in), rng);
    if (bias) store_.add_const(name + ".b", {cout}, Real(0));
  }

  void norm_params(const std::string& name, std::size_t c) {
    store_.add_const(name + ".g", {c}, Real(1));
    store_.add_const(name + ".b", {c}, Real(0));
  }

  Tensor<Real> conv(const Tensor<Real>& x, const std::string& name, ParamBinding<Real>& p, Stride3 st = {}) const {
    const std::string b = name + ".b";
    if (p.contains(b)) {
      const auto bias = p(b);
      return causal_conv3d(x, p(name + ".w"), &bias, st, kPad);
    }
    return causal_conv3d(x, p(name + ".w"), nullptr, st, kPad);
  }

  Tensor<Real> norm_act(const Tensor<Real>& x, const std::string& name, ParamBinding<Real>& p) const {
    return silu(group_norm(x, p(name + ".g"), p(name + ".b"), cfg_.norm_groups));
  }

  Tensor<Real> enc_block(const Tensor<Real>& x, std::size_t s, ParamBinding<Real>& p) const {
    const auto& st = cfg_.stages[s];
    const std::string pre = "enc.s" + std::to_string(s);
    const Stride3 stride{st.t_stride, st.s_stride, st.s_stride};
    const Tensor<Real> in = s > 0 ? norm_act(x, pre + ".norm_a", p) : x;
    Tensor<Real> h = conv(in, pre + ".conv_a", p, stride);
    h = conv(norm_act(h, pre + ".norm_b", p), pre + ".conv_b", p);
    return add(h, conv(x, pre + ".skip", p, stride));
  }

  Tensor<Real> dec_block(const Tensor<Real>& x, std::size_t s, ParamBinding<Real>& p) const {
    const auto& st = cfg_.stages[s];
    const std::string pre = "dec.s" + std::to_string(s);
    const Stride3 up{st.t_stride, st.s_stride, st.s_stride};
    Tensor<Real> h = conv(norm_act(x, pre + ".norm_a", p), pre + ".conv_a", p);
    h = norm_act(h, pre + ".norm_b", p);
    const auto bias = p(pre + ".conv_b.b");
    h = transpose_causal_conv3d(h, p(pre + ".conv_b.w"), &bias, up, kPad);
    const Tensor<Real> skip = up == Stride3{} ? x : upsample_nearest3d(x, up);
    return add(h, conv(skip, pre + ".skip", p));
  }

  Tensor<Real> dense_placeholder(const Tensor<Real>& q, ParamBinding<Real>& p, DecodeOptions::Dense mode) const {
    if (mode == DecodeOptions::Dense::kZero) return scale(q, Real(0));
    const auto tok = p("mask_token.l0");
    const std::size_t n = q.dim(0) * q.dim(1) * q.dim(2);
    std::vector<std::uint32_t> ids(n, 0);
    return reshape(embedding(reshape(tok, {1, tok.size()}), ids), q.shape());
  }

  void check_latent(const Tensor<Real>& z, std::size_t m) const {
    const auto& l = cfg_.layers[m];
    if (z.rank() != 4 || z.dim(0) != l.latent.t || z.dim(1) != l.latent.h || z.dim(2) != l.latent.w ||
        z.dim(3) != l.quant_dim) {
      throw ShapeError("layer " + std::to_string(m) + " latent " + to_string(z.shape()) + " does not match " +
                       to_string(l.latent) + "x" + std::to_string(l.quant_dim));
    }
  }

  HierarchyConfig cfg_;
  ParamStore<Real> store_;
};

}  // namespace hitok
