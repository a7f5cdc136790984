#pragma once

// Decoder-only transformer over the hierarchical token stream.
//
// Stream layout: the caption (right-padded to text_len) followed by the video
// layers from coarsest to densest, each in (t, h, w) raster order. Position n
// predicts token n+1 with the output head of the layer that owns n+1.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hitok/codec_io.hpp"
#include "hitok/config.hpp"
#include "hitok/ops.hpp"
#include "hitok/param_store.hpp"
#include "hitok/rng.hpp"
#include "hitok/synth_data.hpp"

namespace hitok {

struct SequenceLayout {
  static constexpr int kText = -1;

  struct Pos {
    int layer = kText;  // owning layer, or kText
    std::array<std::size_t, 3> thw{0, 0, 0};
  };

  std::size_t text_len = 0;
  std::vector<Pos> pos;
  // First stream position of each layer (index = layer id).
  std::vector<std::size_t> layer_start;
  std::vector<std::size_t> layer_tokens;
  std::vector<std::size_t> quant_dims;

  SequenceLayout() = default;
  SequenceLayout(const HierarchyConfig& cfg, std::size_t text) : text_len(text) {
    const std::size_t m_count = cfg.layers.size();
    layer_start.assign(m_count, 0);
    for (std::size_t i = 0; i < text; ++i) pos.push_back({kText, {i, 0, 0}});
    for (std::size_t m = m_count; m-- > 0;) {
      const auto& l = cfg.layers[m];
      layer_start[m] = pos.size();
      for (std::size_t t = 0; t < l.latent.t; ++t) {
        for (std::size_t h = 0; h < l.latent.h; ++h) {
          for (std::size_t w = 0; w < l.latent.w; ++w) pos.push_back({static_cast<int>(m), {t, h, w}});
        }
      }
    }
    for (const auto& l : cfg.layers) {
      layer_tokens.push_back(l.token_count());
      quant_dims.push_back(l.quant_dim);
    }
  }

  std::size_t size() const { return pos.size(); }
  std::size_t layers() const { return layer_start.size(); }
  std::size_t video_tokens() const { return pos.size() - text_len; }
  std::uint32_t vocab(std::size_t m) const { return std::uint32_t{1} << quant_dims[m]; }

  // Layer owning the token that position n predicts.
  int next_layer(std::size_t n) const { return n + 1 < pos.size() ? pos[n + 1].layer : kText; }

  // Text ids followed by video indices in stream order.
  std::vector<std::uint32_t> flatten(const std::vector<std::uint32_t>& text, const HierTokenStream& s) const {
    if (text.size() != text_len) throw ShapeError("layout: caption length does not match text_len");
    if (s.layers.size() != layers()) throw ShapeError("layout: layer count mismatch");
    std::vector<std::uint32_t> out = text;
    for (std::size_t m = layers(); m-- > 0;) {
      if (s.layers[m].indices.size() != layer_tokens[m]) throw ShapeError("layout: token count mismatch in layer " + std::to_string(m));
      out.insert(out.end(), s.layers[m].indices.begin(), s.layers[m].indices.end());
    }
    return out;
  }

  HierTokenStream unflatten(const std::vector<std::uint32_t>& seq, const HierarchyConfig& cfg) const {
    if (seq.size() != size()) throw ShapeError("layout: sequence length mismatch");
    HierTokenStream s;
    for (std::size_t m = 0; m < layers(); ++m) {
      LayerTokens lt;
      lt.quant_dim = cfg.layers[m].quant_dim;
      lt.shape = cfg.layers[m].latent;
      lt.indices.assign(seq.begin() + static_cast<std::ptrdiff_t>(layer_start[m]),
                        seq.begin() + static_cast<std::ptrdiff_t>(layer_start[m] + layer_tokens[m]));
      s.layers.push_back(std::move(lt));
    }
    return s;
  }
};

// ---------------------------------------------------------------------------
// RoPE and attention

struct RopeSpec {
  std::array<std::size_t, 3> dims{12, 10, 10};
  double base = 10000.0;

  std::size_t head_dim() const { return dims[0] + dims[1] + dims[2]; }
  void validate(std::size_t head_dim_expected) const {
    for (auto d : dims) {
      if (d % 2) throw UsageError("rope: axis dims must be even");
    }
    if (head_dim() != head_dim_expected) throw UsageError("rope: axis dims must sum to the head dim");
  }
};

namespace detail {

// cos/sin per (row, pair) for the rotation of one head.
template <class Real>
void rope_angles(const std::vector<std::array<std::size_t, 3>>& pos, const RopeSpec& spec, std::vector<Real>& cs,
                 std::vector<Real>& sn) {
  const std::size_t half = spec.head_dim() / 2;
  cs.resize(pos.size() * half);
  sn.resize(pos.size() * half);
  for (std::size_t r = 0; r < pos.size(); ++r) {
    std::size_t j = 0;
    for (std::size_t a = 0; a < 3; ++a) {
      const std::size_t pairs = spec.dims[a] / 2;
      for (std::size_t i = 0; i < pairs; ++i, ++j) {
        const double theta = std::pow(spec.base, -2.0 * static_cast<double>(i) / static_cast<double>(spec.dims[a]));
        const double ang = static_cast<double>(pos[r][a]) * theta;
        cs[r * half + j] = static_cast<Real>(std::cos(ang));
        sn[r * half + j] = static_cast<Real>(std::sin(ang));
      }
    }
  }
}

}  // namespace detail

// Rotates every head of x [N, heads*head_dim]. The head dim is split into
// t, h, w blocks; adjacent pairs in a block rotate by pos_axis * base^(-2i/d).
template <class Real>
Tensor<Real> rope3d(const Tensor<Real>& x, const std::vector<std::array<std::size_t, 3>>& pos, std::size_t heads,
                    const RopeSpec& spec) {
  if (x.rank() != 2 || x.dim(0) != pos.size() || heads == 0 || x.dim(1) % heads) throw ShapeError("rope3d: bad shape");
  const std::size_t hd = x.dim(1) / heads, half = hd / 2, n = x.dim(0), d = x.dim(1);
  spec.validate(hd);
  std::vector<Real> cs, sn;
  detail::rope_angles<Real>(pos, spec, cs, sn);
  std::vector<Real> y(x.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t j = 0; j < half; ++j) {
        const std::size_t i0 = r * d + h * hd + 2 * j;
        const Real c = cs[r * half + j], s = sn[r * half + j];
        const Real a = x[i0], b = x[i0 + 1];
        y[i0] = a * c - b * s;
        y[i0 + 1] = a * s + b * c;
      }
    }
  }
  return make_op<Real>("rope3d", x.shape(), std::move(y), {x},
                       [n, d, heads, hd, half, cs = std::move(cs), sn = std::move(sn)](Node<Real>& self) {
    Real* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t j = 0; j < half; ++j) {
          const std::size_t i0 = r * d + h * hd + 2 * j;
          const Real c = cs[r * half + j], s = sn[r * half + j];
          const Real ga = self.grad[i0], gb = self.grad[i0 + 1];
          gx[i0] += ga * c + gb * s;
          gx[i0 + 1] += -ga * s + gb * c;
        }
      }
    }
  });
}

// Multi-head scaled dot-product attention with a causal mask. q [N, D] holds
// queries for absolute positions q_offset .. q_offset+N-1; k, v [S, D] hold
// keys/values for positions 0 .. S-1. Query i sees keys j <= q_offset + i.
template <class Real>
Tensor<Real> causal_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v, std::size_t heads,
                              std::size_t q_offset = 0) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || k.shape() != v.shape() || q.dim(1) != k.dim(1) || heads == 0 ||
      q.dim(1) % heads) {
    throw ShapeError("attention: q " + to_string(q.shape()) + " k " + to_string(k.shape()) + " v " + to_string(v.shape()));
  }
  const std::size_t n = q.dim(0), s_len = k.dim(0), d = q.dim(1), hd = d / heads;
  if (q_offset + n > s_len) throw ShapeError("attention: queries extend past the keys");
  const Real sc = Real(1) / std::sqrt(static_cast<Real>(hd));
  std::vector<Real> probs(heads * n * s_len, Real(0));
  std::vector<Real> out(n * d, Real(0));
  const Real* qv = q.vec().data();
  const Real* kv = k.vec().data();
  const Real* vv = v.vec().data();
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lim = q_offset + i + 1;
      Real* p = probs.data() + (h * n + i) * s_len;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < lim; ++j) {
        Real dot = 0;
        for (std::size_t e = 0; e < hd; ++e) dot += qv[i * d + h * hd + e] * kv[j * d + h * hd + e];
        p[j] = dot * sc;
        mx = std::max(mx, p[j]);
      }
      Real z = 0;
      for (std::size_t j = 0; j < lim; ++j) z += (p[j] = std::exp(p[j] - mx));
      for (std::size_t j = 0; j < lim; ++j) {
        p[j] /= z;
        for (std::size_t e = 0; e < hd; ++e) out[i * d + h * hd + e] += p[j] * vv[j * d + h * hd + e];
      }
    }
  }
  return make_op<Real>("causal_attention", {n, d}, std::move(out), {q, k, v},
                       [=, probs = std::move(probs)](Node<Real>& self) {
    const Real* qv = self.parents[0]->data->data();
    const Real* kv = self.parents[1]->data->data();
    const Real* vv = self.parents[2]->data->data();
    Real* gq = parent_grad(self, 0);
    Real* gk = parent_grad(self, 1);
    Real* gv = parent_grad(self, 2);
    const Real* go = self.grad.data();
    std::vector<Real> ds(s_len);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lim = q_offset + i + 1;
        const Real* p = probs.data() + (h * n + i) * s_len;
        Real dot_sum = 0;
        for (std::size_t j = 0; j < lim; ++j) {
          Real dp = 0;
          for (std::size_t e = 0; e < hd; ++e) dp += go[i * d + h * hd + e] * vv[j * d + h * hd + e];
          ds[j] = dp;
          dot_sum += p[j] * dp;
        }
        for (std::size_t j = 0; j < lim; ++j) {
          if (gv) {
            for (std::size_t e = 0; e < hd; ++e) gv[j * d + h * hd + e] += p[j] * go[i * d + h * hd + e];
          }
          const Real g = p[j] * (ds[j] - dot_sum) * sc;
          if (gq) {
            for (std::size_t e = 0; e < hd; ++e) gq[i * d + h * hd + e] += g * kv[j * d + h * hd + e];
          }
          if (gk) {
            for (std::size_t e = 0; e < hd; ++e) gk[j * d + h * hd + e] += g * qv[i * d + h * hd + e];
          }
        }
      }
    }
  });
}

// uncond + (cond - uncond) * scale, evaluated as scale*cond + (1-scale)*uncond
// so scales 0 and 1 return an input exactly.
template <class Real>
std::vector<Real> cfg_logits(const std::vector<Real>& cond, const std::vector<Real>& uncond, double scale) {
  if (cond.size() != uncond.size()) throw ShapeError("cfg_logits: size mismatch");
  std::vector<Real> out(cond.size());
  const Real s = static_cast<Real>(scale);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * cond[i] + (Real(1) - s) * uncond[i];
  return out;
}

// Temperature, optional top-k, then softmax probabilities (double precision).
template <class Real>
std::vector<double> sampling_probs(const std::vector<Real>& logits, double temperature, std::size_t top_k) {
  if (logits.empty()) throw ShapeError("sampling: empty logits");
  if (!(temperature > 0)) throw UsageError("sampling: temperature must be > 0");
  std::vector<double> l(logits.size());
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = static_cast<double>(logits[i]) / temperature;
  if (top_k > 0 && top_k < l.size()) {
    std::vector<double> sorted = l;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(top_k - 1), sorted.end(), std::greater<>());
    const double kth = sorted[top_k - 1];
    // Ties at the threshold are kept in index order until k entries remain.
    std::size_t above = static_cast<std::size_t>(std::count_if(l.begin(), l.end(), [&](double x) { return x > kth; }));
    std::size_t ties_left = top_k - above;
    for (auto& x : l) {
      if (x > kth) continue;
      if (x == kth && ties_left > 0) {
        --ties_left;
        continue;
      }
      x = -std::numeric_limits<double>::infinity();
    }
  }
  const double mx = *std::max_element(l.begin(), l.end());
  std::vector<double> p(l.size());
  double z = 0;
  for (std::size_t i = 0; i < l.size(); ++i) z += (p[i] = std::exp(l[i] - mx));
  for (auto& x : p) x /= z;
  return p;
}

inline std::uint32_t sample_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<std::uint32_t>(i);
  }
  // Rounding left u above the running sum: take the last nonzero entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0) return static_cast<std::uint32_t>(i);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Model

template <class Real = float>
struct KvCache {
  std::vector<std::vector<Real>> k, v;  // per block, row-major [len, D]
  std::size_t len = 0;

  void reset(std::size_t blocks) {
    k.assign(blocks, {});
    v.assign(blocks, {});
    len = 0;
  }
};

struct GeneratorDropout {
  double residual = 0, ffn = 0, token = 0;
};

template <class Real = float>
class ArGenerator {
 public:
  ArGenerator(GeneratorConfig cfg, const HierarchyConfig& hier, std::uint64_t seed)
      : cfg_(std::move(cfg)), hier_(hier), layout_(hier, cfg_.text_len) {
    cfg_.validate();
    hier_.validate();
    rope_.dims = cfg_.rope_dims;
    rope_.base = cfg_.rope_base;
    Rng rng(seed);
    declare(rng);
  }

  const GeneratorConfig& config() const { return cfg_; }
  const HierarchyConfig& hierarchy() const { return hier_; }
  const SequenceLayout& layout() const { return layout_; }
  ParamStore<Real>& params() { return store_; }
  const ParamStore<Real>& params() const { return store_; }

  // Final-norm hidden states for positions [start, seq.size()), where start is
  // the cache length (0 without a cache). `uncond` swaps the caption
  // embeddings for the learned unconditional sequence.
  Tensor<Real> hidden(const std::vector<std::uint32_t>& seq, bool uncond, ParamBinding<Real>& p, KvCache<Real>* cache = nullptr,
                      const GeneratorDropout& drop = {}, Rng* rng = nullptr) const {
    const std::size_t start = cache ? cache->len : 0;
    if (seq.size() > layout_.size()) throw ShapeError("generator: sequence longer than the layout");
    if (seq.size() <= start) throw ShapeError("generator: no new positions (cache length " + std::to_string(start) + ")");
    if (cache && cache->k.size() != cfg_.layers) throw UsageError("generator: cache not initialised");
    Tensor<Real> x = embed(seq, start, uncond, p);
    if (rng) x = dropout(x, drop.token, *rng);
    std::vector<std::array<std::size_t, 3>> pos;
    for (std::size_t n = start; n < seq.size(); ++n) pos.push_back(layout_.pos[n].thw);
    for (std::size_t b = 0; b < cfg_.layers; ++b) {
      const std::string pre = "gen.b" + std::to_string(b);
      const Tensor<Real> h = layer_norm(x, p(pre + ".ln1.g"), p(pre + ".ln1.b"));
      Tensor<Real> q = rope3d(linear(h, p(pre + ".attn.wq")), pos, cfg_.heads, rope_);
      Tensor<Real> k = rope3d(linear(h, p(pre + ".attn.wk")), pos, cfg_.heads, rope_);
      Tensor<Real> v = linear(h, p(pre + ".attn.wv"));
      if (cache) {
        auto& ck = cache->k[b];
        auto& cv = cache->v[b];
        ck.insert(ck.end(), k.vec().begin(), k.vec().end());
        cv.insert(cv.end(), v.vec().begin(), v.vec().end());
        const std::size_t rows = ck.size() / cfg_.hidden;
        k = Tensor<Real>::from({rows, cfg_.hidden}, ck);
        v = Tensor<Real>::from({rows, cfg_.hidden}, cv);
      }
      Tensor<Real> a = linear(causal_attention(q, k, v, cfg_.heads, start), p(pre + ".attn.wo"));
      if (rng) a = dropout(a, drop.residual, *rng);
      x = add(x, a);
      const Tensor<Real> h2 = layer_norm(x, p(pre + ".ln2.g"), p(pre + ".ln2.b"));
      const auto b1 = p(pre + ".ffn.b1");
      const auto b2 = p(pre + ".ffn.b2");
      Tensor<Real> f = gelu(linear(h2, p(pre + ".ffn.w1"), &b1));
      if (rng) f = dropout(f, drop.ffn, *rng);
      f = linear(f, p(pre + ".ffn.w2"), &b2);
      if (rng) f = dropout(f, drop.residual, *rng);
      x = add(x, f);
    }
    if (cache) cache->len = seq.size();
    return layer_norm(x, p("gen.ln_f.g"), p("gen.ln_f.b"));
  }

  // Logits of layer m's head for hidden rows [N, D].
  Tensor<Real> head(const Tensor<Real>& h, std::size_t m, ParamBinding<Real>& p) const {
    const std::string pre = "gen.head.l" + std::to_string(m);
    const auto b = p(pre + ".b");
    return linear(h, p(pre + ".w"), &b);
  }

  // Per-layer logits over the whole stream (teacher forcing). Entry m has
  // N_m rows: row i predicts the i-th token of layer m.
  std::vector<Tensor<Real>> stream_logits(const std::vector<std::uint32_t>& seq, bool uncond, ParamBinding<Real>& p,
                                          const GeneratorDropout& drop = {}, Rng* rng = nullptr) const {
    if (seq.size() != layout_.size()) throw ShapeError("generator: stream length mismatch");
    const Tensor<Real> h = hidden(seq, uncond, p, nullptr, drop, rng);
    std::vector<Tensor<Real>> out(layout_.layers());
    for (std::size_t m = 0; m < layout_.layers(); ++m) {
      const std::size_t s = layout_.layer_start[m] - 1;
      out[m] = head(slice(h, s, s + layout_.layer_tokens[m]), m, p);
    }
    return out;
  }

  // Logits for the token following `seq`, uncached.
  std::vector<Real> next_logits(const std::vector<std::uint32_t>& seq, bool uncond, ParamBinding<Real>& p) const {
    const Tensor<Real> h = hidden(seq, uncond, p);
    return last_row_logits(h, seq.size(), p);
  }

  // Same as next_logits, consuming only the positions not yet in the cache.
  std::vector<Real> next_logits_cached(const std::vector<std::uint32_t>& seq, bool uncond, ParamBinding<Real>& p,
                                       KvCache<Real>& cache) const {
    const Tensor<Real> h = hidden(seq, uncond, p, &cache);
    return last_row_logits(h, seq.size(), p);
  }

  KvCache<Real> new_cache() const {
    KvCache<Real> c;
    c.reset(cfg_.layers);
    return c;
  }

  // Samples a full stream for a tokenized caption with classifier-free
  // guidance; two cached passes (caption and unconditional prefix).
  HierTokenStream generate(const std::vector<std::uint32_t>& text, const SamplingParams& sp) const {
    sp.validate();
    if (text.size() != cfg_.text_len) throw ShapeError("generate: caption length does not match text_len");
    if (sp.max_tokens != 0 && sp.max_tokens < layout_.video_tokens()) {
      throw UsageError("generate: max_tokens " + std::to_string(sp.max_tokens) + " is below the stream length " +
                       std::to_string(layout_.video_tokens()));
    }
    auto p = ParamBinding<Real>(store_, false);
    Rng rng(sp.seed);
    KvCache<Real> cc = new_cache(), uc = new_cache();
    std::vector<std::uint32_t> seq = text;
    while (seq.size() < layout_.size()) {
      const auto cond = next_logits_cached(seq, false, p, cc);
      const auto unc = next_logits_cached(seq, true, p, uc);
      const auto probs = sampling_probs(cfg_logits(cond, unc, sp.cfg_scale), sp.temperature, sp.top_k);
      const std::uint32_t idx = sample_index(probs, rng);
      const int m = layout_.next_layer(seq.size() - 1);
      if (idx >= layout_.vocab(static_cast<std::size_t>(m))) throw NumericError("generate: sampled index outside the vocabulary");
      seq.push_back(idx);
    }
    return layout_.unflatten(seq, hier_);
  }

 private:
  void declare(Rng& rng) {
    const std::size_t d = cfg_.hidden;
    const double sd = 0.02, out_sd = 0.02 / std::sqrt(2.0 * static_cast<double>(cfg_.layers));
    store_.add_normal("gen.text_emb", {synth::vocabulary().size(), d}, sd, rng);
    store_.add_normal("gen.uncond_emb", {cfg_.text_len, d}, sd, rng);
    store_.add_normal("gen.layer_emb", {hier_.layers.size(), d}, sd, rng);
    for (std::size_t m = 0; m < hier_.layers.size(); ++m) {
      store_.add_normal("gen.tok_emb.l" + std::to_string(m), {layout_.vocab(m), d}, sd, rng);
    }
    for (std::size_t b = 0; b < cfg_.layers; ++b) {
      const std::string pre = "gen.b" + std::to_string(b);
      store_.add_const(pre + ".ln1.g", {d}, Real(1));
      store_.add_const(pre + ".ln1.b", {d}, Real(0));
      store_.add_normal(pre + ".attn.wq", {d, d}, sd, rng);
      store_.add_normal(pre + ".attn.wk", {d, d}, sd, rng);
      store_.add_normal(pre + ".attn.wv", {d, d}, sd, rng);
      store_.add_normal(pre + ".attn.wo", {d, d}, out_sd, rng);
      store_.add_const(pre + ".ln2.g", {d}, Real(1));
      store_.add_const(pre + ".ln2.b", {d}, Real(0));
      store_.add_normal(pre + ".ffn.w1", {d, d * cfg_.ffn_mult}, sd, rng);
      store_.add_const(pre + ".ffn.b1", {d * cfg_.ffn_mult}, Real(0));
      store_.add_normal(pre + ".ffn.w2", {d * cfg_.ffn_mult, d}, out_sd, rng);
      store_.add_const(pre + ".ffn.b2", {d}, Real(0));
    }
    store_.add_const("gen.ln_f.g", {d}, Real(1));
    store_.add_const("gen.ln_f.b", {d}, Real(0));
    for (std::size_t m = 0; m < hier_.layers.size(); ++m) {
      store_.add_normal("gen.head.l" + std::to_string(m) + ".w", {d, layout_.vocab(m)}, sd, rng);
      store_.add_const("gen.head.l" + std::to_string(m) + ".b", {layout_.vocab(m)}, Real(0));
    }
  }

  // Input embeddings for positions [start, seq.size()).
  Tensor<Real> embed(const std::vector<std::uint32_t>& seq, std::size_t start, bool uncond, ParamBinding<Real>& p) const {
    std::vector<Tensor<Real>> parts;
    std::size_t n = start;
    const std::size_t text_end = std::min(seq.size(), layout_.text_len);
    if (n < text_end) {
      if (uncond) {
        parts.push_back(slice(p("gen.uncond_emb"), n, text_end));
      } else {
        parts.push_back(embedding(p("gen.text_emb"), std::vector<std::uint32_t>(seq.begin() + static_cast<std::ptrdiff_t>(n),
                                                                                seq.begin() + static_cast<std::ptrdiff_t>(text_end))));
      }
      n = text_end;
    }
    while (n < seq.size()) {
      const int m = layout_.pos[n].layer;
      std::size_t e = n;
      std::vector<std::uint32_t> ids;
      while (e < seq.size() && layout_.pos[e].layer == m) {
        if (seq[e] >= layout_.vocab(static_cast<std::size_t>(m))) throw ShapeError("generator: token outside its layer vocabulary");
        ids.push_back(seq[e++]);
      }
      const std::size_t mi = static_cast<std::size_t>(m);
      const Tensor<Real> le = reshape(slice(p("gen.layer_emb"), mi, mi + 1), {cfg_.hidden});
      parts.push_back(add_row(embedding(p("gen.tok_emb.l" + std::to_string(m)), ids), le));
      n = e;
    }
    return parts.size() == 1 ? parts[0] : concat(parts);
  }

  std::vector<Real> last_row_logits(const Tensor<Real>& h, std::size_t seq_len, ParamBinding<Real>& p) const {
    const int m = layout_.next_layer(seq_len - 1);
    if (m == SequenceLayout::kText) throw ShapeError("generator: the next position is not a video token");
    const Tensor<Real> last = slice(h, h.dim(0) - 1, h.dim(0));
    const auto l = head(last, static_cast<std::size_t>(m), p);
    return l.vec();
  }

  GeneratorConfig cfg_;
  HierarchyConfig hier_;
  SequenceLayout layout_;
  RopeSpec rope_;
  ParamStore<Real> store_;
};

}  // namespace hitok
