#pragma once

// Run configuration: tokenizer hierarchy, training, generator and sampling
// settings. Every section is a JSON object whose fields are all optional;
// unknown keys are rejected so that typos fail loudly.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "hitok/error.hpp"
#include "hitok/lfq.hpp"

namespace hitok {

using json = nlohmann::json;

struct Dims3 {
  std::size_t t = 1, h = 1, w = 1;

  std::size_t count() const { return t * h * w; }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

inline std::string to_string(const Dims3& d) {
  return std::to_string(d.t) + "x" + std::to_string(d.h) + "x" + std::to_string(d.w);
}

struct LayerConfig {
  std::size_t quant_dim = 1;
  Dims3 latent;

  std::size_t token_count() const { return latent.count(); }
  std::uint64_t vocab_size() const { return std::uint64_t{1} << quant_dim; }
};

struct EncoderStage {
  std::size_t channels = 32;
  std::size_t t_stride = 1;
  std::size_t s_stride = 1;
};

enum class MaskStrategy { kNone, kRepeatPrev, kZero, kLearned };

inline const char* to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::kNone: return "none";
    case MaskStrategy::kRepeatPrev: return "repeat";
    case MaskStrategy::kZero: return "zero";
    case MaskStrategy::kLearned: return "learned";
  }
  return "none";
}

inline MaskStrategy parse_mask_strategy(const std::string& s) {
  if (s == "none") return MaskStrategy::kNone;
  if (s == "repeat" || s == "repeat_prev") return MaskStrategy::kRepeatPrev;
  if (s == "zero") return MaskStrategy::kZero;
  if (s == "learned") return MaskStrategy::kLearned;
  throw UsageError("unknown mask strategy '" + s + "' (expected none|repeat|zero|learned)");
}

struct HierarchyConfig {
  // Clip shape T x H x W x C.
  Dims3 input{16, 32, 32};
  std::size_t channels = 3;
  // Spatial size the clip is resampled to before the encoder; defaults to the
  // input size. Used for configurations that interpolate before downsampling.
  std::optional<std::array<std::size_t, 2>> encoder_hw;
  std::vector<EncoderStage> stages{{16, 2, 2}, {32, 2, 2}, {64, 1, 2}, {64, 1, 1}};
  // Index 0 is the densest layer.
  std::vector<LayerConfig> layers{{10, {4, 4, 4}}, {8, {2, 2, 2}}, {6, {1, 1, 1}}};
  std::size_t compressor_width = 32;
  std::size_t norm_groups = 8;
  MaskStrategy mask_strategy = MaskStrategy::kNone;
  double mask_cap = 0.85;

  Dims3 encoder_input() const {
    if (!encoder_hw) return input;
    return {input.t, (*encoder_hw)[0], (*encoder_hw)[1]};
  }

  // Layer-0 latent shape implied by the stage strides.
  Dims3 main_latent() const {
    Dims3 d = encoder_input();
    for (const auto& s : stages) {
      d.t = (d.t + s.t_stride - 1) / s.t_stride;
      d.h = (d.h + s.s_stride - 1) / s.s_stride;
      d.w = (d.w + s.s_stride - 1) / s.s_stride;
    }
    return d;
  }

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.token_count();
    return n;
  }

  // Per-axis downsampling factor from layer m-1 to layer m (m >= 1).
  Dims3 layer_ratio(std::size_t m) const {
    const auto& a = layers.at(m - 1).latent;
    const auto& b = layers.at(m).latent;
    return {a.t / b.t, a.h / b.h, a.w / b.w};
  }

  void validate() const {
    if (input.count() == 0 || channels == 0) throw UsageError("hierarchy: empty input shape");
    if (stages.empty()) throw UsageError("hierarchy: at least one encoder stage is required");
    for (const auto& s : stages) {
      if (s.channels == 0 || s.t_stride == 0 || s.s_stride == 0) throw UsageError("hierarchy: stage fields must be >= 1");
    }
    if (layers.empty()) throw UsageError("hierarchy: at least one layer is required");
    for (const auto& l : layers) {
      lfq::check_quant_dim(l.quant_dim);
      if (l.latent.count() == 0) throw UsageError("hierarchy: empty latent shape");
    }
    if (!(layers[0].latent == main_latent())) {
      throw UsageError("hierarchy: layer 0 latent " + to_string(layers[0].latent) +
                       " does not match encoder output " + to_string(main_latent()));
    }
    for (std::size_t m = 1; m < layers.size(); ++m) {
      const auto& a = layers[m - 1].latent;
      const auto& b = layers[m].latent;
      if (b.t > a.t || b.h > a.h || b.w > a.w || b.count() >= a.count()) {
        throw UsageError("hierarchy: layer " + std::to_string(m) + " latent must shrink");
      }
      if (a.t % b.t || a.h % b.h || a.w % b.w) {
        throw UsageError("hierarchy: layer " + std::to_string(m) + " latent must divide layer " + std::to_string(m - 1));
      }
    }
    if (compressor_width == 0 || norm_groups == 0) throw UsageError("hierarchy: widths must be >= 1");
    if (!(mask_cap > 0.0 && mask_cap <= 1.0)) throw UsageError("hierarchy: mask_cap must be in (0, 1]");
  }
};

// How generator layer weights are set when none are given explicitly.
enum class LayerWeightRule { kInverseCount, kEqual };

inline const char* to_string(LayerWeightRule r) { return r == LayerWeightRule::kEqual ? "equal" : "inverse_count"; }

inline LayerWeightRule parse_layer_weight_rule(const std::string& s) {
  if (s == "inverse_count") return LayerWeightRule::kInverseCount;
  if (s == "equal") return LayerWeightRule::kEqual;
  throw UsageError("unknown layer weight rule '" + s + "' (expected inverse_count|equal)");
}

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 4;
  double lr = 3e-4;
  std::uint64_t seed = 0;
  double progressive_boundary = 0.3;
  double entropy_weight = 0.1;
  double entropy_tau = 1.0;
  double entropy_gamma = 1.0;
  // Squared-error term added to the tokenizer's L1. Pure L1 on mostly flat
  // frames stalls at the background value.
  double recon_mse_weight = 100.0;
  // Per-layer cross-entropy weights (index 0 = densest). Empty: set by
  // layer_weight_rule, w_m ~ 1/N_m or all equal.
  std::vector<double> layer_weights;
  LayerWeightRule layer_weight_rule = LayerWeightRule::kInverseCount;
  double cond_dropout = 0.1;
  double residual_dropout = 0.1;
  double ffn_dropout = 0.1;
  double token_dropout = 0.1;
  std::size_t log_every = 1;

  void validate() const {
    if (steps < 1) throw UsageError("train: steps must be >= 1");
    if (batch_size < 1) throw UsageError("train: batch_size must be >= 1");
    if (!(lr > 0)) throw UsageError("train: lr must be > 0");
    for (double p : {progressive_boundary, cond_dropout, residual_dropout, ffn_dropout, token_dropout}) {
      if (!(p >= 0.0 && p <= 1.0)) throw UsageError("train: probabilities and fractions must be in [0, 1]");
    }
    if (!(entropy_tau > 0)) throw UsageError("train: entropy_tau must be > 0");
    if (!(recon_mse_weight >= 0)) throw UsageError("train: recon_mse_weight must be >= 0");
    for (double w : layer_weights) {
      if (!(w >= 0)) throw UsageError("train: layer weights must be >= 0");
    }
    if (log_every < 1) throw UsageError("train: log_every must be >= 1");
  }
};

struct GeneratorConfig {
  std::size_t layers = 4;
  std::size_t hidden = 128;
  std::size_t heads = 4;
  std::array<std::size_t, 3> rope_dims{12, 10, 10};
  double rope_base = 10000.0;
  std::size_t text_len = 8;
  std::size_t ffn_mult = 4;

  std::size_t head_dim() const { return hidden / heads; }

  void validate() const {
    if (layers < 1 || hidden < 1 || heads < 1 || text_len < 1 || ffn_mult < 1) {
      throw UsageError("generator: sizes must be >= 1");
    }
    if (hidden % heads) throw UsageError("generator: hidden must be divisible by heads");
    const auto [dt, dh, dw] = rope_dims;
    if (dt % 2 || dh % 2 || dw % 2) throw UsageError("generator: RoPE axis dims must be even");
    if (dt + dh + dw != head_dim()) throw UsageError("generator: RoPE axis dims must sum to the head dim");
  }
};

struct SamplingParams {
  double cfg_scale = 7.5;
  double temperature = 1.0;
  std::size_t top_k = 0;
  std::uint64_t seed = 0;
  std::size_t max_tokens = 0;  // 0: the full stream

  void validate() const {
    if (!(cfg_scale >= 0)) throw UsageError("sampling: cfg_scale must be >= 0");
    if (!(temperature > 0)) throw UsageError("sampling: temperature must be > 0");
  }
};

struct DataConfig {
  std::size_t count = 256;
  std::size_t holdout = 32;
  std::uint64_t seed = 7;
  std::uint64_t holdout_seed = 1007;
};

struct RunConfig {
  HierarchyConfig hierarchy;
  TrainConfig tokenizer_train;
  GeneratorConfig generator;
  TrainConfig generator_train = default_generator_train();
  SamplingParams sampling;
  DataConfig data;

  static TrainConfig default_generator_train() {
    TrainConfig t;
    t.steps = 3000;
    t.batch_size = 8;
    t.lr = 1e-3;
    t.progressive_boundary = 0.0;
    t.layer_weight_rule = LayerWeightRule::kEqual;
    return t;
  }

  void validate() const {
    hierarchy.validate();
    tokenizer_train.validate();
    generator.validate();
    generator_train.validate();
    sampling.validate();
    if (!generator_train.layer_weights.empty() && generator_train.layer_weights.size() != hierarchy.layers.size()) {
      throw UsageError("generator_train.layer_weights must have one entry per layer");
    }
  }
};

namespace config_detail {

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw UsageError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(where + "." + key + ": " + e.what());
  }
}

inline Dims3 read_dims3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw UsageError(where + ": expected [t, h, w]");
  try {
    return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
  } catch (const json::exception& e) {
    throw UsageError(where + ": " + e.what());
  }
}

}  // namespace config_detail

inline HierarchyConfig hierarchy_from_json(const json& j) {
  using namespace config_detail;
  const std::string w = "hierarchy";
  reject_unknown(j, {"input", "channels", "encoder_hw", "stages", "layers", "compressor_width", "norm_groups",
                     "mask_strategy", "mask_cap"},
                 w);
  HierarchyConfig c;
  if (j.contains("input")) c.input = read_dims3(j["input"], w + ".input");
  read(j, "channels", c.channels, w);
  if (j.contains("encoder_hw")) {
    const auto& e = j["encoder_hw"];
    if (e.is_null()) {
      c.encoder_hw.reset();
    } else {
      if (!e.is_array() || e.size() != 2) throw UsageError(w + ".encoder_hw: expected [h, w]");
      c.encoder_hw = std::array<std::size_t, 2>{e[0].get<std::size_t>(), e[1].get<std::size_t>()};
    }
  }
  if (j.contains("stages")) {
    c.stages.clear();
    for (const auto& s : j["stages"]) {
      reject_unknown(s, {"channels", "t_stride", "s_stride"}, w + ".stages[]");
      EncoderStage st;
      read(s, "channels", st.channels, w + ".stages[]");
      read(s, "t_stride", st.t_stride, w + ".stages[]");
      read(s, "s_stride", st.s_stride, w + ".stages[]");
      c.stages.push_back(st);
    }
  }
  if (j.contains("layers")) {
    c.layers.clear();
    for (const auto& l : j["layers"]) {
      reject_unknown(l, {"quant_dim", "latent"}, w + ".layers[]");
      LayerConfig lc;
      read(l, "quant_dim", lc.quant_dim, w + ".layers[]");
      if (!l.contains("latent")) throw UsageError(w + ".layers[]: 'latent' is required");
      lc.latent = read_dims3(l["latent"], w + ".layers[].latent");
      c.layers.push_back(lc);
    }
  }
  read(j, "compressor_width", c.compressor_width, w);
  read(j, "norm_groups", c.norm_groups, w);
  if (j.contains("mask_strategy")) c.mask_strategy = parse_mask_strategy(j["mask_strategy"].get<std::string>());
  read(j, "mask_cap", c.mask_cap, w);
  return c;
}

inline json to_json(const HierarchyConfig& c) {
  json j;
  j["input"] = {c.input.t, c.input.h, c.input.w};
  j["channels"] = c.channels;
  j["encoder_hw"] = c.encoder_hw ? json{(*c.encoder_hw)[0], (*c.encoder_hw)[1]} : json(nullptr);
  j["stages"] = json::array();
  for (const auto& s : c.stages) j["stages"].push_back({{"channels", s.channels}, {"t_stride", s.t_stride}, {"s_stride", s.s_stride}});
  j["layers"] = json::array();
  for (const auto& l : c.layers) {
    j["layers"].push_back({{"quant_dim", l.quant_dim}, {"latent", {l.latent.t, l.latent.h, l.latent.w}}});
  }
  j["compressor_width"] = c.compressor_width;
  j["norm_groups"] = c.norm_groups;
  j["mask_strategy"] = to_string(c.mask_strategy);
  j["mask_cap"] = c.mask_cap;
  return j;
}

inline TrainConfig train_from_json(const json& j, TrainConfig c, const std::string& w) {
  using namespace config_detail;
  reject_unknown(j, {"steps", "batch_size", "lr", "seed", "progressive_boundary", "entropy_weight", "entropy_tau",
                     "entropy_gamma", "recon_mse_weight", "layer_weights", "layer_weight_rule", "cond_dropout", "residual_dropout", "ffn_dropout",
                     "token_dropout", "log_every"},
                 w);
  read(j, "steps", c.steps, w);
  read(j, "batch_size", c.batch_size, w);
  read(j, "lr", c.lr, w);
  read(j, "seed", c.seed, w);
  read(j, "progressive_boundary", c.progressive_boundary, w);
  read(j, "entropy_weight", c.entropy_weight, w);
  read(j, "entropy_tau", c.entropy_tau, w);
  read(j, "entropy_gamma", c.entropy_gamma, w);
  read(j, "recon_mse_weight", c.recon_mse_weight, w);
  read(j, "layer_weights", c.layer_weights, w);
  std::string rule = to_string(c.layer_weight_rule);
  read(j, "layer_weight_rule", rule, w);
  c.layer_weight_rule = parse_layer_weight_rule(rule);
  read(j, "cond_dropout", c.cond_dropout, w);
  read(j, "residual_dropout", c.residual_dropout, w);
  read(j, "ffn_dropout", c.ffn_dropout, w);
  read(j, "token_dropout", c.token_dropout, w);
  read(j, "log_every", c.log_every, w);
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"seed", c.seed},
          {"progressive_boundary", c.progressive_boundary},
          {"entropy_weight", c.entropy_weight},
          {"entropy_tau", c.entropy_tau},
          {"entropy_gamma", c.entropy_gamma},
          {"recon_mse_weight", c.recon_mse_weight},
          {"layer_weights", c.layer_weights},
          {"layer_weight_rule", to_string(c.layer_weight_rule)},
          {"cond_dropout", c.cond_dropout},
          {"residual_dropout", c.residual_dropout},
          {"ffn_dropout", c.ffn_dropout},
          {"token_dropout", c.token_dropout},
          {"log_every", c.log_every}};
}

inline GeneratorConfig generator_from_json(const json& j) {
  using namespace config_detail;
  const std::string w = "generator";
  reject_unknown(j, {"layers", "hidden", "heads", "rope_dims", "rope_base", "text_len", "ffn_mult"}, w);
  GeneratorConfig c;
  read(j, "layers", c.layers, w);
  read(j, "hidden", c.hidden, w);
  read(j, "heads", c.heads, w);
  if (j.contains("rope_dims")) {
    const auto d = read_dims3(j["rope_dims"], w + ".rope_dims");
    c.rope_dims = {d.t, d.h, d.w};
  }
  read(j, "rope_base", c.rope_base, w);
  read(j, "text_len", c.text_len, w);
  read(j, "ffn_mult", c.ffn_mult, w);
  return c;
}

inline json to_json(const GeneratorConfig& c) {
  return {{"layers", c.layers},       {"hidden", c.hidden},     {"heads", c.heads},
          {"rope_dims", c.rope_dims}, {"rope_base", c.rope_base}, {"text_len", c.text_len},
          {"ffn_mult", c.ffn_mult}};
}

inline SamplingParams sampling_from_json(const json& j) {
  using namespace config_detail;
  const std::string w = "sampling";
  reject_unknown(j, {"cfg_scale", "temperature", "top_k", "seed", "max_tokens"}, w);
  SamplingParams s;
  read(j, "cfg_scale", s.cfg_scale, w);
  read(j, "temperature", s.temperature, w);
  read(j, "top_k", s.top_k, w);
  read(j, "seed", s.seed, w);
  read(j, "max_tokens", s.max_tokens, w);
  return s;
}

inline json to_json(const SamplingParams& s) {
  return {{"cfg_scale", s.cfg_scale}, {"temperature", s.temperature}, {"top_k", s.top_k},
          {"seed", s.seed},           {"max_tokens", s.max_tokens}};
}

inline DataConfig data_from_json(const json& j) {
  using namespace config_detail;
  reject_unknown(j, {"count", "holdout", "seed", "holdout_seed"}, "data");
  DataConfig d;
  read(j, "count", d.count, "data");
  read(j, "holdout", d.holdout, "data");
  read(j, "seed", d.seed, "data");
  read(j, "holdout_seed", d.holdout_seed, "data");
  return d;
}

inline json to_json(const DataConfig& d) {
  return {{"count", d.count}, {"holdout", d.holdout}, {"seed", d.seed}, {"holdout_seed", d.holdout_seed}};
}

inline RunConfig run_config_from_json(const json& j) {
  config_detail::reject_unknown(j, {"hierarchy", "tokenizer_train", "generator", "generator_train", "sampling", "data"},
                                "config");
  RunConfig c;
  if (j.contains("hierarchy")) c.hierarchy = hierarchy_from_json(j["hierarchy"]);
  if (j.contains("tokenizer_train")) c.tokenizer_train = train_from_json(j["tokenizer_train"], c.tokenizer_train, "tokenizer_train");
  if (j.contains("generator")) c.generator = generator_from_json(j["generator"]);
  if (j.contains("generator_train")) c.generator_train = train_from_json(j["generator_train"], c.generator_train, "generator_train");
  if (j.contains("sampling")) c.sampling = sampling_from_json(j["sampling"]);
  if (j.contains("data")) c.data = data_from_json(j["data"]);
  c.validate();
  return c;
}

inline json to_json(const RunConfig& c) {
  return {{"hierarchy", to_json(c.hierarchy)},
          {"tokenizer_train", to_json(c.tokenizer_train)},
          {"generator", to_json(c.generator)},
          {"generator_train", to_json(c.generator_train)},
          {"sampling", to_json(c.sampling)},
          {"data", to_json(c.data)}};
}

inline RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace hitok
