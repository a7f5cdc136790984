// hitok: command-line front end for the tokenizer, generator and calculators.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "hitok/ar_generator.hpp"
#include "hitok/codec_io.hpp"
#include "hitok/config.hpp"
#include "hitok/dyn_mask.hpp"
#include "hitok/hier_vae.hpp"
#include "hitok/io.hpp"
#include "hitok/metrics.hpp"
#include "hitok/param_store.hpp"
#include "hitok/synth_data.hpp"
#include "hitok/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hitok {
namespace {

using Real = float;

std::string sidecar(const std::string& ckpt) { return ckpt + ".config.json"; }

RunConfig load_config(const std::string& path) {
  RunConfig c = parse_run_config(io::read_file(path));
  c.validate();
  return c;
}

void write_json(const std::string& path, const json& j) { io::write_file(path, j.dump(2) + "\n"); }

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

struct Tokenizer {
  RunConfig cfg;
  HierVae<Real> vae;
};

Tokenizer load_tokenizer(const std::string& ckpt) {
  RunConfig cfg = load_config(sidecar(ckpt));
  HierVae<Real> vae(cfg.hierarchy, 0);
  htck::load(vae.params(), ckpt);
  return {std::move(cfg), std::move(vae)};
}

void check_video(const VideoBlock& v, const HierarchyConfig& h, const std::string& what) {
  if (v.t != h.input.t || v.h != h.input.h || v.w != h.input.w || v.c != h.channels) {
    throw ShapeError(what + ": clip is " + std::to_string(v.t) + "x" + std::to_string(v.h) + "x" + std::to_string(v.w) +
                     "x" + std::to_string(v.c) + ", tokenizer expects " + to_string(h.input) + "x" +
                     std::to_string(h.channels));
  }
}

// Clips of a datagen directory in file-name order; captions come from the
// .txt file next to each .htvv when present.
std::vector<synth::Clip> load_clips(const std::string& dir, bool need_captions) {
  if (!fs::is_directory(dir)) throw UsageError("data directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".htvv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError("data directory '" + dir + "' holds no .htvv clips");
  std::vector<synth::Clip> out;
  for (const auto& f : files) {
    synth::Clip c;
    c.video = htvv::read(f.string());
    auto txt = f;
    txt.replace_extension(".txt");
    if (fs::exists(txt)) {
      c.caption = io::read_file(txt.string());
      while (!c.caption.empty() && (c.caption.back() == '\n' || c.caption.back() == '\r')) c.caption.pop_back();
    } else if (need_captions) {
      throw UsageError("clip '" + f.string() + "' has no caption file");
    }
    out.push_back(std::move(c));
  }
  return out;
}

class JsonlLog {
 public:
  explicit JsonlLog(const std::string& path) : os_(path, std::ios::binary | std::ios::trunc) {
    if (!os_) throw FormatError(FormatErrc::kIo, "cannot open log '" + path + "'");
  }
  LogSink sink() { return jsonl_sink(os_); }
  void write(const json& j) { os_ << j.dump() << '\n' << std::flush; }

 private:
  std::ofstream os_;
};

int cmd_datagen(const std::string& out, std::size_t count, std::uint64_t seed, const std::vector<std::size_t>& shape) {
  if (shape.size() != 3) throw UsageError("--shape expects T,H,W");
  const auto clips = synth::dataset(seed, count, shape[0], shape[1], shape[2]);
  fs::create_directories(out);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "clip_%05zu", i);
    const auto base = fs::path(out) / stem;
    htvv::write(clips[i].video, base.string() + ".htvv");
    io::write_file(base.string() + ".txt", clips[i].caption + "\n");
  }
  write_json((fs::path(out) / "config.json").string(),
             {{"command", "datagen"}, {"count", count}, {"seed", seed}, {"shape", shape}});
  std::cout << "wrote " << clips.size() << " clips to " << out << "\n";
  return 0;
}

int cmd_train_tokenizer(const std::string& config, const std::string& data, const std::string& out) {
  const RunConfig cfg = load_config(config);
  const auto clips = load_clips(data, false);
  std::vector<VideoBlock> videos;
  for (const auto& c : clips) {
    check_video(c.video, cfg.hierarchy, "train-tokenizer");
    videos.push_back(c.video);
  }
  ensure_parent(out);
  HierVae<Real> vae(cfg.hierarchy, cfg.tokenizer_train.seed);
  JsonlLog log(out + ".log.jsonl");
  log.write({{"command", "train-tokenizer"}, {"clips", videos.size()}, {"config", to_json(cfg)}});
  const auto sum = train_tokenizer(vae, videos, cfg.tokenizer_train, log.sink());
  log.write({{"final_loss", sum.final_loss}, {"first_l1", sum.first_l1}, {"final_l1", sum.final_l1}});
  htck::save(vae.params(), out);
  write_json(sidecar(out), to_json(cfg));
  std::cout << "l1 " << sum.first_l1 << " -> " << sum.final_l1 << "\n";
  return 0;
}

int cmd_encode(const std::string& ckpt, const std::string& video, const std::string& out, const std::string& mask,
               double cap, std::uint64_t mask_seed) {
  const MaskStrategy strategy = parse_mask_strategy(mask);
  if (!(cap > 0.0 && cap <= 1.0)) throw UsageError("--mask-cap must be in (0, 1]");
  const auto tok = load_tokenizer(ckpt);
  const auto v = htvv::read(video);
  check_video(v, tok.cfg.hierarchy, "encode");
  auto lat = tok.vae.encode(v);
  if (strategy != MaskStrategy::kNone) {
    Rng rng(mask_seed);
    const auto& l0 = tok.cfg.hierarchy.layers[0];
    lat.layers[0].mask = plan_from_indices(lat.layers[0].codes.indices, l0.latent, l0.quant_dim, cap, rng, strategy);
  }
  const auto stream = lat.tokens(tok.cfg.hierarchy);
  ensure_parent(out);
  htvt::write(stream, out);
  std::size_t masked = 0;
  for (auto f : stream.layers[0].mask) masked += f;
  std::cout << "tokens " << stream.total_tokens() << " masked " << masked << "\n";
  return 0;
}

int cmd_decode(const std::string& ckpt, const std::string& tokens, const std::string& out) {
  const auto tok = load_tokenizer(ckpt);
  const auto stream = htvt::read(tokens);
  const auto v = tok.vae.decode(stream);
  ensure_parent(out);
  htvv::write(v, out);
  return 0;
}

int cmd_train_generator(const std::string& config, const std::string& data, const std::string& tokenizer,
                        const std::string& out) {
  RunConfig cfg = load_config(config);
  const auto tok = load_tokenizer(tokenizer);
  cfg.hierarchy = tok.cfg.hierarchy;
  cfg.validate();
  const auto clips = load_clips(data, true);
  for (const auto& c : clips) check_video(c.video, cfg.hierarchy, "train-generator");
  ArGenerator<Real> gen(cfg.generator, cfg.hierarchy, cfg.generator_train.seed);
  const auto samples = tokenize_dataset(tok.vae, gen.layout(), clips);
  ensure_parent(out);
  JsonlLog log(out + ".log.jsonl");
  log.write({{"command", "train-generator"}, {"clips", clips.size()}, {"config", to_json(cfg)}});
  const auto sum = train_generator(gen, samples, cfg.generator_train, log.sink());
  const auto w = layer_loss_weights(cfg.generator_train, gen.layout());
  const double ce = generator_eval(gen, samples, w);
  const double base = uniform_baseline(gen.layout(), w);
  log.write({{"final_loss", sum.final_loss}, {"train_ce", ce}, {"uniform_ce", base}});
  htck::save(gen.params(), out);
  write_json(sidecar(out), to_json(cfg));
  std::cout << "ce " << ce << " uniform " << base << "\n";
  return 0;
}

int cmd_generate(const std::string& gen_ckpt, const std::string& tokenizer, const std::string& caption,
                 SamplingParams sp, const std::string& out) {
  sp.validate();
  const RunConfig gcfg = load_config(sidecar(gen_ckpt));
  const auto tok = load_tokenizer(tokenizer);
  if (to_json(gcfg.hierarchy) != to_json(tok.cfg.hierarchy)) {
    throw UsageError("generator and tokenizer checkpoints were built for different hierarchies");
  }
  ArGenerator<Real> gen(gcfg.generator, gcfg.hierarchy, 0);
  htck::load(gen.params(), gen_ckpt);
  const auto text = synth::tokenize_caption(caption, gcfg.generator.text_len);
  const auto stream = gen.generate(text, sp);
  const auto v = tok.vae.decode(stream);
  ensure_parent(out);
  htvv::write(v, out);
  RunConfig echo = gcfg;
  echo.sampling = sp;
  json j = to_json(echo);
  j["caption"] = caption;
  write_json(out + ".config.json", j);
  return 0;
}

int cmd_stats(const std::string& config) {
  const RunConfig cfg = load_config(config);
  const auto& h = cfg.hierarchy;
  std::printf("%-6s %-12s %-10s %-8s %s\n", "layer", "latent", "quant_dim", "tokens", "bits");
  for (std::size_t m = 0; m < h.layers.size(); ++m) {
    const auto& l = h.layers[m];
    std::printf("%-6zu %-12s %-10zu %-8zu %zu\n", m, to_string(l.latent).c_str(), l.quant_dim, l.token_count(),
                l.token_count() * l.quant_dim);
  }
  std::printf("input %s\n", to_string(h.input).c_str());
  std::printf("total_tokens %zu\n", h.total_tokens());
  std::printf("compression_ratio %.2f\n", compression_ratio(h.input, h.total_tokens()));
  std::printf("payload_bits %llu\n", static_cast<unsigned long long>(payload_bits(h)));
  std::printf("bpp %.6f\n", bits_per_pixel(h));
  return 0;
}

int cmd_eval(const std::string& ref, const std::string& out) {
  const auto r = metrics::evaluate(htvv::read(ref), htvv::read(out));
  std::cout << metrics::to_json(r).dump() << "\n";
  return 0;
}

int cmd_export(const std::string& video, const std::string& out) {
  const auto paths = export_frames(htvv::read(video), out);
  std::cout << "wrote " << paths.size() << " frames to " << out << "\n";
  return 0;
}

int fail(int code, const std::string& kind, const std::string& msg) {
  std::cerr << json{{"error", kind}, {"code", code}, {"message", msg}}.dump() << "\n";
  return code;
}

int run(int argc, char** argv) {
  CLI::App app{"hierarchical video tokenizer and generator"};
  app.require_subcommand(1);

  std::string out, config, data, ckpt, video, tokens, tokenizer, gen_ckpt, caption, ref;
  std::size_t count = DataConfig{}.count;
  std::uint64_t seed = DataConfig{}.seed;
  std::vector<std::size_t> shape{16, 32, 32};
  std::string mask = "none";
  double mask_cap = 0.85;
  std::uint64_t mask_seed = 0;
  SamplingParams sp;

  auto* datagen = app.add_subcommand("datagen", "write a synthetic clip dataset");
  datagen->add_option("--out", out, "output directory")->required();
  datagen->add_option("--count", count, "number of clips");
  datagen->add_option("--seed", seed, "dataset seed");
  datagen->add_option("--shape", shape, "T,H,W")->delimiter(',')->expected(3);

  auto* train_tok = app.add_subcommand("train-tokenizer", "train the hierarchical tokenizer");
  train_tok->add_option("--config", config)->required();
  train_tok->add_option("--data", data)->required();
  train_tok->add_option("--out", out)->required();

  auto* encode = app.add_subcommand("encode", "video file to token stream");
  encode->add_option("--ckpt", ckpt)->required();
  encode->add_option("--video", video)->required();
  encode->add_option("--out", out)->required();
  encode->add_option("--mask", mask, "none|repeat|zero|learned");
  encode->add_option("--mask-cap", mask_cap);
  encode->add_option("--mask-seed", mask_seed);

  auto* decode = app.add_subcommand("decode", "token stream to video file");
  decode->add_option("--ckpt", ckpt)->required();
  decode->add_option("--tokens", tokens)->required();
  decode->add_option("--out", out)->required();

  auto* train_gen = app.add_subcommand("train-generator", "train the autoregressive generator");
  train_gen->add_option("--config", config)->required();
  train_gen->add_option("--data", data)->required();
  train_gen->add_option("--tokenizer", tokenizer)->required();
  train_gen->add_option("--out", out)->required();

  auto* generate = app.add_subcommand("generate", "sample a clip from a caption");
  generate->add_option("--gen", gen_ckpt)->required();
  generate->add_option("--tokenizer", tokenizer)->required();
  generate->add_option("--caption", caption)->required();
  generate->add_option("--seed", sp.seed)->required();
  generate->add_option("--cfg", sp.cfg_scale, "guidance scale");
  generate->add_option("--temp", sp.temperature);
  generate->add_option("--top-k", sp.top_k);
  generate->add_option("--out", out)->required();

  auto* stats = app.add_subcommand("stats", "token counts, compression ratio and bpp of a config");
  stats->add_option("--config", config)->required();

  auto* eval = app.add_subcommand("eval", "PSNR/SSIM report of two video files");
  eval->add_option("--ref", ref)->required();
  eval->add_option("--out", video, "reconstruction to score")->required();

  auto* exportf = app.add_subcommand("export-frames", "write PPM frames");
  exportf->add_option("--video", video)->required();
  exportf->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "usage", e.what());
  }

  thread_cap();
  if (*datagen) return cmd_datagen(out, count, seed, shape);
  if (*train_tok) return cmd_train_tokenizer(config, data, out);
  if (*encode) return cmd_encode(ckpt, video, out, mask, mask_cap, mask_seed);
  if (*decode) return cmd_decode(ckpt, tokens, out);
  if (*train_gen) return cmd_train_generator(config, data, tokenizer, out);
  if (*generate) return cmd_generate(gen_ckpt, tokenizer, caption, sp, out);
  if (*stats) return cmd_stats(config);
  if (*eval) return cmd_eval(ref, video);
  return cmd_export(video, out);
}

}  // namespace
}  // namespace hitok

int main(int argc, char** argv) {
  try {
    return hitok::run(argc, argv);
  } catch (const hitok::Error& e) {
    return hitok::fail(static_cast<int>(e.code()), e.kind(), e.what());
  } catch (const std::exception& e) {
    return hitok::fail(1, "internal", e.what());
  }
}
