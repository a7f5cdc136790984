#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <string>

#include "hitok/codec_io.hpp"
#include "hitok/config.hpp"
#include "hitok/hier_vae.hpp"
#include "hitok/io.hpp"
#include "hitok/param_store.hpp"

namespace fs = std::filesystem;

namespace hitok {
namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

const fs::path& scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("hitok_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Result run(const std::string& args) {
  const auto out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
  const std::string cmd = std::string(HITOK_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = io::read_file(out.string());
  r.err = io::read_file(err.string());
  return r;
}

std::string src(const std::string& rel) { return std::string(HITOK_SOURCE_DIR) + "/" + rel; }
std::string tmp(const std::string& rel) { return (scratch() / rel).string(); }

constexpr const char* kTinyConfig = R"({
  "hierarchy": {
    "input": [4, 16, 16],
    "stages": [{"channels": 8, "t_stride": 2, "s_stride": 2}, {"channels": 8, "t_stride": 1, "s_stride": 2}],
    "layers": [{"quant_dim": 4, "latent": [2, 4, 4]}, {"quant_dim": 3, "latent": [1, 2, 2]}],
    "compressor_width": 8, "norm_groups": 4
  },
  "tokenizer_train": {"steps": 3, "batch_size": 2},
  "generator": {"layers": 1, "hidden": 16, "heads": 2, "rope_dims": [4, 2, 2]},
  "generator_train": {"steps": 3, "batch_size": 2}
})";

// One tiny pipeline shared by the tests below.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    io::write_file(tmp("tiny.json"), kTinyConfig);
    ASSERT_EQ(run("datagen --out " + tmp("data") + " --count 4 --seed 3 --shape 4,16,16").code, 0);
    ASSERT_EQ(run("train-tokenizer --config " + tmp("tiny.json") + " --data " + tmp("data") + " --out " + tmp("tok.ckpt")).code, 0);
    ASSERT_EQ(run("train-generator --config " + tmp("tiny.json") + " --data " + tmp("data") + " --tokenizer " +
                  tmp("tok.ckpt") + " --out " + tmp("gen.ckpt"))
                  .code,
              0);
  }
};

TEST(CliStats, Table3) {
  const auto r = run("stats --config " + src("configs/table3.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("total_tokens 2448"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("compression_ratio 1713.36"), std::string::npos) << r.out;
  for (const char* n : {" 2048 ", " 256 ", " 128 ", " 16 "}) EXPECT_NE(r.out.find(n), std::string::npos) << n;
}

TEST(CliStats, SingleLayerAndDesk) {
  EXPECT_NE(run("stats --config " + src("configs/single_layer.json")).out.find("total_tokens 2312"), std::string::npos);
  const auto desk = run("stats --config " + src("configs/desk.json"));
  EXPECT_NE(desk.out.find("total_tokens 73"), std::string::npos) << desk.out;
  EXPECT_NE(desk.out.find("payload_bits 710"), std::string::npos) << desk.out;
}

TEST(CliErrors, ExitCodesAndOneLineJson) {
  const auto none = run("");
  EXPECT_EQ(none.code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("stats").code, 2);

  const auto missing = run("stats --config " + tmp("does_not_exist.json"));
  EXPECT_EQ(missing.code, 3);
  const auto j = nlohmann::json::parse(missing.err);
  EXPECT_EQ(j.at("code").get<int>(), 3);
  EXPECT_EQ(j.at("error").get<std::string>(), "io");
  EXPECT_EQ(std::count(missing.err.begin(), missing.err.end(), '\n'), 1);

  io::write_file(tmp("bad.json"), R"({"hierarchy": {"bogus": 1}})");
  EXPECT_EQ(run("stats --config " + tmp("bad.json")).code, 2);

  io::write_file(tmp("junk.htvv"), "not a video");
  const auto junk = run("eval --ref " + tmp("junk.htvv") + " --out " + tmp("junk.htvv"));
  EXPECT_EQ(junk.code, 3);
  EXPECT_EQ(nlohmann::json::parse(junk.err).at("error").get<std::string>(), "bad_magic");
}

TEST_F(Pipeline, DatagenIsByteIdentical) {
  ASSERT_EQ(run("datagen --out " + tmp("data2") + " --count 4 --seed 3 --shape 4,16,16").code, 0);
  for (const auto& e : fs::directory_iterator(tmp("data"))) {
    EXPECT_EQ(io::read_file(e.path().string()), io::read_file((fs::path(tmp("data2")) / e.path().filename()).string()))
        << e.path();
  }
  EXPECT_TRUE(fs::exists(tmp("data/config.json")));
  EXPECT_EQ(io::read_file(tmp("data/clip_00000.txt")).back(), '\n');
}

TEST_F(Pipeline, TrainingIsIdempotentAndEchoesConfig) {
  ASSERT_EQ(run("train-tokenizer --config " + tmp("tiny.json") + " --data " + tmp("data") + " --out " + tmp("tok2.ckpt")).code, 0);
  EXPECT_EQ(io::read_file(tmp("tok.ckpt")), io::read_file(tmp("tok2.ckpt")));
  EXPECT_EQ(io::read_file(tmp("tok.ckpt.log.jsonl")), io::read_file(tmp("tok2.ckpt.log.jsonl")));
  const auto echoed = parse_run_config(io::read_file(tmp("tok.ckpt.config.json")));
  EXPECT_EQ(to_json(echoed), to_json(parse_run_config(kTinyConfig)));
  const auto log = io::read_file(tmp("gen.ckpt.log.jsonl"));
  const auto header = nlohmann::json::parse(log.substr(0, log.find('\n')));
  EXPECT_EQ(header.at("command").get<std::string>(), "train-generator");
  EXPECT_TRUE(header.contains("config"));
}

TEST_F(Pipeline, EncodeDecodeMatchesInProcess) {
  const std::string clip = tmp("data/clip_00001.htvv");
  ASSERT_EQ(run("encode --ckpt " + tmp("tok.ckpt") + " --video " + clip + " --out " + tmp("c.htvt") + " --mask none").code, 0);
  ASSERT_EQ(run("decode --ckpt " + tmp("tok.ckpt") + " --tokens " + tmp("c.htvt") + " --out " + tmp("c.htvv")).code, 0);

  const auto cfg = parse_run_config(io::read_file(tmp("tok.ckpt.config.json")));
  HierVae<float> vae(cfg.hierarchy, 0);
  htck::load(vae.params(), tmp("tok.ckpt"));
  const auto v = htvv::read(clip);
  const auto lat = vae.encode(v);
  EXPECT_EQ(htvt::read(tmp("c.htvt")), lat.tokens(cfg.hierarchy));
  EXPECT_EQ(io::read_file(tmp("c.htvv")), htvv::encode(vae.decode(lat)));
}

TEST_F(Pipeline, MaskedEncodeStoresMask) {
  const std::string clip = tmp("data/clip_00002.htvv");
  ASSERT_EQ(run("encode --ckpt " + tmp("tok.ckpt") + " --video " + clip + " --out " + tmp("m.htvt") +
                " --mask repeat --mask-cap 0.85 --mask-seed 4")
                .code,
            0);
  const auto s = htvt::read(tmp("m.htvt"));
  ASSERT_TRUE(s.layers[0].masked());
  EXPECT_EQ(s.layers[0].strategy, MaskStrategy::kRepeatPrev);
  const auto plane = s.layers[0].shape.h * s.layers[0].shape.w;
  for (std::size_t i = 0; i < plane; ++i) EXPECT_EQ(s.layers[0].mask[i], 0);
  ASSERT_EQ(run("decode --ckpt " + tmp("tok.ckpt") + " --tokens " + tmp("m.htvt") + " --out " + tmp("m.htvv")).code, 0);
  EXPECT_EQ(run("encode --ckpt " + tmp("tok.ckpt") + " --video " + clip + " --out " + tmp("n.htvt") + " --mask-cap 0").code, 2);
}

TEST_F(Pipeline, GenerateDefaultsAndDeterminism) {
  const std::string base = "generate --gen " + tmp("gen.ckpt") + " --tokenizer " + tmp("tok.ckpt") +
                           " --caption 'a red square moves right' --seed 5 --out ";
  ASSERT_EQ(run(base + tmp("g1.htvv")).code, 0);
  ASSERT_EQ(run(base + tmp("g2.htvv")).code, 0);
  EXPECT_EQ(io::read_file(tmp("g1.htvv")), io::read_file(tmp("g2.htvv")));
  const auto echo = nlohmann::json::parse(io::read_file(tmp("g1.htvv.config.json")));
  EXPECT_DOUBLE_EQ(echo.at("sampling").at("cfg_scale").get<double>(), 7.5);
  EXPECT_EQ(echo.at("caption").get<std::string>(), "a red square moves right");
  EXPECT_EQ(run(base + tmp("g3.htvv") + " --temp 0").code, 2);
}

TEST_F(Pipeline, EvalAndExport) {
  const auto r = run("eval --ref " + tmp("data/clip_00000.htvv") + " --out " + tmp("data/clip_00000.htvv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_DOUBLE_EQ(nlohmann::json::parse(r.out).at("psnr_db").get<double>(), 99.0);
  ASSERT_EQ(run("export-frames --video " + tmp("data/clip_00000.htvv") + " --out " + tmp("frames")).code, 0);
  EXPECT_TRUE(fs::exists(tmp("frames/frame_0003.ppm")));
}

TEST_F(Pipeline, DivergentTrainingExitsNumeric) {
  auto hot = nlohmann::json::parse(kTinyConfig);
  hot.merge_patch({{"tokenizer_train", {{"lr", 1e30}, {"steps", 20}}}});
  io::write_file(tmp("hot.json"), hot.dump());
  const auto r = run("train-tokenizer --config " + tmp("hot.json") + " --data " + tmp("data") + " --out " + tmp("hot.ckpt"));
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.err).at("error").get<std::string>(), "numeric");
}

TEST_F(Pipeline, ThreadEnvValidated) {
  EXPECT_EQ(run("stats --config " + src("configs/desk.json")).code, 0);
  ::setenv("HITOK_THREADS", "zero", 1);
  EXPECT_EQ(run("stats --config " + src("configs/desk.json")).code, 2);
  ::unsetenv("HITOK_THREADS");
}

}  // namespace
}  // namespace hitok
