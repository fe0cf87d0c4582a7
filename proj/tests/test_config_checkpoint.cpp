#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "mmtts/checkpoint.hpp"
#include "mmtts/config.hpp"
#include "mmtts/errors.hpp"
#include "support/fixtures.hpp"

using namespace mmtts;

TEST_CASE("defaults validate and match the reference tables") {
  ModelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.style_dim == 256);
  CHECK(cfg.adapter_hidden == 256);
  CHECK(cfg.sse_gru_layers == 3);
  CHECK(cfg.sse_conv_kernel == 5);
  CHECK(cfg.sse_attention_heads == 1);
  CHECK(cfg.phoneme_embed_dim == 192);
  CHECK(cfg.enc_layers == 4);
  CHECK(cfg.dec_layers == 4);
  CHECK(cfg.enc_hidden == 256);
  CHECK(cfg.enc_conv_kernel == 9);
  CHECK(cfg.enc_conv_filter == 1024);
  CHECK(cfg.enc_heads == 2);
  CHECK(cfg.dropout == doctest::Approx(0.1));
  CHECK(cfg.var_conv_kernel == 3);
  CHECK(cfg.var_conv_filter == 256);
  CHECK(cfg.var_dropout == doctest::Approx(0.5));
  CHECK(cfg.kp_conv_kernel == 3);
  CHECK(cfg.kp_filter == 16);
  CHECK(cfg.saconv_kernel == 3);
  CHECK(cfg.reflow_residual_layers == 20);
  CHECK(cfg.reflow_residual_channels == 256);
  CHECK(cfg.reflow_conv_kernel == 3);
  CHECK(cfg.reflow_conv_filter == 512);
  CHECK(cfg.reflow_step_embed_dim == 256);
  CHECK(cfg.sample_rate == 16000);
  CHECK(cfg.n_mels == 80);
  CHECK(cfg.stage1_iters == 200000);
  CHECK(cfg.sampler == "rk45");
}

TEST_CASE("config round-trips through text") {
  ModelConfig cfg = mmtts::testing::tiny_config();
  cfg.sampler = "euler";
  cfg.euler_steps = 7;
  cfg.lr_stage1 = 3.5e-4;
  cfg.speech_prompt_only = true;
  std::string text = serialize_config(cfg);
  ModelConfig back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.style_dim == cfg.style_dim);
  CHECK(back.euler_steps == 7);
  CHECK(back.lr_stage1 == doctest::Approx(3.5e-4));
  CHECK(back.speech_prompt_only);
  CHECK(back.sampler == "euler");
}

TEST_CASE("config parse rejects junk") {
  CHECK_THROWS_AS(parse_config("style_dim 256"), ConfigError);
  CHECK_THROWS_AS(parse_config("no_such_key=1"), ConfigError);
  CHECK_THROWS_AS(parse_config("style_dim=abc"), ConfigError);
}

TEST_CASE("validate rejects inconsistent settings") {
  ModelConfig cfg;
  cfg.enc_heads = 3;  // does not divide 256
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = ModelConfig{};
  cfg.style_dim = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = ModelConfig{};
  cfg.reflow_conv_filter = 100;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = ModelConfig{};
  cfg.sampler = "leapfrog";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = ModelConfig{};
  cfg.enc_conv_kernel = 8;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("MMTTS_SEED overrides the configured seed") {
  ModelConfig cfg;
  cfg.seed = 1;
  setenv("MMTTS_SEED", "424242", 1);
  apply_env_overrides(cfg);
  CHECK(cfg.seed == 424242u);
  unsetenv("MMTTS_SEED");
  apply_env_overrides(cfg);
  CHECK(cfg.seed == 424242u);
}

TEST_CASE("checkpoint round-trips tensors and config text") {
  std::string dir = mmtts::testing::temp_dir("ckpt");
  Checkpoint ck;
  ck.config_text = serialize_config(ModelConfig{});
  Tensor a = Tensor::zeros({3});
  for (int i = 0; i < 3; ++i) a.at(i) = 0.5 * i - 1.0;
  Tensor b = Tensor::zeros({2, 4});
  for (int i = 0; i < 8; ++i) b.data()[i] = i * 1e-3;
  Tensor c = Tensor::zeros({2, 3, 5});
  for (int i = 0; i < 30; ++i) c.data()[i] = -i;
  ck.tensors = {{"alpha", a}, {"beta", b}, {"gamma", c}};

  std::string path = dir + "/m.ckpt";
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.config_text == ck.config_text);
  REQUIRE(back.tensors.size() == 3);
  CHECK(back.tensors.at("beta").same_shape(b));
  for (int i = 0; i < 8; ++i)
    CHECK(back.tensors.at("beta").data()[i] == b.data()[i]);
  for (int i = 0; i < 30; ++i)
    CHECK(back.tensors.at("gamma").data()[i] == c.data()[i]);

  // Deterministic bytes: saving the same content twice gives equal files.
  std::string path2 = dir + "/m2.ckpt";
  save_checkpoint(path2, back);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("checkpoint load rejects bad files") {
  std::string dir = mmtts::testing::temp_dir("ckpt_bad");
  CHECK_THROWS_AS(load_checkpoint(dir + "/missing.ckpt"), IoError);

  std::string junk = dir + "/junk.ckpt";
  {
    std::ofstream out(junk, std::ios::binary);
    out << "noise";
  }
  CHECK_THROWS_AS(load_checkpoint(junk), IoError);

  Checkpoint ck;
  ck.tensors = {{"w", Tensor::zeros({4, 4})}};
  std::string good = dir + "/good.ckpt";
  save_checkpoint(good, ck);
  std::ifstream in(good, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string cut = dir + "/cut.ckpt";
  {
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(cut), IoError);
}
