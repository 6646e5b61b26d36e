#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "trajloom/cli.hpp"
#include "trajloom/config.hpp"
#include "trajloom/io.hpp"
#include "trajloom/motionlab.hpp"

using namespace trajloom;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("trajloom_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "trajloom");
    return dispatch(args);
  }

  // Runs and returns stdout.
  std::string run_capture(std::vector<std::string> args, int expect = 0) {
    ::testing::internal::CaptureStdout();
    const int code = run(std::move(args));
    const std::string out = ::testing::internal::GetCapturedStdout();
    EXPECT_EQ(code, expect) << out;
    return out;
  }

  void write_text(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  fs::path dir_;
};

TlfFile sample_tlf(std::uint64_t seed) {
  Rng rng(seed);
  MotionSpec m = random_motion(rng, {32, 32, 4}, 5);
  m.occlusions.push_back({0, 0, 10, 10, 1, 3});
  return tlf_from_tracks(generate(m, rng));
}

}  // namespace

TEST(Tlf, EncodeDecodeRoundTrip) {
  const TlfFile f = sample_tlf(1);
  const TlfFile g = decode_tlf(encode_tlf(f));
  EXPECT_EQ(g.height, 32);
  EXPECT_EQ(g.width, 32);
  EXPECT_EQ(g.stride, 4);
  EXPECT_EQ(g.convention, CoordConvention::absolute_pixel);
  EXPECT_EQ(g.data, f.data);
  EXPECT_FALSE(g.dense());
}

TEST(Tlf, CorruptInputsAreFormatErrors) {
  std::vector<char> bytes = encode_tlf(sample_tlf(2));
  std::vector<char> bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_tlf(bad), FormatError);
  bad = bytes;
  bad.resize(bytes.size() - 3);
  EXPECT_THROW(decode_tlf(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_tlf(bad), FormatError);
}

TEST(Checkpoint, RoundTripKeepsNamesValuesAndMeta) {
  Rng rng(3);
  Checkpoint c;
  c.meta["kind"] = "vae";
  c.meta["config_hash"] = "0123456789abcdef";
  c.params.add("enc.w", rng.draw_normal(3, 4));
  c.params.add("enc.b", Mat::Constant(1, 4, 1.0 / 3.0));
  const Checkpoint d = decode_checkpoint(encode_checkpoint(c));
  EXPECT_EQ(d.meta, c.meta);
  EXPECT_EQ(d.params, c.params);
  std::vector<char> bytes = encode_checkpoint(c);
  bytes[1] = 'Z';
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

TEST(FormatNumber, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 5e-5, -2.5, 1e300, 0.0}) EXPECT_EQ(std::stod(format_number(v)), v);
  EXPECT_EQ(format_number(0.1), "0.1");
}

TEST(Config, DefaultsMatchPublishedHyperparameters) {
  RunConfig c;
  c.resolve();
  EXPECT_EQ(c.vae_train.loss.beta_kl, 5e-5);
  EXPECT_EQ(c.vae_train.loss.lambda_temporal, 0.1);
  EXPECT_EQ(c.vae_train.loss.lambda_spatial, 0.2);
  EXPECT_EQ(c.vae_train.loss.neighbors.hops, (std::vector<int>{1, 2, 4}));
  EXPECT_EQ(c.vae_train.loss.neighbors.weights, (std::vector<double>{1.0, 0.5, 0.25}));
  EXPECT_EQ(c.vae_train.optim.lr, 2e-5);
  EXPECT_EQ(c.flow.optim.lr, 6e-5);
  EXPECT_EQ(c.finetune.flow.optim.lr, 1e-5);
  EXPECT_EQ(c.flow.tube_sigma, 0.05);
  EXPECT_EQ(c.flow.anchor_sigma, 0.1);
  EXPECT_EQ(c.finetune.flow.anchor_sigma, 0.1);
  EXPECT_EQ(c.finetune.rollout_steps, 8);
  EXPECT_EQ(c.finetune.w1, 1.0);
  EXPECT_EQ(c.finetune.w0, 0.5);
  EXPECT_EQ(c.finetune.gamma, 0.1);
  EXPECT_EQ(c.finetune.lambda_kstep, 0.1);
  EXPECT_EQ(c.finetune.denom_clamp, 1e-3);
  EXPECT_EQ(c.invisible_weight, 0.01);
  EXPECT_EQ(c.vae.ratio, 4);
  EXPECT_EQ(c.flow.time.uniform_prob, 0.2);
  EXPECT_EQ(c.flow.time.uniform_max, 0.1);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParseDumpRoundTripAndStableHash) {
  const RunConfig c = parse_config("[run]\nseed = 5\n[vae]\nlr = 0.001\n[data]\nkinds = translation,zoom\n");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.vae_train.optim.lr, 1e-3);
  EXPECT_EQ(c.data.kinds, (std::vector<MotionKind>{MotionKind::translation, MotionKind::zoom}));
  const std::string dump = dump_config(c);
  EXPECT_EQ(dump_config(parse_config(dump)), dump);
  EXPECT_EQ(config_hash(parse_config(dump)), config_hash(c));
  EXPECT_NE(config_hash(c), config_hash(RunConfig{}));
}

TEST(Config, UnknownKeysAndBadValuesAreConfigErrors) {
  EXPECT_THROW(parse_config("[vae]\nlrr = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[nosuch]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[vae]\nlr = fast\n"), ConfigError);
  EXPECT_THROW(parse_config("[data]\nkinds = wobble\n"), ConfigError);
}

TEST_F(CliTest, ExitCodesByErrorKind) {
  write_text("bad.tlf", "not a trajectory file");
  EXPECT_EQ(run({"eval", "--out", path("o"), "--metric", "flowtv", path("bad.tlf")}), exit_format);
  write_text("bad.ini", "[vae]\nunknown_key = 1\n");
  EXPECT_EQ(run({"synth", "--config", path("bad.ini"), "--out", path("o")}), exit_config);
  TlfFile dark = sample_tlf(4);
  dark.data.mask.setZero();
  write_tlf(path("dark.tlf"), dark);
  EXPECT_EQ(run({"eval", "--out", path("o"), "--metric", "flowtv", path("dark.tlf")}), exit_numerical);
  EXPECT_EQ(run({"eval", "--out", path("o"), "--metric", "nosuch", path("dark.tlf")}), exit_config);
  EXPECT_EQ(run({"nosuch-command"}), exit_failure);
}

TEST_F(CliTest, SynthMatchesGeneratorOracle) {
  run_capture({"synth", "--out", path("o"), "--kind", "translation", "--vx", "2", "--vy", "-1", "--frames", "4",
               "--height", "32", "--width", "32", "--stride", "4", path("t.tlf")});
  const TlfFile f = read_tlf(path("t.tlf"));
  EXPECT_EQ(f.convention, CoordConvention::absolute_pixel);
  EXPECT_EQ(f.data.frames, 4);
  for (int t = 0; t < 4; ++t)
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        const Index r = f.data.index(t, i, j);
        const double x = 4 * j + 1.5 + 2 * t, y = 4 * i + 1.5 - t;
        EXPECT_EQ(f.data.coords(r, 0), static_cast<float>(x));
        EXPECT_EQ(f.data.coords(r, 1), static_cast<float>(y));
        EXPECT_EQ(f.data.mask[r], x < 31.5 && y >= -0.5 ? 1 : 0);
      }
  EXPECT_TRUE(fs::exists(path("o/synth.manifest.json")));
}

TEST_F(CliTest, OffsetsRoundTripIsBitIdentical) {
  run_capture({"synth", "--out", path("o"), "--kind", "rotation", "--omega", "0.05", "--frames", "5", "--occlude",
               "0,0,12,12,1,2", path("s.tlf")});
  run_capture({"rasterize", "--out", path("o"), path("s.tlf"), path("d.tlf")});
  run_capture({"offsets", "--out", path("o"), path("d.tlf"), path("x.tlf")});
  run_capture({"offsets", "--out", path("o"), "--invert", path("x.tlf"), path("back.tlf")});
  EXPECT_EQ(read_tlf(path("x.tlf")).convention, CoordConvention::offset);
  EXPECT_EQ(read_bytes(path("back.tlf")), read_bytes(path("d.tlf")));
  // Offsets of sparse tracks are refused.
  EXPECT_EQ(run({"offsets", "--out", path("o"), path("s.tlf"), path("y.tlf")}), exit_format);
}

TEST_F(CliTest, EvalFlowTvOfTranslationIsZero) {
  run_capture({"synth", "--out", path("o"), "--kind", "translation", "--vx", "1", "--frames", "4", path("t.tlf")});
  EXPECT_EQ(run_capture({"eval", "--out", path("o"), "--metric", "flowtv", path("t.tlf")}), "0.0\n");
  const CsvTable m = read_csv(path("o/eval_metrics.csv"));
  EXPECT_EQ(m.header, (std::vector<std::string>{"metric", "value"}));
  ASSERT_EQ(m.rows.size(), 1u);
  EXPECT_EQ(m.rows[0][0], "flowtv");
}

TEST_F(CliTest, CamcapCaptionsATranslation) {
  run_capture({"synth", "--out", path("o"), "--kind", "translation", "--vx", "5", "--frames", "6", "--height", "128",
               "--width", "128", "--stride", "8", path("t.tlf")});
  EXPECT_EQ(run_capture({"camcap", "--out", path("o"), path("t.tlf")}), "camera pans right, fast\n");
  EXPECT_TRUE(fs::exists(path("o/camcap.csv")));
}

TEST_F(CliTest, PlotSummaries) {
  fs::create_directories(path("empty"));
  run_capture({"plot", "--out", path("p0"), path("empty")});
  EXPECT_EQ(read_csv(path("p0/summary.csv")).header, (std::vector<std::string>{"run", "metric", "value"}));
  EXPECT_TRUE(read_csv(path("p0/summary.csv")).rows.empty());

  run_capture({"synth", "--out", path("a"), "--kind", "translation", "--vx", "1", "--frames", "4", path("t.tlf")});
  run_capture({"synth", "--out", path("b"), "--kind", "zoom", "--zoom", "0.02", "--frames", "4", path("z.tlf")});
  run_capture({"eval", "--out", path("a"), "--metric", "flowtv", path("t.tlf")});
  run_capture({"eval", "--out", path("a"), "--metric", "divcurl", path("t.tlf")});
  run_capture({"eval", "--out", path("b"), "--metric", "flowtv", path("z.tlf")});
  run_capture({"plot", "--out", path("p1"), path("a"), path("b")});
  const CsvTable s = read_csv(path("p1/summary.csv"));
  ASSERT_EQ(s.rows.size(), 3u);
  EXPECT_EQ(s.rows[0][0], "a");
  EXPECT_EQ(s.rows[2][0], "b");
  EXPECT_EQ(run({"plot", "--out", path("p2"), path("missing")}), exit_failure);
}

TEST_F(CliTest, OutputDirectoryFallsBackToEnvironment) {
  const std::string env = path("from_env");
  ::setenv("TRAJLOOM_OUT", env.c_str(), 1);
  run_capture({"synth", "--kind", "static", "--frames", "3"});
  ::unsetenv("TRAJLOOM_OUT");
  EXPECT_TRUE(fs::exists(fs::path(env) / "synth.tlf"));
  EXPECT_TRUE(fs::exists(fs::path(env) / "synth.manifest.json"));
}

TEST_F(CliTest, GradcheckCommandPasses) {
  const std::string out = run_capture({"gradcheck", "--out", path("g"), "--seeds", "2"});
  EXPECT_TRUE(fs::exists(path("g/gradcheck.csv")));
  EXPECT_FALSE(out.empty());
}
