#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "patchdenoise/checkpoint.hpp"
#include "patchdenoise/cli.hpp"
#include "patchdenoise/error.hpp"
#include "support.hpp"

using namespace patchdenoise;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

// A 2-patient, 2-slice, 32x32 dataset under dir/data.
fs::path tiny_dataset(const pdtest::TempDir& dir) {
  const auto data = dir / "data";
  const auto r = run_cli({"--seed", "5", "--out", data.string(), "synth", "--patients", "2",
                          "--slices", "2", "--size", "32"});
  EXPECT_EQ(r.code, 0) << r.err;
  return data;
}

std::size_t csv_lines(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST(RunConfigTest, JsonRoundTripAndSeedPropagation) {
  cli::RunConfig c;
  c.seed = 42;
  c.folds = 3;
  c.fold_selection = {0, 2};
  c.train.epochs = 7;
  c.synth.photon_count = 250;
  c.apply_seed();
  const auto back = cli::run_config_from_json(cli::to_json(c));
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.train, c.train);
  EXPECT_EQ(back.folds, 3u);
  EXPECT_EQ(back.fold_selection, c.fold_selection);
  EXPECT_EQ(back.synth.photon_count, 250.0);
  EXPECT_EQ(back.model.seed, 42u);
  EXPECT_EQ(back.train.seed, 42u);
  EXPECT_EQ(back.synth.seed, 42u);
}

TEST(RunConfigTest, StrictParsing) {
  EXPECT_THROW(cli::run_config_from_json(json{{"sed", 1}}), ConfigError);
  EXPECT_THROW(cli::run_config_from_json(json{{"folds", -2}}), ConfigError);
  EXPECT_THROW(cli::run_config_from_json(json{{"folds", "four"}}), ConfigError);
  EXPECT_THROW(cli::run_config_from_json(json{{"model", {{"seed", 3}}}}), ConfigError);
  EXPECT_THROW(cli::run_config_from_json(json{{"train", {{"seed", 3}}}}), ConfigError);
  EXPECT_THROW(cli::run_config_from_json(json{{"synth", {{"colour", 1}}}}), ConfigError);
  EXPECT_THROW(cli::run_config_from_json(json{{"model", {{"fusion_mode", "sum"}}}}), ConfigError);
  cli::RunConfig c;
  c.folds = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c.folds = 3;
  c.fold_selection = {3};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfigTest, PartialSectionsOverrideDeskDefaults) {
  const cli::RunConfig defaults;
  EXPECT_EQ(defaults.model, ModelConfig::toy());
  EXPECT_EQ(defaults.train, TrainConfig::desk());
  const auto c = cli::run_config_from_json(json{{"train", {{"epochs", 7}}}});
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.train.eta0, TrainConfig::desk().eta0);
  EXPECT_EQ(c.train.eta_min, TrainConfig::desk().eta_min);
  const auto m = cli::run_config_from_json(json{{"model", {{"pcm_channels", 5}}}});
  EXPECT_EQ(m.model.pcm_channels, 5u);
  EXPECT_EQ(m.model.scales, ModelConfig::toy().scales);
}

TEST(AblationArms, DivisorsAndFusionOnly) {
  const auto base = ModelConfig::toy();
  const auto arms = cli::ablation_arms(base);
  ASSERT_EQ(arms.size(), 3u);
  EXPECT_EQ(arms[0].model.divisors(), (std::vector<std::size_t>{16, 8, 1}));
  EXPECT_EQ(arms[1].model.divisors(), (std::vector<std::size_t>{32, 16, 2}));
  EXPECT_EQ(arms[2].model.divisors(), (std::vector<std::size_t>{16, 8, 1}));
  EXPECT_EQ(arms[0].model.fusion_mode, FusionMode::gated);
  EXPECT_EQ(arms[2].model.fusion_mode, FusionMode::concat);
  const auto gated = count_params_by_module(arms[0].model);
  const auto concat = count_params_by_module(arms[2].model);
  EXPECT_EQ(gated.pfe, concat.pfe);
  EXPECT_EQ(gated.pcm, concat.pcm);
  EXPECT_NE(gated.pfm, concat.pfm);
  EXPECT_EQ(count_params(arms[0].model), count_params(arms[1].model));
}

TEST(Cli, ShowConfigPrintsEffectiveDefaults) {
  const auto r = run_cli({"--seed", "9", "show-config"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto c = cli::run_config_from_json(json::parse(r.out));
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.model, [] {
    auto m = ModelConfig::toy();
    m.seed = 9;
    return m;
  }());
}

TEST(Cli, ConfigFileIsAppliedAndValidated) {
  pdtest::TempDir dir("cli_cfg");
  write_text(dir / "ok.json", R"({"folds": 3, "train": {"epochs": 5}})");
  const auto r = run_cli({"--config", (dir / "ok.json").string(), "show-config"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["folds"], 3);
  EXPECT_EQ(j["train"]["epochs"], 5);

  write_text(dir / "bad.json", R"({"folds": 3, "colour": "red"})");
  const auto bad = run_cli({"--config", (dir / "bad.json").string(), "show-config"});
  EXPECT_EQ(bad.code, cli::kExitUsage);
  EXPECT_NE(bad.err.find("colour"), std::string::npos) << bad.err;

  write_text(dir / "broken.json", "{");
  EXPECT_EQ(run_cli({"--config", (dir / "broken.json").string(), "show-config"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"--config", (dir / "missing.json").string(), "show-config"}).code,
            cli::kExitUsage);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"synth", "--patients", "x"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"synth", "--size", "16"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--folds", "1"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"denoise", "--input", "a.raw"}).code, cli::kExitUsage);
}

TEST(Cli, DataErrorsExitThree) {
  pdtest::TempDir dir("cli_data");
  EXPECT_EQ(run_cli({"train", "--data", (dir / "nowhere").string()}).code, cli::kExitData);
  fs::create_directories(dir / "empty");
  EXPECT_EQ(run_cli({"eval", "--data", (dir / "empty").string()}).code, cli::kExitData);
  write_text(dir / "bad.ckpt", "not a checkpoint");
  EXPECT_EQ(run_cli({"denoise", "--checkpoint", (dir / "bad.ckpt").string(), "--input",
                     (dir / "x.csv").string(), "--output", (dir / "y.png").string()})
                .code,
            cli::kExitData);
}

TEST(Cli, SynthWritesRequestedLayout) {
  pdtest::TempDir dir("cli_synth");
  const auto data = tiny_dataset(dir);
  EXPECT_TRUE(fs::exists(data / "patient_00/low/0000.raw"));
  EXPECT_TRUE(fs::exists(data / "patient_01/full/0001.meta"));
  EXPECT_EQ(scan_dataset(data).pairs.size(), 4u);
}

TEST(Cli, TrainEvalDenoiseWorkflow) {
  pdtest::TempDir dir("cli_flow");
  const auto data = tiny_dataset(dir);
  const auto runs = dir / "runs";
  const auto t = run_cli({"--seed", "5", "--out", runs.string(), "train", "--data", data.string(),
                          "--folds", "2", "--fold", "1", "--epochs", "2"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(runs / "run_config.json"));
  EXPECT_FALSE(fs::exists(runs / "fold_0"));
  const auto ckpt = runs / "fold_1/model.ckpt";
  ASSERT_TRUE(fs::exists(ckpt));
  EXPECT_EQ(load_checkpoint(ckpt).config().seed, 5u);
  EXPECT_EQ(csv_lines(runs / "fold_1/trace.csv"), 3u);
  EXPECT_EQ(csv_lines(runs / "summary.csv"), 4u);
  const auto saved = cli::load_run_config(runs / "run_config.json");
  EXPECT_EQ(saved.train.epochs, 2u);
  EXPECT_EQ(saved.fold_selection, (std::vector<std::size_t>{1}));

  const auto ev = dir / "eval";
  const auto e = run_cli({"--seed", "5", "--out", ev.string(), "eval", "--checkpoint",
                          ckpt.string(), "--data", data.string(), "--folds", "2", "--fold", "1"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(csv_lines(ev / "eval.csv"), 5u);
  const auto report = json::parse(slurp(ev / "eval.json"));
  EXPECT_EQ(report["method"], "model");
  EXPECT_EQ(report["slices"].size(), 2u);
  EXPECT_EQ(report["complexity"]["energy_unit"], "GFlops/Watt");
  EXPECT_DOUBLE_EQ(report["complexity"]["energy_per_inference"].get<double>(),
                   report["complexity"]["gflops"].get<double>() / 20.0);
  EXPECT_EQ(std::distance(fs::directory_iterator(ev / "diff"), fs::directory_iterator{}), 2);

  const auto low = data / "patient_00/low/0000.raw";
  const auto d = run_cli({"denoise", "--checkpoint", ckpt.string(), "--input", low.string(),
                          "--output", (dir / "out.csv").string(), "--hu-csv",
                          (dir / "hu.csv").string()});
  ASSERT_EQ(d.code, 0) << d.err;
  const auto out = import_csv(dir / "out.csv");
  EXPECT_EQ(out.height, 32u);
  const auto hu = import_csv(dir / "hu.csv", RangeTag::hounsfield);
  for (std::size_t i = 0; i < out.size(); ++i)
    ASSERT_NEAR(hu.values[i], -160.0 + 400.0 * out.values[i], 1e-9);
}

TEST(Cli, BaselineAndIdentityEvaluation) {
  pdtest::TempDir dir("cli_base");
  const auto data = tiny_dataset(dir);
  const auto b = run_cli({"--out", (dir / "nlm").string(), "eval", "--baseline", "nlm", "--data",
                          data.string(), "--no-diff"});
  ASSERT_EQ(b.code, 0) << b.err;
  const auto report = json::parse(slurp(dir / "nlm/eval.json"));
  EXPECT_EQ(report["method"], "nlm");
  EXPECT_TRUE(report["complexity"].is_null());
  EXPECT_EQ(report["slices"].size(), 4u);
  EXPECT_FALSE(fs::exists(dir / "nlm/diff"));

  const auto clean = data / "patient_00/full/0000.raw";
  const auto same = run_cli({"--out", (dir / "id").string(), "eval", "--input", clean.string(),
                             "--reference", clean.string()});
  ASSERT_EQ(same.code, 0) << same.err;
  EXPECT_NE(same.out.find("PSNR inf"), std::string::npos) << same.out;
  EXPECT_EQ(json::parse(slurp(dir / "id/eval.json"))["aggregate"]["psnr_mean"], "inf");

  EXPECT_EQ(run_cli({"eval", "--input", clean.string()}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"denoise", "--baseline", "bm3d", "--input", clean.string(), "--output",
                     (dir / "x.png").string()})
                .code,
            cli::kExitUsage);
}

TEST(Cli, AblateReportsThreeArms) {
  pdtest::TempDir dir("cli_ablate");
  const auto data = tiny_dataset(dir);
  const auto out = dir / "ablate";
  const auto r = run_cli({"--out", out.string(), "ablate", "--data", data.string(), "--folds", "2",
                          "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = json::parse(slurp(out / "ablation.json"));
  ASSERT_EQ(report["arms"].size(), 3u);
  EXPECT_EQ(csv_lines(out / "ablation.csv"), 4u);
  for (const char* arm : {"baseline_16_8_1_gated", "small_32_16_2_gated", "concat_16_8_1"})
    EXPECT_TRUE(fs::exists(out / arm / "trace.csv")) << arm;
}

TEST(Cli, DivergenceExitsFour) {
  pdtest::TempDir dir("cli_div");
  const auto data = tiny_dataset(dir);
  write_text(dir / "hot.json", R"({"train": {"eta0": 1e30, "eta_min": 1e29}})");
  const auto r = run_cli({"--config", (dir / "hot.json").string(), "--out", (dir / "r").string(),
                          "train", "--data", data.string(), "--folds", "2", "--fold", "0",
                          "--epochs", "3"});
  EXPECT_EQ(r.code, cli::kExitDiverged) << r.out << r.err;
  EXPECT_NE(r.err.find("epoch"), std::string::npos) << r.err;
}
