#include <gtest/gtest.h>

#include <cstdlib>
#include <map>

#include "aaa/cli/cli.hpp"

using namespace aaa;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "aaa-growth");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> snapshot_dir(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return files;
}

// Tiny cohort, fitted fields and a briefly trained model shared by all tests.
class CliPipeline : public ::testing::Test {
 protected:
  static fs::path root;

  static void SetUpTestSuite() {
    unsetenv("GROWTH_SEED");
    root = fs::temp_directory_path() / "aaa_cli_test";
    fs::remove_all(root);
    fs::create_directories(root);
    io::write_json(root / "cohort.json", {{"seed", 3}, {"train", 2}, {"holdout", 1}, {"edge_length", 6.0},
                                          {"threshold_case", true}});
    io::write_json(root / "fit.json", {{"field", {{"hidden_layers", 1}, {"width", 16}, {"steps_per_year", 4}}},
                                       {"epochs", 15},
                                       {"sample_points", 64}});
    io::write_json(root / "train.json", {{"epochs", 2}, {"learning_rate", 3e-3}, {"model", {{"channels", 8}}}});
    ASSERT_EQ(invoke({"synth", "--spec", p("cohort.json"), "--out", p("data")}).code, 0);
    ASSERT_EQ(invoke({"fit-field", "--data", p("data/manifest.json"), "--config", p("fit.json"), "--out", p("fields")}).code,
              0);
    ASSERT_EQ(invoke({"train", "--data", p("fields/manifest.json"), "--config", p("train.json"), "--out", p("m.ckpt")}).code,
              0);
  }

  static std::string p(const std::string& rel) { return (root / rel).string(); }
};

fs::path CliPipeline::root;

}  // namespace

TEST(Cli, UnknownFlagPrintsUsage) {
  const auto r = invoke({"eval", "--data", "x.json", "--out", "o", "--bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  const auto body = r.err.substr(0, r.err.size() - 1);
  const auto last = body.substr(body.rfind('\n') + 1);
  EXPECT_EQ(json::parse(last)["error"]["code"], 2);
}

TEST(Cli, MissingSubcommandAndHelp) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  const auto h = invoke({"--help"});
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("threshold"), std::string::npos);
}

TEST(Cli, MissingInputIsDataError) {
  const auto r = invoke({"eval", "--data", "/nonexistent/manifest.json", "--out", "/tmp/aaa_unused"});
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(json::parse(r.err)["error"]["type"], "data_error");
}

TEST_F(CliPipeline, SynthOutputsAndSplit) {
  const auto m = io::read_manifest(root / "data/manifest.json");
  EXPECT_EQ(m.patients.size(), 4u);  // two train, one holdout, threshold case
  EXPECT_EQ(m.train, (std::vector<std::string>{"T000", "T001"}));
  EXPECT_EQ(m.holdout, (std::vector<std::string>{"H000"}));
  EXPECT_TRUE(fs::exists(root / "data/H000/manifest.json"));
  EXPECT_TRUE(fs::exists(root / "data/H000/spec.json"));
  const auto report = json::parse(slurp(root / "data/synth_report.json"));
  EXPECT_EQ(report["provenance"]["seed"], 3);
  EXPECT_EQ(report["provenance"]["config_hash"].get<std::string>().size(), 16u);
}

TEST_F(CliPipeline, PlyIsByteStableAndRereadable) {
  const auto path = root / "data/T000/t1.ply";
  const auto data = surface::read_ply(path.string());
  std::ostringstream again;
  surface::write_ply(again, data.mesh, data.features, surface::PlyFormat::binary);
  EXPECT_EQ(again.str(), slurp(path));
  EXPECT_EQ(data.features.size(), 7u);
}

TEST_F(CliPipeline, SynthIsDeterministicAndSeedOverridable) {
  const auto first = snapshot_dir(root / "data");
  const fs::path dir = root / "synth_again";
  ASSERT_EQ(invoke({"synth", "--spec", p("cohort.json"), "--out", dir.string()}).code, 0);
  auto again = snapshot_dir(dir);
  auto strip_path = [](std::map<std::string, std::string> m) {
    m.erase("synth_report.json");  // names the output directory
    return m;
  };
  EXPECT_EQ(strip_path(first), strip_path(again));

  setenv("GROWTH_SEED", "11", 1);
  const fs::path other = root / "synth_seeded";
  const auto r = invoke({"synth", "--spec", p("cohort.json"), "--out", other.string()});
  unsetenv("GROWTH_SEED");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(json::parse(r.out)["provenance"]["seed"], 11);
  EXPECT_NE(slurp(other / "T000/t1.ply"), slurp(root / "data/T000/t1.ply"));
}

TEST_F(CliPipeline, BadSeedEnvironment) {
  setenv("GROWTH_SEED", "12x", 1);
  const auto r = invoke({"synth", "--spec", p("cohort.json"), "--out", p("never")});
  unsetenv("GROWTH_SEED");
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliPipeline, FitAndTrainAreDeterministic) {
  ASSERT_EQ(invoke({"fit-field", "--data", p("data/manifest.json"), "--config", p("fit.json"), "--out", p("fields2")}).code,
            0);
  const auto a = snapshot_dir(root / "fields"), b = snapshot_dir(root / "fields2");
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, bytes] : a) {
    if (name == "manifest.json") continue;  // field paths differ by directory
    EXPECT_EQ(bytes, b.at(name)) << name;
  }
  ASSERT_EQ(invoke({"train", "--data", p("fields/manifest.json"), "--config", p("train.json"), "--out", p("m2.ckpt")}).code,
            0);
  EXPECT_EQ(slurp(root / "m.ckpt"), slurp(root / "m2.ckpt"));
  EXPECT_EQ(slurp(root / "m.ckpt.json"), slurp(root / "m2.ckpt.json"));
  EXPECT_EQ(slurp(root / "m.ckpt.loss.csv"), slurp(root / "m2.ckpt.loss.csv"));
}

TEST_F(CliPipeline, ZeroPredictorRowsAreMinusOne) {
  const auto r = invoke({"eval", "--data", p("fields/manifest.json"), "--predictor", "zero", "--split", "all", "--out",
                      p("ev_zero")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream rows(slurp(root / "ev_zero/metrics.jsonl"));
  std::size_t n = 0;
  for (std::string line; std::getline(rows, line); ++n) {
    const auto j = json::parse(line);
    ASSERT_GT(j["ref_growth"].get<double>(), 0.0);
    EXPECT_EQ(j["rgvd"].get<double>(), -1.0);
  }
  EXPECT_GT(n, 0u);
}

TEST_F(CliPipeline, EvalIsDeterministicAcrossThreads) {
  for (const std::string pred : {"model", "hist"}) {
    std::vector<std::string> args = {"eval", "--data", p("fields/manifest.json"), "--predictor", pred,
                                     "--sweep", "0.5,1", "--model", p("m.ckpt")};
    auto one = args, two = args;
    one.insert(one.end(), {"--out", p("ev1_" + pred)});
    two.insert(two.end(), {"--out", p("ev2_" + pred), "--threads", "3"});
    ASSERT_EQ(invoke(one).code, 0);
    ASSERT_EQ(invoke(two).code, 0);
    EXPECT_EQ(snapshot_dir(root / ("ev1_" + pred)), snapshot_dir(root / ("ev2_" + pred)));
    EXPECT_TRUE(fs::exists(root / ("ev1_" + pred) / "error_vs_dt.csv"));
  }
}

TEST_F(CliPipeline, PredictReportIsCompleteAndFinite) {
  const std::vector<std::string> args = {
      "predict", "--model", p("m.ckpt"), "--input", p("data/H000/t1.ply"), "--centerline",
      p("data/H000/t1_centerline.json"), "--dt", "0.5", "--reference", p("data/H000/t2.ply"),
      "--reference-centerline", p("data/H000/t2_centerline.json")};
  auto a = args, b = args;
  a.insert(a.end(), {"--out", p("pa.ply"), "--report", p("pa.json"), "--profile", p("pa.csv")});
  b.insert(b.end(), {"--out", p("pb.ply"), "--report", p("pb.json"), "--profile", p("pb.csv")});
  const auto r = invoke(a);
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(invoke(b).code, 0);
  const auto j = json::parse(slurp(root / "pa.json"));
  for (const char* k : {"hd95", "diameter_error", "rgvd", "chamfer"}) {
    ASSERT_TRUE(j.contains(k)) << k;
    EXPECT_TRUE(std::isfinite(j[k].get<double>())) << k;
  }
  EXPECT_EQ(slurp(root / "pa.json"), slurp(root / "pb.json"));
  EXPECT_EQ(slurp(root / "pa.ply"), slurp(root / "pb.ply"));
  EXPECT_EQ(slurp(root / "pa.csv"), slurp(root / "pb.csv"));
  EXPECT_EQ(surface::read_ply(p("pa.ply")).mesh.size(), surface::read_ply(p("data/H000/t1.ply")).mesh.size());
  // Reference without its centerline.
  EXPECT_EQ(invoke({"predict", "--model", p("m.ckpt"), "--input", p("data/H000/t1.ply"), "--centerline",
                 p("data/H000/t1_centerline.json"), "--dt", "0.5", "--out", p("pc.ply"), "--reference",
                 p("data/H000/t2.ply")})
                .code,
            2);
}

TEST_F(CliPipeline, ThresholdOutputAndPreconditions) {
  const std::vector<std::string> args = {"threshold", "--model", p("m.ckpt"), "--input", p("data/THRESH/t1.ply"),
                                         "--centerline", p("data/THRESH/t1_centerline.json")};
  const auto a = invoke(args), b = invoke(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto j = json::parse(a.out);
  EXPECT_TRUE(j.contains("crosses"));
  EXPECT_TRUE(j.contains("month"));
  EXPECT_EQ(j["diameters"].size(), 24u);
  // The last snapshot is already past 55 mm.
  const auto over = invoke({"threshold", "--model", p("m.ckpt"), "--input", p("data/THRESH/t3.ply"), "--centerline",
                         p("data/THRESH/t3_centerline.json")});
  EXPECT_EQ(over.code, 2);
}

TEST_F(CliPipeline, DivergentTrainingExitsWithFour) {
  io::write_json(root / "bad.json", {{"epochs", 3}, {"learning_rate", 1e300}});
  const auto r = invoke({"train", "--data", p("fields/manifest.json"), "--config", p("bad.json"), "--out", p("bad.ckpt")});
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(json::parse(r.err)["error"]["type"], "numerical_error");
}

TEST_F(CliPipeline, TrainWithoutFieldsNeedsNoAugmentation) {
  const auto r = invoke({"train", "--data", p("data/manifest.json"), "--config", p("train.json"), "--out", p("nf.ckpt")});
  EXPECT_EQ(r.code, 3);
  io::write_json(root / "noaug.json", {{"epochs", 1}, {"augmentation", false}});
  EXPECT_EQ(invoke({"train", "--data", p("data/manifest.json"), "--config", p("noaug.json"), "--out", p("na.ckpt")}).code,
            0);
}
