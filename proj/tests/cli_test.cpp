// Copyright (c) the jpegq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gtest/gtest.h"
#include "jpegq.hpp"
#include "json.hpp"

namespace jpegq {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(fs::temp_directory_path() / ("jpegq_cli_test_" + std::to_string(::getpid())));
    fs::create_directories(*root_);
    ASSERT_EQ(run_in("synth-corpus --kind natural --count 6 --size 48 --seed 4 --out natural").code, 0);
    ASSERT_EQ(run_in("synth-corpus --kind pattern --count 24 --size 32 --seed 5 --out pattern").code, 0);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }

  static Result run_in(const std::string& args) {
    static int n = 0;
    const auto out = *root_ / ("stdout" + std::to_string(n));
    const auto err = *root_ / ("stderr" + std::to_string(n++));
    const std::string cmd = "cd '" + root_->string() + "' && '" JPEGQ_CLI_PATH "' " + args + " > '" + out.string() +
                            "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }
  static fs::path at(const std::string& rel) { return *root_ / rel; }

  static fs::path* root_;
};

fs::path* CliTest::root_ = nullptr;

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

TEST_F(CliTest, OptimizeRdStartsFromDefaultTables) {
  const auto r = run_in("optimize-rd --dataset natural --size 48 --steps 0 --out rd0");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_tables(at("rd0/tables.txt").string()), default_tables());
  EXPECT_EQ(load_tables(at("rd0/tables.txt").string()).luma[0], 16.0);
  const auto m = nlohmann::json::parse(slurp(at("rd0/manifest.json")));
  EXPECT_EQ(m["config"]["cr"], 1.0);
  EXPECT_EQ(m["config"]["cd"], 1.0);
  EXPECT_EQ(m["config"]["cc"], 0.0);
  EXPECT_EQ(m["config"]["batch"], 4);
  EXPECT_EQ(m["config"]["lr"], 1e-4);
}

TEST_F(CliTest, OptimizeRdWritesArtifactsAndIsReproducible) {
  const std::string args = "optimize-rd --dataset natural --size 48 --steps 15 --lr 0.05 --seed 9 --out ";
  ASSERT_EQ(run_in(args + "a").code, 0);
  ASSERT_EQ(run_in(args + "b").code, 0);
  for (const char* f : {"tables.txt", "entropy.ckpt", "loss_trace.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(at("a") / f)) << f;
  EXPECT_EQ(slurp(at("a/tables.txt")), slurp(at("b/tables.txt")));
  const auto ma = nlohmann::json::parse(slurp(at("a/manifest.json")));
  const auto mb = nlohmann::json::parse(slurp(at("b/manifest.json")));
  EXPECT_EQ(ma["parameters"], mb["parameters"]);
  EXPECT_EQ(ma["outputs"], mb["outputs"]);
  EXPECT_EQ(ma["seed"], 9);
  EXPECT_EQ(ma["corpus"]["images"].size(), 6u);
  const auto trace = slurp(at("a/loss_trace.csv"));
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "step,total,rate,distortion,task");
  EXPECT_EQ(count_lines(trace), 16);
  EXPECT_NE(load_tables(at("a/tables.txt").string()), default_tables());
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
  { std::ofstream(at("run.cfg")) << "# training\nsteps = 3\nlr = 0.5\nseed = 2\n"; }
  ASSERT_EQ(run_in("optimize-rd --config run.cfg --dataset natural --size 48 --steps 2 --out cfg").code, 0);
  const auto m = nlohmann::json::parse(slurp(at("cfg/manifest.json")));
  EXPECT_EQ(m["config"]["steps"], 2);
  EXPECT_EQ(m["config"]["lr"], 0.5);
  EXPECT_EQ(m["seed"], 2);
}

TEST_F(CliTest, EvalCurveWithStoredTables) {
  const auto r = run_in("eval-curve --dataset natural --size 48 --tables '" JPEGQ_TEST_DATA_DIR "/rd_tables.txt' --out ev");
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream csv(at("ev/curve.csv"));
  const auto curve = parse_curve_csv(csv);
  ASSERT_EQ(curve.rows.size(), 9u);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(curve.rows[i].q, 10 * static_cast<int>(i + 1));
  for (std::size_t i = 1; i < 9; ++i) EXPECT_GT(curve.rows[i].bpp_actual, curve.rows[i - 1].bpp_actual);
  const auto j = nlohmann::json::parse(slurp(at("ev/curve.json")));
  EXPECT_EQ(j["rows"].size(), 9u);
}

TEST_F(CliTest, EstimateVsActualPrintsPearson) {
  ASSERT_EQ(run_in("optimize-rd --dataset natural --size 48 --steps 5 --out est_train").code, 0);
  const auto r = run_in("estimate-vs-actual --dataset natural --size 48 --entropy-ckpt est_train/entropy.ckpt --out est");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("pearson"), std::string::npos) << r.out;
  const auto csv = slurp(at("est/scatter.csv"));
  EXPECT_EQ(count_lines(csv), 1 + 6 * 9);
}

TEST_F(CliTest, ExportTablesAtQuality) {
  const auto r = run_in("export-tables --tables '" JPEGQ_TEST_DATA_DIR "/rd_tables.txt' --q 50 --out ex");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto p = load_tables(JPEGQ_TEST_DATA_DIR "/rd_tables.txt");
  EXPECT_EQ(load_tables(at("ex/tables.txt").string()), p);
  EXPECT_EQ(load_tables(at("ex/tables_q50.txt").string()), to_real(scale_table(p, 50)));
}

TEST_F(CliTest, RateAccuracyWorkflow) {
  ASSERT_EQ(run_in("train-classifier --dataset pattern --labels pattern/labels.txt --size 32 --out clf").code, 0);
  ASSERT_TRUE(fs::exists(at("clf/classifier.ckpt")));
  const auto r = run_in(
      "optimize-ra --dataset pattern --labels pattern/labels.txt --classifier-ckpt clf/classifier.ckpt --size 32 "
      "--steps 3 --out ra");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = nlohmann::json::parse(slurp(at("ra/manifest.json")));
  EXPECT_EQ(m["config"]["cr"], 10.0);
  EXPECT_EQ(m["config"]["cd"], 0.0);
  EXPECT_EQ(m["config"]["cc"], 1.0);
  const auto ev = run_in(
      "eval-curve --dataset pattern --labels pattern/labels.txt --classifier-ckpt clf/classifier.ckpt --size 32 "
      "--tables ra/tables.txt --qlist 20 60 --out ra_eval");
  ASSERT_EQ(ev.code, 0) << ev.err;
  std::ifstream csv(at("ra_eval/curve.csv"));
  const auto curve = parse_curve_csv(csv);
  ASSERT_EQ(curve.rows.size(), 2u);
  EXPECT_TRUE(curve.rows[0].accuracy.has_value());
}

TEST_F(CliTest, PerImageWritesOneTablePerImage) {
  ASSERT_EQ(run_in("optimize-rd --dataset natural --size 48 --steps 3 --out pi_src").code, 0);
  const auto r = run_in(
      "optimize-per-image --dataset natural --size 48 --steps 3 --tables pi_src/tables.txt "
      "--entropy-ckpt pi_src/entropy.ckpt --out pi");
  ASSERT_EQ(r.code, 0) << r.err;
  int n = 0;
  for (const auto& e : fs::directory_iterator(at("pi/per_image"))) n += e.path().extension() == ".txt";
  EXPECT_EQ(n, 6);
  EXPECT_NE(run_in("optimize-per-image --dataset natural --size 48 --steps 3 --out pi2").code, 0);
}

TEST_F(CliTest, DatasetIsNotModified) {
  std::vector<std::string> before;
  for (const auto& e : fs::directory_iterator(at("natural"))) before.push_back(e.path().filename().string() + slurp(e.path()));
  std::sort(before.begin(), before.end());
  ASSERT_EQ(run_in("optimize-rd --dataset natural --size 32 --steps 2 --out nm").code, 0);
  ASSERT_EQ(run_in("eval-curve --dataset natural --size 32 --qlist 50 --out nm_eval").code, 0);
  std::vector<std::string> after;
  for (const auto& e : fs::directory_iterator(at("natural"))) after.push_back(e.path().filename().string() + slurp(e.path()));
  std::sort(after.begin(), after.end());
  EXPECT_EQ(before, after);
}

TEST_F(CliTest, ErrorsExitNonzeroWithOneLine) {
  for (const std::string args :
       {"optimize-ra --dataset pattern --size 32 --out e1", "optimize-rd --dataset natural --bogus", "optimize-rd --out e3",
        "eval-curve --dataset missing_dir --out e4", "optimize-rd --dataset natural --layout 422 --out e5",
        "export-tables --tables missing.txt --out e6", "optimize-rd --dataset natural --cr -1 --out e7", ""}) {
    const auto r = run_in(args);
    EXPECT_NE(r.code, 0) << args;
    EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << args << ": " << r.err;
    EXPECT_EQ(count_lines(r.err), 1) << args << ": " << r.err;
  }
}

TEST_F(CliTest, MissingLabelNamesTheFile) {
  { std::ofstream(at("partial_labels.txt")) << "img00000.ppm 1\n"; }
  const auto r = run_in("optimize-ra --dataset pattern --labels partial_labels.txt --classifier-ckpt clf/classifier.ckpt --size 32 --out e8");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("img00001.ppm"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace jpegq
