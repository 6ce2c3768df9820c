#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "rfc/checkpoint.hpp"
#include "rfc/io.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "rfc_cli_test";
const std::string kTiny =
    " -s codec.variant=identity data.image_size=32 data.train_normals=64 train.epochs=2"
    " train.batch_size=32 reflow.epochs=1 data.eval_cases=4 data.textures=4";

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = "cd " + kWork.string() + " && " + env + " " RFC_BINARY " " + args + " >/dev/null 2>err.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string last_error() { return rfc::read_text(kWork / "err.txt"); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a)) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b)) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& p : fa) {
    if (fs::is_directory(a / p)) continue;
    if (rfc::read_text(a / p) != rfc::read_text(b / p)) return false;
  }
  return true;
}

}  // namespace

TEST_F(Cli, PhantomGenIsByteIdenticalPerSeed) {
  ASSERT_EQ(run("phantom-gen -n 10 --seed 7 -o pg1"), 0);
  ASSERT_EQ(run("phantom-gen -n 10 --seed 7 -o pg2"), 0);
  ASSERT_EQ(run("phantom-gen -n 10 --seed 8 -o pg3"), 0);
  EXPECT_TRUE(same_tree(kWork / "pg1", kWork / "pg2"));
  EXPECT_FALSE(same_tree(kWork / "pg1", kWork / "pg3"));
  for (const char* f : {"manifest.json", "resolved_config.json", "seeds.json", "images/0009.pgm"})
    EXPECT_TRUE(fs::exists(kWork / "pg1" / f)) << f;
  EXPECT_FALSE(fs::exists(kWork / "pg1" / "INCOMPLETE"));
}

TEST_F(Cli, RefusesToOverwriteWithoutForce) {
  ASSERT_EQ(run("phantom-gen -n 2 -o ow"), 0);
  EXPECT_EQ(run("phantom-gen -n 2 -o ow"), 2);
  EXPECT_NE(last_error().find("--force"), std::string::npos);
  EXPECT_EQ(run("phantom-gen -n 2 -o ow --force"), 0);
}

TEST_F(Cli, ConfigErrorsExitTwoWithField) {
  EXPECT_EQ(run("train -s codec.variant=identity train.lr=-1 -o e1"), 2);
  const auto err = nlohmann::json::parse(last_error());
  EXPECT_EQ(err["error"], "config");
  EXPECT_EQ(err["field"], "train.lr");
  EXPECT_FALSE(fs::exists(kWork / "e1"));

  rfc::write_text(kWork / "bad.json", R"({"train": {"epochz": 3}})");
  EXPECT_EQ(run("train -c bad.json -o e2"), 2);
  const auto err2 = nlohmann::json::parse(last_error());
  EXPECT_EQ(err2["field"], "train.epochz");
  EXPECT_EQ(err2["config"], "bad.json");

  EXPECT_EQ(run("eval --model missing -o e3"), 2);
  EXPECT_EQ(run("no-such-command"), 2);
}

TEST_F(Cli, PipelineAndRuntimeFailure) {
  ASSERT_EQ(run("train" + kTiny + " -o tr"), 0);
  EXPECT_TRUE(fs::exists(kWork / "tr/loss.csv"));
  ASSERT_EQ(run("reflow --teacher tr/checkpoint" + kTiny + " -o rf"), 0);
  const auto gen2 = rfc::load_flow(kWork / "rf/checkpoint");
  EXPECT_EQ(gen2.model.generation, 2);
  EXPECT_EQ(gen2.model.teacher_id, rfc::load_flow(kWork / "tr/checkpoint").model.id());

  ASSERT_EQ(run("eval --model rf/checkpoint" + kTiny + " -o ev1"), 0);
  ASSERT_EQ(run("eval --model rf/checkpoint" + kTiny + " -o ev2"), 0);
  EXPECT_EQ(rfc::read_text(kWork / "ev1/report.csv"), rfc::read_text(kWork / "ev2/report.csv"));
  const auto report = nlohmann::json::parse(rfc::read_text(kWork / "ev1/report.json"));
  EXPECT_EQ(report["summary"].size(), 2u);

  ASSERT_EQ(run("phantom-gen --lesions -n 3" + kTiny + " -o les"), 0);
  ASSERT_EQ(run("correct --model tr/checkpoint --input les/images" + kTiny + " -o cor"), 0);
  EXPECT_TRUE(fs::exists(kWork / "cor/maps/0002.pgm"));
  ASSERT_EQ(run("trajectory --model tr/checkpoint -n 1 --steps 3" + kTiny + " -o tj"), 0);
  EXPECT_TRUE(fs::exists(kWork / "tj/case_0/step_03_image.pgm"));
  EXPECT_TRUE(fs::exists(kWork / "tj/straightness.csv"));

  // A corrupted blob is a runtime failure (exit 3), not a config error.
  fs::copy(kWork / "tr/checkpoint", kWork / "broken", fs::copy_options::recursive);
  {
    std::fstream f(kWork / "broken" / rfc::kBlobFile, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    f.put('\x7f');
  }
  EXPECT_EQ(run("eval --model broken" + kTiny + " -o ev3"), 3);
  EXPECT_EQ(nlohmann::json::parse(last_error())["error"], "runtime");
}

TEST_F(Cli, OutputRootFromEnvironment) {
  ASSERT_EQ(run("phantom-gen -n 1", "RFC_OUTPUT_ROOT=envroot"), 0);
  EXPECT_TRUE(fs::exists(kWork / "envroot/phantom-gen/manifest.json"));
}
