#include <gtest/gtest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "cli_support.hpp"
#include "streetstage/render.hpp"
#include "test_support.hpp"

using nlohmann::json;
using test_support::run_command;
using test_support::shell_quote;
using test_support::TempDir;
namespace fs = std::filesystem;

namespace {

const fs::path kData = STREETSTAGE_DATA_DIR;

std::string cli() { return shell_quote(STREETSTAGE_CLI); }
std::string demo_config() { return " --config " + shell_quote((kData / "demo_config.json").string()); }
std::string quoted(const fs::path& p) { return shell_quote(p.string()); }

std::string file_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Cli, ValidateShippedDemoScene) {
  TempDir tmp;
  const auto r = run_command(cli() + " validate " + quoted(kData / "demo_scene.json"), tmp.path());
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find(": ok"), std::string::npos);
}

TEST(Cli, ValidateBrokenSceneListsDiagnostics) {
  TempDir tmp;
  const auto r = run_command(cli() + " validate --json " + quoted(kData / "broken_scene.json"), tmp.path());
  EXPECT_NE(r.exit_code, 0);
  const auto doc = json::parse(r.output);
  EXPECT_FALSE(doc["ok"].get<bool>());
  EXPECT_GE(doc["diagnostics"].size(), 7u);

  const auto text = run_command(cli() + " validate " + quoted(kData / "broken_scene.json"), tmp.path());
  EXPECT_EQ(text.exit_code, 1);
  EXPECT_NE(text.output.find("actors[1].id: duplicate actor id 'walker'"), std::string::npos) << text.output;
}

TEST(Cli, ValidateUnreadableScene) {
  TempDir tmp;
  std::ofstream(tmp.path() / "bad.json") << "{ not json";
  const auto r = run_command(cli() + " validate bad.json", tmp.path());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("not valid JSON"), std::string::npos) << r.output;
  EXPECT_NE(run_command(cli() + " validate missing.json", tmp.path()).exit_code, 0);
}

TEST(Cli, UsageErrorsAreNonZero) {
  TempDir tmp;
  EXPECT_NE(run_command(cli(), tmp.path()).exit_code, 0);
  EXPECT_NE(run_command(cli() + " frobnicate", tmp.path()).exit_code, 0);
  EXPECT_NE(run_command(cli() + demo_config() + " scout", tmp.path()).exit_code, 0);
  EXPECT_NE(run_command(cli() + demo_config() + " render x.json --out o --backend comfy", tmp.path()).exit_code, 0);
  EXPECT_EQ(run_command(cli() + " --help", tmp.path()).exit_code, 0);
}

TEST(Cli, ScoutListsPanoramicNodesNewestFirst) {
  TempDir tmp;
  const auto r = run_command(cli() + demo_config() + " scout --json --bbox=-105.2705,40.0095,-105.2695,40.0102",
                             tmp.path());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  std::vector<std::string> ids;
  for (const auto& n : json::parse(r.output)) ids.push_back(n["id"]);
  EXPECT_EQ(ids, (std::vector<std::string>{"demo-0002", "demo-0001", "demo-0003"}));

  const auto empty = run_command(cli() + demo_config() + " scout --bbox=10,10,10.001,10.001", tmp.path());
  EXPECT_EQ(empty.exit_code, 0);
  EXPECT_NE(empty.output.find("no panoramic nodes"), std::string::npos);
  EXPECT_NE(run_command(cli() + demo_config() + " scout --bbox=1,2,3", tmp.path()).exit_code, 0);
}

TEST(Cli, PreviewWritesViewWithCards) {
  TempDir tmp;
  const auto r = run_command(cli() + demo_config() + " preview " + quoted(kData / "demo_scene.json") +
                                 " --t 2.5 --out p.png",
                             tmp.path());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto img = streetstage::read_image(tmp.path() / "p.png");
  EXPECT_EQ(img.width(), 1280);
  EXPECT_EQ(img.height(), 720);
  std::size_t green = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto* p = img.pixel(x, y);
      green += p[0] == 0 && p[1] == 255 && p[2] == 0;
    }
  }
  EXPECT_GT(green, 100u);
  EXPECT_NE(run_command(cli() + demo_config() + " preview " + quoted(kData / "demo_scene.json") +
                            " --t 9 --out q.png",
                        tmp.path())
                .exit_code,
            0);
}

TEST(Cli, RenderMockEndToEndWithoutNetwork) {
  TempDir tmp;
  const auto net_log = tmp.path() / "net.log";
  const auto r = run_command(test_support::guarded_cli(net_log) + demo_config() + " render " +
                                 quoted(kData / "demo_scene.json") + " --backend mock --out out",
                             tmp.path());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_FALSE(fs::exists(net_log)) << file_text(net_log);

  const auto m = streetstage::render::read_manifest(tmp.path() / "out" / "result");
  EXPECT_EQ(m.count, 80);
  EXPECT_EQ(m.resolution.width, 1280);
  EXPECT_EQ(m.resolution.height, 720);
  EXPECT_EQ(streetstage::render::read_manifest(tmp.path() / "out" / "inputs" / "background").count, 80);
  EXPECT_TRUE(fs::is_regular_file(tmp.path() / "out" / "bundle.json"));

  const auto ls = run_command(cli() + demo_config() + " jobs ls --json", tmp.path());
  ASSERT_EQ(ls.exit_code, 0) << ls.output;
  const auto jobs = json::parse(ls.output);
  ASSERT_EQ(jobs.size(), 1u);
  EXPECT_EQ(jobs[0]["state"], "done");
  const std::string id = jobs[0]["job_id"];

  const auto show = run_command(cli() + demo_config() + " jobs show " + id, tmp.path());
  ASSERT_EQ(show.exit_code, 0);
  const auto shown = json::parse(show.output);
  ASSERT_EQ(shown["subjobs"].size(), 2u);
  for (const auto& sub : shown["subjobs"]) EXPECT_EQ(sub["state"], "done");
  EXPECT_EQ(run_command(cli() + demo_config() + " jobs show job-424242", tmp.path()).exit_code, 1);

  // The same content resubmitted is the same job.
  const auto again = run_command(cli() + demo_config() + " render " + quoted(kData / "demo_scene.json") +
                                     " --out out",
                                 tmp.path());
  EXPECT_EQ(again.exit_code, 0);
  EXPECT_NE(again.output.find("submitted " + id), std::string::npos) << again.output;
}

TEST(Cli, RenderRejectsBrokenScene) {
  TempDir tmp;
  const auto r = run_command(cli() + demo_config() + " render " + quoted(kData / "broken_scene.json") + " --out o",
                             tmp.path());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("scene_prompt: must not be empty"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(tmp.path() / "o" / "bundle.json"));
}

TEST(Cli, HttpBackendUnreachableFailsJob) {
  TempDir tmp;
  std::ofstream(tmp.path() / "cfg.json") << json{{"imagery", {{"fixtures", (kData / "fixtures").string()}}},
                                                 {"backend", {{"kind", "http"}, {"url", "http://127.0.0.1:9"}}}}
                                                .dump();
  auto scene = json::parse(file_text(kData / "demo_scene.json"));
  scene["resolution"] = {64, 36};
  scene["actors"][0].erase("reference_image");
  std::ofstream(tmp.path() / "small.json") << scene.dump();
  const auto r = run_command(cli() + " --config cfg.json render small.json --out o --timeout 120", tmp.path());
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_NE(r.output.find("failed"), std::string::npos) << r.output;
}

TEST(Cli, BadConfigIsReported) {
  TempDir tmp;
  std::ofstream(tmp.path() / "cfg.json") << R"({"imagery": {"provder": "fixture"}})";
  const auto r = run_command(cli() + " --config cfg.json scout --bbox=1,1,2,2", tmp.path());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("unknown key"), std::string::npos) << r.output;
}
