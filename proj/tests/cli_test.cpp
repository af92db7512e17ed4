#include <fstream>
#include <sstream>

#include "tpwng/cli.hpp"

#include <json.hpp>
#include "test_util.hpp"

namespace tpwng::cli {
namespace {

namespace fs = std::filesystem;

int call(std::vector<std::string> args) {
  args.insert(args.begin(), "tpwng");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  const int rc = run(static_cast<int>(argv.size()), argv.data());
  ::testing::internal::GetCapturedStdout();
  ::testing::internal::GetCapturedStderr();
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path find_one(const fs::path& dir, const std::string& prefix) {
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().rfind(prefix, 0) == 0) return e.path();
  return {};
}

void write_config(const fs::path& p) {
  std::ofstream out(p);
  out << R"({"preset": "synthetic", "classes": 3, "dim": 16, "frames": 12, "train_videos": 8,
            "test_videos": 6, "epochs": 2, "batch_normal": 2, "batch_abnormal": 2,
            "layers": 1, "heads": 2, "context_length": 2})";
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(call({}), kExitUsage);
  EXPECT_EQ(call({"bogus"}), kExitUsage);
  EXPECT_EQ(call({"train"}), kExitUsage);
  EXPECT_EQ(call({"gen-data", "--preset", "nope"}), kExitUsage);
  EXPECT_EQ(call({"--help"}), kExitOk);
}

TEST(Cli, ConfigErrorsAreUsageErrors) {
  testing::TempDir dir;
  {
    std::ofstream out(dir / "c.json");
    out << R"({"alhpa": 1})";
  }
  EXPECT_EQ(call({"gen-data", "--config", (dir / "c.json").string(), "--out", dir.path().string()}), kExitUsage);
}

TEST(Cli, RuntimeErrors) {
  testing::TempDir dir;
  {
    std::ofstream out(dir / "manifest.json");
    out << "{ not json";
  }
  EXPECT_EQ(call({"eval", "--data", (dir / "manifest.json").string(), "--out", dir.path().string()}), kExitRuntime);
}

TEST(Cli, GenDataIsByteIdentical) {
  testing::TempDir dir;
  write_config(dir / "c.json");
  for (const char* sub : {"a", "b"})
    ASSERT_EQ(call({"gen-data", "--config", (dir / "c.json").string(), "--out", (dir / sub).string()}), kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = dir / "b" / fs::relative(e.path(), dir / "a");
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path();
  }
  EXPECT_EQ(files, 1u + 14u);
}

TEST(Cli, TrainEvalExportSmoke) {
  testing::TempDir dir;
  write_config(dir / "c.json");
  const std::string cfg = (dir / "c.json").string();
  const std::string data = (dir / "data" / "manifest.json").string();
  const std::string out = (dir / "run").string();
  ASSERT_EQ(call({"gen-data", "--config", cfg, "--out", (dir / "data").string()}), kExitOk);
  ASSERT_EQ(call({"train", "--config", cfg, "--data", data, "--out", out}), kExitOk);
  ASSERT_EQ(call({"eval", "--config", cfg, "--data", data, "--out", out}), kExitOk);
  ASSERT_EQ(call({"pseudo-labels", "--config", cfg, "--data", data, "--out", out}), kExitOk);
  ASSERT_EQ(call({"export-scores", "--config", cfg, "--data", data, "--out", out}), kExitOk);

  const fs::path log = find_one(out, "train_log-");
  ASSERT_FALSE(log.empty());
  std::ifstream in(log);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,step,rank_n,rank_a,dil,cl,sp,sm,total");
  EXPECT_FALSE(find_one(out, "params-").empty());
  EXPECT_FALSE(find_one(out, "config-").empty());

  const auto metrics = nlohmann::json::parse(slurp(find_one(out, "metrics-")));
  EXPECT_TRUE(metrics.at("auc").is_number());
  EXPECT_EQ(metrics.at("num_frames").get<int>(), 6 * 12);

  std::ifstream pl(find_one(out, "pseudo_labels-"));
  std::string line;
  std::getline(pl, line);
  EXPECT_EQ(line, "video_id,frame,psi,gamma");
  int rows = 0;
  while (std::getline(pl, line)) ++rows;
  EXPECT_EQ(rows, 8 * 12);

  const fs::path scores = find_one(out, "scores-");
  ASSERT_FALSE(scores.empty());
  EXPECT_EQ(std::distance(fs::directory_iterator(scores), fs::directory_iterator{}), 6);

  // Retraining the same configuration reproduces the metrics byte for byte.
  const std::string first = slurp(find_one(out, "metrics-"));
  const std::string out2 = (dir / "run2").string();
  ASSERT_EQ(call({"train", "--config", cfg, "--data", data, "--out", out2}), kExitOk);
  ASSERT_EQ(call({"eval", "--config", cfg, "--data", data, "--out", out2}), kExitOk);
  EXPECT_EQ(slurp(find_one(out2, "metrics-")), first);

  // Ablation flags change the configuration hash.
  ASSERT_EQ(call({"train", "--config", cfg, "--data", data, "--out", out2, "--nvp", "off"}), kExitOk);
  int params = 0;
  for (const auto& e : fs::directory_iterator(out2)) params += e.path().filename().string().rfind("params-", 0) == 0;
  EXPECT_EQ(params, 2);
}

TEST(Cli, MissingParamsIsRuntimeError) {
  testing::TempDir dir;
  write_config(dir / "c.json");
  const std::string cfg = (dir / "c.json").string();
  ASSERT_EQ(call({"gen-data", "--config", cfg, "--out", (dir / "data").string()}), kExitOk);
  EXPECT_EQ(call({"eval", "--config", cfg, "--data", (dir / "data" / "manifest.json").string(), "--out",
                  (dir / "empty").string()}),
            kExitRuntime);
}

}  // namespace
}  // namespace tpwng::cli
