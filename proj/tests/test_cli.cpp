#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <sys/wait.h>
#include <unistd.h>

#include "rgbdpose/io/dataset.hpp"
#include "rgbdpose/eval.hpp"

using namespace rgbdpose;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root = fs::temp_directory_path() / ("rgbdpose_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  void TearDown() override { fs::remove_all(root); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(RGBDPOSE_CLI) + " " + args + " > " + (root / "stdout.txt").string() +
                            " 2> " + (root / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string p(const std::string& rel) const { return (root / rel).string(); }

  void write(const std::string& rel, const std::string& text) const { std::ofstream(root / rel) << text; }

  /// Tiny scene so every command runs in well under a second.
  void small_config() const {
    write("cfg.json", R"({"defaults": "desk",
      "grid": {"K": 8, "resolution": 0.25},
      "train": {"iterations": 3},
      "scene": {"intrinsics": {"fx": 30, "fy": 30, "cx": 16, "cy": 12, "width": 32, "height": 24}}})");
  }

  fs::path root;
};

}  // namespace

TEST_F(Cli, NoArgumentsIsUsageError) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("synth --n 1"), 1);
  EXPECT_EQ(run("synth --n x --out " + p("d")), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, SynthEmptyDataset) {
  ASSERT_EQ(run("synth --n 0 --out " + p("d") + " --seed 3"), 0);
  const io::Manifest m = io::read_manifest(p("d"));
  EXPECT_TRUE(m.ids.empty());
  EXPECT_EQ(m.seed, 3u);
  // The resolved config is echoed as JSON.
  const auto echoed = nlohmann::json::parse(read_file(p("stdout.txt")));
  EXPECT_EQ(echoed.at("seed"), 3);
}

TEST_F(Cli, BadConfigIsUsageError) {
  write("bad.json", "{ nope");
  EXPECT_EQ(run("synth --n 0 --out " + p("d") + " --config " + p("bad.json")), 1);
  write("bad2.json", R"({"grid": {"tau": 3}})");
  EXPECT_EQ(run("synth --n 0 --out " + p("d") + " --config " + p("bad2.json")), 1);
  EXPECT_EQ(run("synth --n 0 --out " + p("d") + " --profile giant"), 1);
}

TEST_F(Cli, EndToEndSmallRun) {
  small_config();
  const std::string cfg = " --config " + p("cfg.json") + " --seed 1";
  ASSERT_EQ(run("synth --n 3 --out " + p("d") + cfg), 0);
  ASSERT_EQ(run("train --data " + p("d") + " --out-model " + p("m.bin") + " --log " + p("loss.csv") + cfg), 0)
      << read_file(p("stderr.txt"));
  EXPECT_EQ(read_file(p("loss.csv")).substr(0, 13), "step,loss,lr\n");
  ASSERT_EQ(run("predict --data " + p("d") + " --model " + p("m.bin") + " --out " + p("pred") + cfg), 0)
      << read_file(p("stderr.txt"));
  ASSERT_EQ(run("baseline --method naive --data " + p("d") + " --out " + p("naive") + cfg), 0);
  ASSERT_EQ(run("baseline --method align --pred-in " + p("pred") + " --data " + p("d") + " --out " + p("aligned") + cfg),
            0);
  ASSERT_EQ(run("eval --pred " + p("naive") + " --gt " + p("d") + " --out " + p("rep_naive") + cfg), 0);
  ASSERT_EQ(run("eval --pred " + p("pred") + " --gt " + p("d") + " --out " + p("rep_pred") +
                " --joints-mask r_eye,l_eye,r_ear,l_ear" + cfg),
            0);
  const auto rep = eval::report_from_json(nlohmann::json::parse(read_file(p("rep_pred/report.json"))));
  EXPECT_EQ(rep.excluded_joints.size(), 4u);
  EXPECT_EQ(rep.sample_count, 3u);
  ASSERT_EQ(run("plot --reports " + p("rep_naive/report.json") + " " + p("rep_pred/report.json") + " --out " +
                p("pck.svg")),
            0);
  EXPECT_NE(read_file(p("pck.svg")).find("<svg"), std::string::npos);
  EXPECT_EQ(run("eval --pred " + p("pred") + " --gt " + p("d") + " --out " + p("r") + " --joints-mask knee"), 1);
}

TEST_F(Cli, EvalJointMismatchIsDataError) {
  small_config();
  ASSERT_EQ(run("synth --n 2 --out " + p("d") + " --config " + p("cfg.json")), 0);
  fs::create_directories(root / "pred");
  for (const auto& id : io::read_manifest(p("d")).ids) io::write_prediction(root / "pred", id, Skeleton3D(17));
  EXPECT_EQ(run("eval --pred " + p("pred") + " --gt " + p("d") + " --out " + p("r")), 2);
}

TEST_F(Cli, MissingOrCorruptInputsAreDataErrors) {
  small_config();
  ASSERT_EQ(run("synth --n 1 --out " + p("d") + " --config " + p("cfg.json")), 0);
  fs::create_directories(root / "pred");
  EXPECT_EQ(run("eval --pred " + p("pred") + " --gt " + p("d") + " --out " + p("r")), 2);
  write("m.bin", "not a model");
  EXPECT_EQ(run("predict --data " + p("d") + " --model " + p("m.bin") + " --out " + p("o") + " --config " +
                p("cfg.json")),
            2);
  fs::create_directories(root / "empty");
  EXPECT_EQ(run("train --data " + p("empty") + " --out-model " + p("x.bin")), 2);
}

TEST_F(Cli, TriangulateRig) {
  // Three cameras on a circle looking at the origin; one point per joint.
  nlohmann::json cams = nlohmann::json::array();
  std::vector<std::pair<CameraIntrinsics, RigidTransform>> rig;
  const CameraIntrinsics intr{500, 500, 320, 240, 640, 480};
  for (int c = 0; c < 3; ++c) {
    const double a = 0.9 * (c - 1);
    const Vec3 center(3 * std::sin(a), 0.2 * c, -3 * std::cos(a));
    const Vec3 z = (-center).normalized(), x = Vec3::UnitY().cross(z).normalized(), y = z.cross(x);
    RigidTransform T;
    T.rotation.row(0) = x;
    T.rotation.row(1) = y;
    T.rotation.row(2) = z;
    T.translation = -T.rotation * center;
    rig.emplace_back(intr, T);
    std::vector<double> r;
    for (int i = 0; i < 9; ++i) r.push_back(T.rotation(i / 3, i % 3));
    cams.push_back({{"name", "c" + std::to_string(c)},
                    {"intrinsics", intr},
                    {"rotation", r},
                    {"translation", {T.translation.x(), T.translation.y(), T.translation.z()}}});
  }
  write("rig.json", nlohmann::json{{"cameras", cams}}.dump());
  Skeleton3D truth(18);
  for (std::size_t j = 0; j < 18; ++j) truth[j] = {Vec3(0.05 * double(j) - 0.4, 0.03 * double(j), 0.1), true, 1};
  nlohmann::json views = nlohmann::json::object();
  for (int c = 0; c < 3; ++c) {
    Keypoints2D kp;
    for (const auto& j : truth.joints) {
      const PixelCoord px = project(rig[std::size_t(c)].second.apply(j.position), intr);
      kp.push_back({px.u, px.v, 1.0, true});
    }
    views["c" + std::to_string(c)] = io::keypoints_json(kp);
  }
  write("det.json", nlohmann::json{{"frames", {{{"id", "f0"}, {"views", views}}}}}.dump());
  ASSERT_EQ(run("triangulate --views " + p("rig.json") + " --detections " + p("det.json") + " --out " + p("gt")), 0)
      << read_file(p("stderr.txt"));
  const Skeleton3D got = io::read_prediction(root / "gt", "f0");
  for (std::size_t j = 0; j < 18; ++j) {
    ASSERT_TRUE(got[j].valid);
    EXPECT_LT((got[j].position - truth[j].position).norm(), 1e-6);
  }
  write("det_bad.json", R"({"frames": [{"id": "f0", "views": {"nope": {"joints_2d": [], "detected": []}}}]})");
  EXPECT_EQ(run("triangulate --views " + p("rig.json") + " --detections " + p("det_bad.json") + " --out " + p("gt")), 2);
}
