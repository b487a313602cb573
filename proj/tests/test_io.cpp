#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include <unistd.h>

#include "rgbdpose/config.hpp"
#include "rgbdpose/io/dataset.hpp"
#include "rgbdpose/nn/serialize.hpp"

using namespace rgbdpose;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root = fs::temp_directory_path() / ("rgbdpose_io_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  void TearDown() override { fs::remove_all(root); }

  static std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path());
    return out;
  }

  fs::path root;
};

synth::SceneConfig small_scene() {
  synth::SceneConfig c;
  c.intr = {60, 60, 32, 24, 64, 48};
  c.occlusion_fraction = 0.5;
  c.dropout = 0.02;
  return c;
}

}  // namespace

using Dataset = TempDir;

TEST_F(Dataset, EmptyDatasetIsValid) {
  const io::Manifest m = io::generate_dataset(root / "d", small_scene(), 1, 0);
  EXPECT_TRUE(m.ids.empty());
  const io::Manifest back = io::read_manifest(root / "d");
  EXPECT_TRUE(back.ids.empty());
  EXPECT_EQ(back.joints.size(), 18u);
  EXPECT_EQ(back.seed, 1u);
  EXPECT_TRUE(io::read_dataset(root / "d").empty());
}

TEST_F(Dataset, RoundTripMatchesGenerator) {
  const auto cfg = small_scene();
  io::generate_dataset(root / "d", cfg, 5, 3);
  const auto disk = io::read_dataset(root / "d");
  const auto mem = synth::generate_samples(cfg, 5, 3);
  ASSERT_EQ(disk.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(disk[i].id, mem[i].id);
    EXPECT_EQ(disk[i].depth.values(), mem[i].depth.values());
    EXPECT_EQ(disk[i].scores.values, mem[i].scores.values);
    EXPECT_EQ(disk[i].joint_occluded, mem[i].joint_occluded);
    EXPECT_EQ(disk[i].occluded, mem[i].occluded);
    for (std::size_t j = 0; j < 18; ++j) {
      EXPECT_EQ(disk[i].gt[j].position, mem[i].gt[j].position);
      EXPECT_EQ(disk[i].detections[j].u, mem[i].detections[j].u);
      EXPECT_EQ(disk[i].detections[j].valid, mem[i].detections[j].valid);
    }
    ASSERT_TRUE(disk[i].left_normal);
    EXPECT_EQ(disk[i].left_normal->direction, mem[i].left_normal->direction);
  }
}

TEST_F(Dataset, SameSeedIsByteIdentical) {
  io::generate_dataset(root / "a", small_scene(), 7, 4);
  io::generate_dataset(root / "b", small_scene(), 7, 4);
  io::generate_dataset(root / "c", small_scene(), 8, 4);
  EXPECT_EQ(tree(root / "a"), tree(root / "b"));
  EXPECT_NE(tree(root / "a"), tree(root / "c"));
}

TEST_F(Dataset, ConfigHashTracksConfig) {
  auto cfg = small_scene();
  const auto a = io::generate_dataset(root / "a", cfg, 1, 0);
  cfg.noise_a = 0.005;
  const auto b = io::generate_dataset(root / "b", cfg, 1, 0);
  EXPECT_NE(a.config_hash, b.config_hash);
  EXPECT_EQ(a.config_hash->size(), 16u);
}

TEST_F(Dataset, FormatErrors) {
  io::generate_dataset(root / "d", small_scene(), 1, 1);
  const fs::path sample = io::sample_dir(root / "d", "000000");
  {
    std::ofstream(sample / "depth.f32", std::ios::binary) << "abcd";
    EXPECT_THROW(io::read_dataset(root / "d"), FormatError);
  }
  io::generate_dataset(root / "d", small_scene(), 1, 1);
  {
    std::ofstream(sample / "gt.json") << "{ not json";
    EXPECT_THROW(io::read_dataset(root / "d"), FormatError);
  }
  io::generate_dataset(root / "d", small_scene(), 1, 1);
  {
    auto meta = io::parse_json(sample / "meta.json");
    meta["width"] = 10;
    std::ofstream(sample / "meta.json") << meta.dump();
    EXPECT_THROW(io::read_dataset(root / "d"), FormatError);
  }
  {
    auto m = io::to_json(io::read_manifest(root / "d"));
    m["format_version"] = 99;
    std::ofstream(root / "d" / "manifest.json") << m.dump();
    EXPECT_THROW(io::read_manifest(root / "d"), FormatError);
    m["format_version"] = 1;
    m["ids"] = {"a", "a"};
    std::ofstream(root / "d" / "manifest.json") << m.dump();
    EXPECT_THROW(io::read_manifest(root / "d"), FormatError);
    m["ids"] = {"../x"};
    std::ofstream(root / "d" / "manifest.json") << m.dump();
    EXPECT_THROW(io::read_manifest(root / "d"), FormatError);
  }
}

TEST_F(Dataset, PredictionRoundTrip) {
  Skeleton3D s(18);
  s[0] = {Vec3(0.1, 0.2, 3.3), true, 0.7};
  s[5] = {Vec3(-1, 2, 1e-3), true, 1.0};
  io::write_prediction(root, "000003", s);
  const Skeleton3D back = io::read_prediction(root, "000003");
  for (std::size_t j = 0; j < 18; ++j) {
    EXPECT_EQ(back[j].valid, s[j].valid);
    if (s[j].valid) {
      EXPECT_EQ(back[j].position, s[j].position);
      EXPECT_EQ(back[j].confidence, s[j].confidence);
    }
  }
  EXPECT_THROW(io::read_prediction(root, "missing"), Error);
}

TEST(RunConfig, Profiles) {
  const RunConfig p = RunConfig::paper();
  EXPECT_EQ(p.grid.K, 64);
  EXPECT_DOUBLE_EQ(p.grid.resolution, 0.03);
  EXPECT_DOUBLE_EQ(p.train.lr_initial, 1e-4);
  EXPECT_EQ(p.train.batch_size, 2);
  const RunConfig d = RunConfig::desk();
  EXPECT_EQ(d.grid.K, 16);
  EXPECT_DOUBLE_EQ(d.grid.resolution, 0.12);
  EXPECT_EQ(d.train.iterations, 2000);
  EXPECT_THROW(RunConfig::profile_named("huge"), InvalidArgument);
}

TEST(RunConfig, JsonOverridesAndRoundTrip) {
  const nlohmann::json j = {{"defaults", "desk"},
                            {"seed", 9},
                            {"grid", {{"tau", 0.5}}},
                            {"train", {{"iterations", 10}}},
                            {"scene", {{"dropout", 0.1}}}};
  const RunConfig c = config_from_json(j);
  EXPECT_EQ(c.grid.K, 16);
  EXPECT_EQ(c.grid.tau, 0.5);
  EXPECT_EQ(c.train.iterations, 10);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.train.sigma_vox, c.grid.sigma_vox);
  EXPECT_EQ(c.scene.dropout, 0.1);
  EXPECT_EQ(c.scene.noise_a, synth::SceneConfig{}.noise_a);
  EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c));
}

TEST(RunConfig, InvalidValuesRejected) {
  EXPECT_THROW(config_from_json({{"grid", {{"K", 12}}}}), Error);
  EXPECT_THROW(config_from_json({{"grid", {{"tau", 2.0}}}}), InvalidArgument);
  EXPECT_THROW(config_from_json({{"scene", {{"dropout", -0.1}}}}), InvalidArgument);
  EXPECT_THROW(config_from_json({{"eval", {{"thresholds_m", nlohmann::json::array({0.1})}}}}), InvalidArgument);
  EXPECT_THROW(config_from_json(nlohmann::json::array()), InvalidArgument);
}

TEST(ModelFile, HeaderLayout) {
  nn::NetworkSpec spec;
  spec.joints = 2;
  const auto params = nn::init_params<float>(spec, 3);
  const std::string bytes = nn::encode_params(params);
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(0, 4), "VPN1");
  const std::uint32_t len = read_u32_le(bytes.data() + 4);
  const auto header = nlohmann::json::parse(bytes.substr(8, len));
  EXPECT_TRUE(header.is_object());
  EXPECT_EQ(bytes.size() - 8 - len, 4 * params.count());
}
