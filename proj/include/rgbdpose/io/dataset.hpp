#pragma once

// On-disk dataset layout:
//
//   manifest.json
//   samples/<id>/meta.json    intrinsics, sizes, joint count, scene flags
//   samples/<id>/depth.f32    float32 LE, index v*W + u, 0 = invalid
//   samples/<id>/scores.f32   float32 LE, index (v*W + u)*J + j
//   samples/<id>/gt.json      3D joints (m, color camera frame), 2D detections,
//                             validity, hand normals
//
// Predictions are one <id>.json per sample with the 3D part of gt.json.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "rgbdpose/errors.hpp"
#include "rgbdpose/eval.hpp"
#include "rgbdpose/file_util.hpp"
#include "rgbdpose/skeleton.hpp"
#include "rgbdpose/synth.hpp"

namespace rgbdpose::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kFormatVersion = 1;

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline json parse_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Manifest {
  int format_version = kFormatVersion;
  std::vector<std::string> ids;
  std::vector<std::string> joints;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config_hash;
  json generator_config;

  void validate() const {
    if (format_version != kFormatVersion)
      throw FormatError("unsupported dataset format version " + std::to_string(format_version));
    std::set<std::string> seen;
    for (const auto& id : ids) {
      if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos)
        throw FormatError("invalid sample id '" + id + "'");
      if (!seen.insert(id).second) throw FormatError("duplicate sample id " + id);
    }
  }
};

inline json to_json(const Manifest& m) {
  json j = {{"format_version", m.format_version}, {"ids", m.ids}, {"joints", m.joints}};
  if (m.seed) j["seed"] = *m.seed;
  if (m.config_hash) j["config_hash"] = *m.config_hash;
  if (!m.generator_config.is_null()) j["generator_config"] = m.generator_config;
  return j;
}

inline Manifest manifest_from_json(const json& j) {
  try {
    Manifest m;
    m.format_version = j.at("format_version").get<int>();
    m.ids = j.at("ids").get<std::vector<std::string>>();
    m.joints = j.at("joints").get<std::vector<std::string>>();
    if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("config_hash")) m.config_hash = j.at("config_hash").get<std::string>();
    if (j.contains("generator_config")) m.generator_config = j.at("generator_config");
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

inline Manifest read_manifest(const fs::path& dir) { return manifest_from_json(parse_json(dir / "manifest.json")); }

inline void write_manifest(const fs::path& dir, const Manifest& m) {
  m.validate();
  write_file_atomic(dir / "manifest.json", dump(to_json(m)));
}

// ---- skeleton JSON --------------------------------------------------------

inline json skeleton_json(const Skeleton3D& s) {
  json pts = json::array(), valid = json::array(), conf = json::array();
  for (const auto& j : s.joints) {
    pts.push_back({j.position.x(), j.position.y(), j.position.z()});
    valid.push_back(j.valid);
    conf.push_back(j.confidence);
  }
  return {{"joints_3d", pts}, {"valid", valid}, {"confidence", conf}};
}

inline Skeleton3D skeleton_from_json(const json& j) {
  const auto& pts = j.at("joints_3d");
  const auto& valid = j.at("valid");
  if (!pts.is_array() || !valid.is_array() || pts.size() != valid.size())
    throw FormatError("joints_3d and valid differ in length");
  Skeleton3D s(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    s[i].position = synth::json_vec(pts[i]);
    s[i].valid = valid[i].get<bool>();
    s[i].confidence = j.contains("confidence") ? j.at("confidence").at(i).get<double>() : (s[i].valid ? 1.0 : 0.0);
  }
  return s;
}

inline json keypoints_json(const Keypoints2D& k) {
  json pts = json::array(), det = json::array();
  for (const auto& p : k) {
    pts.push_back({p.u, p.v, p.confidence});
    det.push_back(p.valid);
  }
  return {{"joints_2d", pts}, {"detected", det}};
}

inline Keypoints2D keypoints_from_json(const json& j) {
  const auto& pts = j.at("joints_2d");
  const auto& det = j.at("detected");
  if (pts.size() != det.size()) throw FormatError("joints_2d and detected differ in length");
  Keypoints2D k(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].size() != 3) throw FormatError("joints_2d entries are [u, v, confidence]");
    k[i] = {pts[i][0].get<double>(), pts[i][1].get<double>(), pts[i][2].get<double>(), det[i].get<bool>()};
  }
  return k;
}

inline json normal_json(const std::optional<HandNormal>& n) {
  if (!n) return nullptr;
  return synth::vec_json(n->direction);
}

inline std::optional<HandNormal> normal_from_json(const json& j, HandSide side) {
  if (j.is_null()) return std::nullopt;
  return HandNormal{synth::json_vec(j), side};
}

// ---- samples --------------------------------------------------------------

inline fs::path sample_dir(const fs::path& root, const std::string& id) { return root / "samples" / id; }

inline void write_sample(const fs::path& root, const synth::Sample& s) {
  const fs::path dir = sample_dir(root, s.id);
  json meta = {{"id", s.id},
               {"intrinsics", s.intr},
               {"width", s.depth.width()},
               {"height", s.depth.height()},
               {"joints", s.scores.joints},
               {"units", "meters"},
               {"occluded", s.occluded},
               {"facing_away", s.facing_away},
               {"seed", s.seed}};
  json gt = skeleton_json(s.gt);
  gt.update(keypoints_json(s.detections));
  gt["joint_occluded"] = s.joint_occluded;
  gt["hand_normals"] = {{"left", normal_json(s.left_normal)}, {"right", normal_json(s.right_normal)}};
  write_file_atomic(dir / "meta.json", dump(meta));
  write_file_atomic(dir / "depth.f32", encode_f32(s.depth.values()));
  write_file_atomic(dir / "scores.f32", encode_f32(s.scores.values));
  write_file_atomic(dir / "gt.json", dump(gt));
}

inline synth::Sample read_sample(const fs::path& root, const std::string& id) {
  const fs::path dir = sample_dir(root, id);
  try {
    const json meta = parse_json(dir / "meta.json");
    const json gt = parse_json(dir / "gt.json");
    synth::Sample s;
    s.id = id;
    s.intr = meta.at("intrinsics").get<CameraIntrinsics>();
    s.intr.validate();
    const int w = meta.at("width").get<int>(), h = meta.at("height").get<int>();
    const int J = meta.at("joints").get<int>();
    if (w != s.intr.width || h != s.intr.height) throw FormatError(id + ": image size differs from intrinsics");
    if (J < 1) throw FormatError(id + ": joint count must be positive");
    s.occluded = meta.value("occluded", false);
    s.facing_away = meta.value("facing_away", false);
    s.seed = meta.value("seed", std::uint64_t(0));

    std::vector<float> depth = decode_f32(read_file(dir / "depth.f32"));
    if (depth.size() != std::size_t(w) * std::size_t(h)) throw FormatError(id + ": depth.f32 has wrong size");
    s.depth = DepthMap(w, h, std::move(depth));
    std::vector<float> scores = decode_f32(read_file(dir / "scores.f32"));
    if (scores.size() != std::size_t(w) * std::size_t(h) * std::size_t(J))
      throw FormatError(id + ": scores.f32 has wrong size");
    s.scores = ScoreMap2D(w, h, J);
    s.scores.values = std::move(scores);

    s.gt = skeleton_from_json(gt);
    s.detections = keypoints_from_json(gt);
    if (s.gt.size() != std::size_t(J) || s.detections.size() != std::size_t(J))
      throw FormatError(id + ": gt.json joint count differs from meta.json");
    if (gt.contains("joint_occluded")) s.joint_occluded = gt.at("joint_occluded").get<std::vector<bool>>();
    if (gt.contains("hand_normals")) {
      s.left_normal = normal_from_json(gt.at("hand_normals").value("left", json()), HandSide::kLeft);
      s.right_normal = normal_from_json(gt.at("hand_normals").value("right", json()), HandSide::kRight);
    }
    return s;
  } catch (const json::exception& e) {
    throw FormatError(id + ": " + e.what());
  }
}

inline std::vector<synth::Sample> read_dataset(const fs::path& root) {
  const Manifest m = read_manifest(root);
  std::vector<synth::Sample> out;
  out.reserve(m.ids.size());
  for (const auto& id : m.ids) out.push_back(read_sample(root, id));
  return out;
}

/// Generates `n` samples straight to disk, one at a time.
inline Manifest generate_dataset(const fs::path& root, const synth::SceneConfig& cfg, std::uint64_t seed,
                                 std::size_t n, const synth::BodyModel& model = synth::BodyModel::standard()) {
  cfg.validate();
  Manifest m;
  m.joints = eval::coco_names();
  m.seed = seed;
  m.generator_config = cfg;
  m.config_hash = hex64(fnv1a64(m.generator_config.dump()));
  fs::create_directories(root / "samples");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = synth::sample_id(i);
    write_sample(root, synth::generate_sample(cfg, model, synth::sample_seed(seed, i), id));
    m.ids.push_back(id);
  }
  write_manifest(root, m);
  return m;
}

// ---- predictions ----------------------------------------------------------

inline void write_prediction(const fs::path& dir, const std::string& id, const Skeleton3D& s) {
  write_file_atomic(dir / (id + ".json"), dump(skeleton_json(s)));
}

inline Skeleton3D read_prediction(const fs::path& dir, const std::string& id) {
  try {
    return skeleton_from_json(parse_json(dir / (id + ".json")));
  } catch (const json::exception& e) {
    throw FormatError(id + ".json: " + e.what());
  }
}

}  // namespace rgbdpose::io
