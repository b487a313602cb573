// rgbdpose: synthetic data, training, prediction, baselines, GT
// triangulation, evaluation and plotting from the command line.
//
// Exit codes: 0 success, 1 usage error, 2 data or format error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rgbdpose/baselines.hpp"
#include "rgbdpose/config.hpp"
#include "rgbdpose/eval.hpp"
#include "rgbdpose/file_util.hpp"
#include "rgbdpose/io/dataset.hpp"
#include "rgbdpose/nn/serialize.hpp"
#include "rgbdpose/nn/train.hpp"
#include "rgbdpose/pipeline.hpp"
#include "rgbdpose/triangulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rgbdpose;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::string profile;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--profile", c.profile, "base profile when no config is given (paper|desk)");
  cmd->add_option("--seed", c.seed, "seed, overrides the config");
  cmd->add_flag("-q,--quiet", c.quiet, "do not echo the resolved config");
}

RunConfig resolve(const Common& c) {
  json j = json::object();
  if (!c.config_path.empty()) {
    try {
      j = json::parse(read_file(c.config_path));
    } catch (const json::exception& e) {
      throw UsageError(c.config_path + ": " + e.what());
    }
  }
  if (!c.profile.empty()) j["defaults"] = c.profile;
  if (c.seed) j["seed"] = *c.seed;
  RunConfig cfg;
  try {
    cfg = config_from_json(j);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const Error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (!c.quiet) std::cout << to_json(cfg).dump(2) << std::endl;
  return cfg;
}

void note(const std::string& msg) { std::cerr << msg << '\n'; }

int cmd_synth(const Common& common, const std::string& out, std::size_t n) {
  const RunConfig cfg = resolve(common);
  const io::Manifest m = io::generate_dataset(out, cfg.scene, cfg.seed, n);
  note("wrote " + std::to_string(m.ids.size()) + " samples to " + out);
  return 0;
}

int cmd_train(const Common& common, const std::string& data, const std::string& out_model,
              const std::string& log_path) {
  const RunConfig cfg = resolve(common);
  const io::Manifest m = io::read_manifest(data);
  if (m.joints.size() != std::size_t(cfg.network.joints))
    throw DataError("dataset has " + std::to_string(m.joints.size()) + " joints, network expects " +
                    std::to_string(cfg.network.joints));
  const auto samples = io::read_dataset(data);
  const auto examples = make_training_set(samples, cfg.grid);
  note(std::to_string(examples.size()) + " of " + std::to_string(samples.size()) + " samples usable for training");
  const nn::TrainResult r = nn::train(examples, cfg.network, cfg.train, [&](const nn::LossRecord& rec) {
    if (!common.quiet && (rec.step % 100 == 0 || rec.step + 1 == cfg.train.iterations))
      std::fprintf(stderr, "step %ld loss %.6g lr %.3g\n", rec.step, rec.loss, rec.lr);
  });
  nn::save_params(out_model, r.params);
  if (!log_path.empty()) {
    std::string csv = "step,loss,lr\n";
    for (const auto& rec : r.log)
      csv += std::to_string(rec.step) + "," + eval::format_double(rec.loss) + "," + eval::format_double(rec.lr) + "\n";
    write_file_atomic(log_path, csv);
  }
  return 0;
}

int cmd_predict(const Common& common, const std::string& data, const std::string& model, const std::string& out) {
  const RunConfig cfg = resolve(common);
  const auto params = nn::load_params(model);
  const io::Manifest m = io::read_manifest(data);
  fs::create_directories(out);
  std::size_t missing = 0;
  for (const auto& id : m.ids) {
    const synth::Sample s = io::read_sample(data, id);
    const Prediction p = predict_frame(params, frame_of(s), cfg.grid);
    missing += p.grid ? 0 : 1;
    io::write_prediction(out, id, p.fused);
  }
  if (missing) note(std::to_string(missing) + " samples had no reference point; their joints are invalid");
  return 0;
}

int cmd_baseline(const Common& common, const std::string& data, const std::string& method, const std::string& pred_in,
                 const std::string& out) {
  resolve(common);
  if (method == "align" && pred_in.empty()) throw UsageError("--method align needs --pred-in");
  const io::Manifest m = io::read_manifest(data);
  fs::create_directories(out);
  for (const auto& id : m.ids) {
    const synth::Sample s = io::read_sample(data, id);
    Skeleton3D result(s.gt.size());
    if (method == "naive") {
      result = naive_lift(s.detections, s.depth, s.intr);
    } else {
      const Skeleton3D pred = io::read_prediction(pred_in, id);
      if (pred.size() != s.gt.size()) throw DataError(id + ": prediction and GT joint counts differ");
      try {
        result = align_similarity(pred, s.gt).aligned;
      } catch (const InsufficientCorrespondences& e) {
        note(id + ": " + e.what());
      } catch (const DegenerateInput& e) {
        note(id + ": " + e.what());
      }
    }
    io::write_prediction(out, id, result);
  }
  return 0;
}

// Camera rig file:
//   {"cameras": [{"name": "c0", "intrinsics": {...}, "rotation": [9 row-major],
//                 "translation": [3]}]}   world -> camera
// Detections file:
//   {"frames": [{"id": "000000",
//                "views": {"c0": {"joints_2d": [[u, v, conf], ...], "detected": [...],
//                                 "hands": {"left": [[u,v,c] wrist, index, pinky], "right": ...}}}}]}
struct Camera {
  CameraIntrinsics intr;
  RigidTransform pose;
};

std::map<std::string, Camera> read_rig(const fs::path& path) {
  const json j = io::parse_json(path);
  std::map<std::string, Camera> rig;
  for (const auto& c : j.at("cameras")) {
    Camera cam;
    cam.intr = c.at("intrinsics").get<CameraIntrinsics>();
    cam.intr.validate();
    const auto r = c.at("rotation").get<std::vector<double>>();
    const auto t = c.at("translation").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw FormatError("camera rotation is 9 numbers, translation 3");
    for (int i = 0; i < 9; ++i) cam.pose.rotation(i / 3, i % 3) = r[std::size_t(i)];
    cam.pose.translation = Vec3(t[0], t[1], t[2]);
    try {
      cam.pose.validate();
    } catch (const InvalidArgument& e) {
      throw FormatError(c.value("name", std::string("?")) + ": " + e.what());
    }
    if (!rig.emplace(c.at("name").get<std::string>(), cam).second) throw FormatError("duplicate camera name");
  }
  return rig;
}

int cmd_triangulate(const Common& common, const std::string& views_path, const std::string& det_path,
                    const std::string& out) {
  resolve(common);
  const auto rig = read_rig(views_path);
  const json det = io::parse_json(det_path);
  fs::create_directories(out);
  std::size_t frames = 0, invalid = 0, total = 0;
  for (const auto& f : det.at("frames")) {
    const std::string id = f.at("id").get<std::string>();
    io::Manifest{io::kFormatVersion, {id}, {}, {}, {}, {}}.validate();
    MultiViewFrame frame;
    std::array<MultiViewFrame, 2> hands;  // left, right: joints wrist, index, pinky
    std::size_t joints = 0;
    for (const auto& [name, v] : f.at("views").items()) {
      const auto it = rig.find(name);
      if (it == rig.end()) throw FormatError(id + ": unknown camera " + name);
      ViewObservation obs{it->second.intr, it->second.pose, io::keypoints_from_json(v)};
      if (joints == 0) joints = obs.detections.size();
      if (obs.detections.size() != joints) throw FormatError(id + ": views disagree on joint count");
      frame.push_back(std::move(obs));
      if (v.contains("hands")) {
        const std::array<const char*, 2> sides{"left", "right"};
        for (std::size_t h = 0; h < 2; ++h) {
          if (!v.at("hands").contains(sides[h])) continue;
          Keypoints2D kp;
          for (const auto& p : v.at("hands").at(sides[h])) {
            if (p.size() != 3) throw FormatError(id + ": hand keypoints are [u, v, confidence]");
            kp.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>(), p[2].get<double>() > 0.0});
          }
          if (kp.size() != 3) throw FormatError(id + ": hands need wrist, index and pinky keypoints");
          hands[h].push_back({it->second.intr, it->second.pose, kp});
        }
      }
    }
    const Skeleton3D s = triangulate_frame(frame, joints);
    json out_j = io::skeleton_json(s);
    json normals = {{"left", nullptr}, {"right", nullptr}};
    for (std::size_t h = 0; h < 2; ++h) {
      const Skeleton3D hk = triangulate_frame(hands[h], 3);
      if (hk.valid_count() != 3) continue;
      const HandSide side = h == 0 ? HandSide::kLeft : HandSide::kRight;
      try {
        normals[h == 0 ? "left" : "right"] =
            io::normal_json(hand_normal_from_keypoints(hk[0].position, hk[1].position, hk[2].position, side));
      } catch (const DegenerateHand&) {
      }
    }
    out_j["hand_normals"] = normals;
    write_file_atomic(fs::path(out) / (id + ".json"), io::dump(out_j));
    ++frames;
    total += s.size();
    invalid += s.size() - s.valid_count();
  }
  note("triangulated " + std::to_string(frames) + " frames, " + std::to_string(invalid) + " of " +
       std::to_string(total) + " joints invalid");
  return 0;
}

int cmd_eval(const Common& common, const std::string& pred, const std::string& gt, const std::string& out,
             const std::optional<std::string>& mask, std::string method) {
  RunConfig cfg = resolve(common);
  if (mask) {
    cfg.eval.excluded_joints.clear();
    std::stringstream ss(*mask);
    for (std::string name; std::getline(ss, name, ',');)
      if (!name.empty()) cfg.eval.excluded_joints.push_back(name);
  }
  const io::Manifest m = io::read_manifest(gt);
  std::vector<eval::EvalSample> samples;
  for (const auto& id : m.ids) {
    const synth::Sample s = io::read_sample(gt, id);
    Skeleton3D p = io::read_prediction(pred, id);
    if (p.size() != s.gt.size())
      throw DataError(id + ": prediction has " + std::to_string(p.size()) + " joints, ground truth " +
                      std::to_string(s.gt.size()));
    samples.push_back({std::move(p), s.gt});
  }
  if (method.empty()) method = fs::path(pred).filename().string();
  for (const auto& name : cfg.eval.excluded_joints)
    if (std::find(m.joints.begin(), m.joints.end(), name) == m.joints.end())
      throw UsageError("unknown joint in mask: " + name);
  const eval::EvalReport r = eval::evaluate(samples, cfg.eval, m.joints, method);
  fs::create_directories(out);
  write_file_atomic(fs::path(out) / "report.json", io::dump(eval::to_json(r)));
  write_file_atomic(fs::path(out) / "pck.csv", eval::to_csv(r));
  char line[160];
  std::snprintf(line, sizeof line, "%s: mean EPE %s cm, AUC %.4f, joint miss %.4f, frame miss %.4f", method.c_str(),
                r.mean_epe_cm ? std::to_string(*r.mean_epe_cm).c_str() : "n/a", r.auc, r.miss.joint, r.miss.frame);
  note(line);
  return 0;
}

int cmd_plot(const Common& common, const std::vector<std::string>& reports, const std::string& out) {
  resolve(common);
  std::vector<eval::EvalReport> rs;
  for (const auto& path : reports) {
    try {
      rs.push_back(eval::report_from_json(io::parse_json(path)));
    } catch (const json::exception& e) {
      throw FormatError(path + ": " + e.what());
    }
  }
  write_file_atomic(out, eval::to_svg(rs));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lift 2D keypoint detections to 3D poses from RGBD input"};
  app.require_subcommand(1);

  Common common;
  std::string out, data, model, log_path, method = "naive", pred_in, views, detections, pred, gt, eval_method;
  std::size_t n = 0;
  std::optional<std::string> mask;
  std::vector<std::string> reports;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, common);
  synth->add_option("--n", n, "number of samples")->required();
  synth->add_option("--out", out, "dataset directory")->required();

  auto* train = app.add_subcommand("train", "train the lifting network");
  add_common(train, common);
  train->add_option("--data", data, "training dataset")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out-model", out, "model file to write")->required();
  train->add_option("--log", log_path, "loss log CSV (step,loss,lr)");

  auto* predict = app.add_subcommand("predict", "predict 3D joints for every sample");
  add_common(predict, common);
  predict->add_option("--data", data, "dataset")->required()->check(CLI::ExistingDirectory);
  predict->add_option("--model", model, "model file")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", out, "prediction directory")->required();

  auto* baseline = app.add_subcommand("baseline", "run a baseline");
  add_common(baseline, common);
  baseline->add_option("--data", data, "dataset")->required()->check(CLI::ExistingDirectory);
  baseline->add_option("--method", method, "naive or align")->check(CLI::IsMember({"naive", "align"}));
  baseline->add_option("--pred-in", pred_in, "predictions to align")->check(CLI::ExistingDirectory);
  baseline->add_option("--out", out, "prediction directory")->required();

  auto* tri = app.add_subcommand("triangulate", "build 3D annotations from calibrated views");
  add_common(tri, common);
  tri->add_option("--views", views, "camera rig JSON")->required()->check(CLI::ExistingFile);
  tri->add_option("--detections", detections, "per-frame 2D detections JSON")->required()->check(CLI::ExistingFile);
  tri->add_option("--out", out, "annotation directory")->required();

  auto* ev = app.add_subcommand("eval", "score predictions against ground truth");
  add_common(ev, common);
  ev->add_option("--pred", pred, "prediction directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--gt", gt, "dataset with ground truth")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--out", out, "report directory")->required();
  ev->add_option("--joints-mask", mask, "comma-separated joints to exclude");
  ev->add_option("--method", eval_method, "method name in the report");

  auto* plot = app.add_subcommand("plot", "overlay PCK curves of several reports");
  add_common(plot, common);
  plot->add_option("--reports", reports, "report.json files")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", out, "SVG file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(common, out, n);
    if (*train) return cmd_train(common, data, out, log_path);
    if (*predict) return cmd_predict(common, data, model, out);
    if (*baseline) return cmd_baseline(common, data, method, pred_in, out);
    if (*tri) return cmd_triangulate(common, views, detections, out);
    if (*ev) return cmd_eval(common, pred, gt, out, mask, eval_method);
    if (*plot) return cmd_plot(common, reports, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
