#pragma once

// Pose metrics: end point error, PCK curves and their normalized area,
// PCK binned by camera distance, miss rates, and report writers.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "rgbdpose/errors.hpp"
#include "rgbdpose/skeleton.hpp"

namespace rgbdpose::eval {

struct EvalSample {
  Skeleton3D pred;
  Skeleton3D gt;
};

struct EpeResult {
  /// Distance per joint in cm; empty where the joint is not valid in both.
  std::vector<std::optional<double>> per_joint_cm;
  double mean_cm = 0.0;
  std::size_t compared = 0;
};

inline EpeResult epe(const Skeleton3D& pred, const Skeleton3D& gt) {
  if (pred.size() != gt.size()) throw InvalidArgument("skeletons have different joint counts");
  EpeResult r;
  r.per_joint_cm.resize(gt.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (!pred[j].valid || !gt[j].valid) continue;
    const double d = 100.0 * (pred[j].position - gt[j].position).norm();
    r.per_joint_cm[j] = d;
    sum += d;
    ++r.compared;
  }
  if (r.compared == 0) throw NoComparableJoints("no joint is valid in both skeletons");
  r.mean_cm = sum / double(r.compared);
  return r;
}

/// `true` entries are left out of every metric.
using JointMask = std::vector<bool>;

inline bool masked(const JointMask& mask, std::size_t j) { return j < mask.size() && mask[j]; }

inline void check_sample(const EvalSample& s) {
  if (s.pred.size() != s.gt.size())
    throw InvalidArgument("prediction has " + std::to_string(s.pred.size()) + " joints, ground truth " +
                          std::to_string(s.gt.size()));
}

/// Error in meters of every GT-valid joint; empty for a missing prediction.
inline std::vector<std::optional<double>> joint_errors(std::span<const EvalSample> samples,
                                                       const JointMask& mask = {}) {
  std::vector<std::optional<double>> out;
  for (const auto& s : samples) {
    check_sample(s);
    for (std::size_t j = 0; j < s.gt.size(); ++j) {
      if (!s.gt[j].valid || masked(mask, j)) continue;
      if (s.pred[j].valid)
        out.emplace_back((s.pred[j].position - s.gt[j].position).norm());
      else
        out.emplace_back(std::nullopt);
    }
  }
  return out;
}

struct PckCurve {
  std::vector<double> thresholds;  // meters
  std::vector<double> pck;
};

inline void check_thresholds(std::span<const double> t) {
  if (t.size() < 2) throw InvalidArgument("need at least two thresholds");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) throw InvalidArgument("thresholds must be finite");
    if (i > 0 && !(t[i] > t[i - 1])) throw InvalidArgument("thresholds must be strictly increasing");
  }
}

/// Fraction of joints with error strictly below each threshold; missing
/// predictions are never correct.
inline PckCurve pck_curve(std::span<const std::optional<double>> errors, std::span<const double> thresholds) {
  check_thresholds(thresholds);
  if (errors.empty()) throw NoComparableJoints("no ground-truth joints to score");
  PckCurve c{{thresholds.begin(), thresholds.end()}, {}};
  for (double t : thresholds) {
    std::size_t hit = 0;
    for (const auto& e : errors) hit += e && *e < t ? 1 : 0;
    c.pck.push_back(double(hit) / double(errors.size()));
  }
  return c;
}

/// Trapezoid area under the curve divided by the threshold span.
inline double auc(const PckCurve& c) {
  check_thresholds(c.thresholds);
  if (c.pck.size() != c.thresholds.size()) throw InvalidArgument("curve size mismatch");
  double area = 0.0;
  for (std::size_t i = 1; i < c.pck.size(); ++i)
    area += 0.5 * (c.pck[i] + c.pck[i - 1]) * (c.thresholds[i] - c.thresholds[i - 1]);
  return area / (c.thresholds.back() - c.thresholds.front());
}

/// 0, 0.01, ..., 0.5 m.
inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 50; ++i) t.push_back(i * 0.01);
  return t;
}

inline std::vector<double> default_distance_edges() { return {0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0}; }

inline constexpr double kDefaultDistanceThreshold = 0.1;

struct DistanceBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  /// Empty when no ground-truth joint falls in the bin.
  std::optional<double> pck;
};

/// Joints are binned by the norm of their ground-truth position; bins are
/// half-open [lo, hi).
inline std::vector<DistanceBin> pck_by_distance(std::span<const EvalSample> samples,
                                                std::span<const double> edges, double threshold,
                                                const JointMask& mask = {}) {
  check_thresholds(edges);
  std::vector<DistanceBin> bins;
  std::vector<std::size_t> hits(edges.size() - 1, 0);
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) bins.push_back({edges[b], edges[b + 1], 0, {}});
  for (const auto& s : samples) {
    check_sample(s);
    for (std::size_t j = 0; j < s.gt.size(); ++j) {
      if (!s.gt[j].valid || masked(mask, j)) continue;
      const double dist = s.gt[j].position.norm();
      const auto it = std::upper_bound(edges.begin(), edges.end(), dist);
      if (it == edges.begin() || it == edges.end()) continue;
      const auto b = std::size_t(it - edges.begin() - 1);
      ++bins[b].count;
      if (s.pred[j].valid && (s.pred[j].position - s.gt[j].position).norm() < threshold) ++hits[b];
    }
  }
  for (std::size_t b = 0; b < bins.size(); ++b)
    if (bins[b].count > 0) bins[b].pck = double(hits[b]) / double(bins[b].count);
  return bins;
}

struct MissRates {
  double joint = 0.0;  // GT-valid joints without a prediction
  double frame = 0.0;  // frames with no predicted joint at all
};

inline MissRates miss_rate(std::span<const EvalSample> samples, const JointMask& mask = {}) {
  std::size_t joints = 0, missed = 0, frames = 0, missed_frames = 0;
  for (const auto& s : samples) {
    check_sample(s);
    bool any = false;
    for (std::size_t j = 0; j < s.gt.size(); ++j) {
      if (masked(mask, j)) continue;
      any = any || s.pred[j].valid;
      if (!s.gt[j].valid) continue;
      ++joints;
      missed += s.pred[j].valid ? 0 : 1;
    }
    ++frames;
    missed_frames += any ? 0 : 1;
  }
  MissRates r;
  if (joints > 0) r.joint = double(missed) / double(joints);
  if (frames > 0) r.frame = double(missed_frames) / double(frames);
  return r;
}

// ---------------------------------------------------------------------------
// Reports

struct EvalReport {
  std::string method;
  std::size_t sample_count = 0;
  std::vector<std::string> joint_names;
  std::vector<std::string> excluded_joints;
  std::vector<std::optional<double>> per_joint_epe_cm;
  std::optional<double> mean_epe_cm;
  PckCurve pck;
  double auc = 0.0;
  double distance_threshold = kDefaultDistanceThreshold;
  std::vector<DistanceBin> pck_by_distance;
  MissRates miss;

  bool operator==(const EvalReport& o) const {
    auto bins_eq = [](const std::vector<DistanceBin>& a, const std::vector<DistanceBin>& b) {
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].lo != b[i].lo || a[i].hi != b[i].hi || a[i].count != b[i].count || a[i].pck != b[i].pck)
          return false;
      return true;
    };
    return method == o.method && sample_count == o.sample_count && joint_names == o.joint_names &&
           excluded_joints == o.excluded_joints && per_joint_epe_cm == o.per_joint_epe_cm &&
           mean_epe_cm == o.mean_epe_cm && pck.thresholds == o.pck.thresholds && pck.pck == o.pck.pck &&
           auc == o.auc && distance_threshold == o.distance_threshold &&
           bins_eq(pck_by_distance, o.pck_by_distance) && miss.joint == o.miss.joint &&
           miss.frame == o.miss.frame;
  }
};

struct EvalOptions {
  std::vector<double> thresholds = default_thresholds();
  std::vector<double> distance_edges = default_distance_edges();
  double distance_threshold = kDefaultDistanceThreshold;
  std::vector<std::string> excluded_joints;
};

inline JointMask make_mask(const std::vector<std::string>& excluded, std::span<const std::string> names) {
  JointMask mask(names.size(), false);
  for (const auto& e : excluded) {
    const auto it = std::find(names.begin(), names.end(), e);
    if (it == names.end()) throw InvalidArgument("unknown joint in mask: " + e);
    mask[std::size_t(it - names.begin())] = true;
  }
  return mask;
}

inline std::vector<std::string> coco_names() {
  return {kCocoJointNames.begin(), kCocoJointNames.end()};
}

/// EPE is pooled over every joint valid in both skeletons across samples.
inline EvalReport evaluate(std::span<const EvalSample> samples, const EvalOptions& opt,
                           std::vector<std::string> joint_names = coco_names(), std::string method = {}) {
  for (const auto& s : samples) {
    check_sample(s);
    if (s.gt.size() != joint_names.size())
      throw InvalidArgument("sample has " + std::to_string(s.gt.size()) + " joints, expected " +
                            std::to_string(joint_names.size()));
  }
  const JointMask mask = make_mask(opt.excluded_joints, joint_names);
  EvalReport r;
  r.method = std::move(method);
  r.sample_count = samples.size();
  r.joint_names = std::move(joint_names);
  r.excluded_joints = opt.excluded_joints;
  r.distance_threshold = opt.distance_threshold;

  const std::size_t J = r.joint_names.size();
  std::vector<double> sums(J, 0.0);
  std::vector<std::size_t> counts(J, 0);
  for (const auto& s : samples)
    for (std::size_t j = 0; j < J; ++j)
      if (!masked(mask, j) && s.pred[j].valid && s.gt[j].valid) {
        sums[j] += 100.0 * (s.pred[j].position - s.gt[j].position).norm();
        ++counts[j];
      }
  double total = 0.0;
  std::size_t n = 0;
  r.per_joint_epe_cm.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    if (counts[j] == 0) continue;
    r.per_joint_epe_cm[j] = sums[j] / double(counts[j]);
    total += sums[j];
    n += counts[j];
  }
  if (n > 0) r.mean_epe_cm = total / double(n);

  const auto errors = joint_errors(samples, mask);
  if (errors.empty()) {
    check_thresholds(opt.thresholds);
    r.pck = {opt.thresholds, std::vector<double>(opt.thresholds.size(), 0.0)};
  } else {
    r.pck = pck_curve(errors, opt.thresholds);
  }
  r.auc = auc(r.pck);
  r.pck_by_distance = pck_by_distance(samples, opt.distance_edges, opt.distance_threshold, mask);
  r.miss = miss_rate(samples, mask);
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json per_joint = json::array();
  for (const auto& v : r.per_joint_epe_cm) per_joint.push_back(opt(v));
  json bins = json::array();
  for (const auto& b : r.pck_by_distance)
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"pck", opt(b.pck)}, {"empty", !b.pck}});
  return {{"method", r.method},
          {"sample_count", r.sample_count},
          {"joint_names", r.joint_names},
          {"excluded_joints", r.excluded_joints},
          {"per_joint_epe_cm", per_joint},
          {"mean_epe_cm", opt(r.mean_epe_cm)},
          {"pck", {{"thresholds_m", r.pck.thresholds}, {"values", r.pck.pck}}},
          {"auc", r.auc},
          {"auc_range_m", {r.pck.thresholds.front(), r.pck.thresholds.back()}},
          {"distance_threshold_m", r.distance_threshold},
          {"pck_by_distance", bins},
          {"miss_rate", {{"joint", r.miss.joint}, {"frame", r.miss.frame}}}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  auto opt = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  EvalReport r;
  r.method = j.at("method").get<std::string>();
  r.sample_count = j.at("sample_count").get<std::size_t>();
  r.joint_names = j.at("joint_names").get<std::vector<std::string>>();
  r.excluded_joints = j.at("excluded_joints").get<std::vector<std::string>>();
  for (const auto& v : j.at("per_joint_epe_cm")) r.per_joint_epe_cm.push_back(opt(v));
  r.mean_epe_cm = opt(j.at("mean_epe_cm"));
  r.pck.thresholds = j.at("pck").at("thresholds_m").get<std::vector<double>>();
  r.pck.pck = j.at("pck").at("values").get<std::vector<double>>();
  r.auc = j.at("auc").get<double>();
  r.distance_threshold = j.at("distance_threshold_m").get<double>();
  for (const auto& b : j.at("pck_by_distance"))
    r.pck_by_distance.push_back(
        {b.at("lo").get<double>(), b.at("hi").get<double>(), b.at("count").get<std::size_t>(), opt(b.at("pck"))});
  r.miss.joint = j.at("miss_rate").at("joint").get<double>();
  r.miss.frame = j.at("miss_rate").at("frame").get<double>();
  return r;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Header line plus one row per threshold.
inline std::string to_csv(const EvalReport& r) {
  std::string out = "threshold_m,pck\n";
  for (std::size_t i = 0; i < r.pck.thresholds.size(); ++i)
    out += format_double(r.pck.thresholds[i]) + "," + format_double(r.pck.pck[i]) + "\n";
  return out;
}

namespace detail {

inline std::string auc_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Line plot of PCK over threshold, one polyline per report.
inline std::string to_svg(std::span<const EvalReport> reports) {
  constexpr double W = 640, H = 440, L = 70, R = 170, T = 30, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  double tmin = 0.0, tmax = 1.0;
  bool first = true;
  for (const auto& r : reports) {
    if (r.pck.thresholds.empty()) continue;
    tmin = first ? r.pck.thresholds.front() : std::min(tmin, r.pck.thresholds.front());
    tmax = first ? r.pck.thresholds.back() : std::max(tmax, r.pck.thresholds.back());
    first = false;
  }
  if (!(tmax > tmin)) tmax = tmin + 1.0;
  auto X = [&](double t) { return L + (t - tmin) / (tmax - tmin) * pw; };
  auto Y = [&](double p) { return T + (1.0 - p) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ostringstream s;
  s.precision(6);
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
    << W << " " << H << "\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
    << "<g stroke=\"black\" stroke-width=\"1\">\n"
    << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph << "\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph << "\"/>\n"
    << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double t = tmin + (tmax - tmin) * i / 5.0;
    const double p = i / 5.0;
    s << "<text x=\"" << X(t) << "\" y=\"" << T + ph + 16 << "\" text-anchor=\"middle\">" << t << "</text>\n"
      << "<text x=\"" << L - 6 << "\" y=\"" << Y(p) + 4 << "\" text-anchor=\"end\">" << p << "</text>\n";
  }
  s << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 16
    << "\" text-anchor=\"middle\" font-size=\"13\">threshold (m)</text>\n"
    << "<text x=\"18\" y=\"" << T + ph / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
    << T + ph / 2 << ")\">PCK</text>\n</g>\n";
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k];
    const char* color = colors[k % 6];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < r.pck.thresholds.size(); ++i)
      s << (i ? " " : "") << X(r.pck.thresholds[i]) << "," << Y(r.pck.pck[i]);
    s << "\"/>\n";
    const double ly = T + 16 + 18.0 * double(k);
    const std::string label = (r.method.empty() ? "method " + std::to_string(k + 1) : r.method) +
                              " (AUC " + detail::auc_label(r.auc) + ")";
    s << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 32 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << L + pw + 36 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
      << detail::xml_escape(label) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace rgbdpose::eval
