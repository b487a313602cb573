#include <gtest/gtest.h>

#include <random>
#include <regex>
#include <sstream>

#include "rgbdpose/eval.hpp"

using namespace rgbdpose;
using namespace rgbdpose::eval;

namespace {

std::vector<std::optional<double>> errs(std::initializer_list<double> v) { return {v.begin(), v.end()}; }

/// Samples with one joint each, GT at `gt` and prediction displaced by `err` along x.
std::vector<EvalSample> single_joint(const std::vector<std::pair<Vec3, std::optional<double>>>& rows) {
  std::vector<EvalSample> out;
  for (const auto& [gt, err] : rows) {
    EvalSample s{Skeleton3D(1), Skeleton3D(1)};
    s.gt[0] = {gt, true, 1};
    if (err) s.pred[0] = {gt + Vec3(*err, 0, 0), true, 1};
    out.push_back(s);
  }
  return out;
}

/// Tag-balance check with attribute quoting; enough to catch broken output.
bool well_formed_xml(const std::string& doc) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  bool root_seen = false;
  while ((i = doc.find('<', i)) != std::string::npos) {
    const std::size_t end = doc.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = doc.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.starts_with("?") || tag.starts_with("!")) continue;
    if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return false;
    if (tag.starts_with("/")) {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.ends_with("/");
    const std::string name = tag.substr(0, tag.find_first_of(" /"));
    if (stack.empty()) {
      if (root_seen) return false;
      root_seen = true;
    }
    if (!self_closing) stack.push_back(name);
  }
  return root_seen && stack.empty() && !std::regex_search(doc, std::regex("&(?!amp;|lt;|gt;|quot;|apos;)"));
}

}  // namespace

TEST(Epe, Examples) {
  Skeleton3D gt(3), pred(3);
  for (std::size_t j = 0; j < 3; ++j) gt[j] = pred[j] = {Vec3(j, 1, 3), true, 1};
  EXPECT_EQ(epe(pred, gt).mean_cm, 0.0);
  pred[1].position += Vec3(0.03, 0, 0.04);
  const EpeResult r = epe(pred, gt);
  EXPECT_NEAR(*r.per_joint_cm[1], 5.0, 1e-12);
  EXPECT_NEAR(r.mean_cm, 5.0 / 3.0, 1e-12);
  pred[2].valid = false;
  EXPECT_EQ(epe(pred, gt).compared, 2u);
  Skeleton3D none(3);
  EXPECT_THROW(epe(none, gt), NoComparableJoints);
}

TEST(Pck, AllWithinThreshold) {
  const auto e = errs({0.05, 0.05, 0.05});
  const std::vector<double> t{0.0, 0.1};
  EXPECT_EQ(pck_curve(e, t).pck, (std::vector<double>{0.0, 1.0}));
}

TEST(Pck, StrictThresholdAndMissing) {
  std::vector<std::optional<double>> e{0.05, std::nullopt};
  const std::vector<double> t{0.05, 0.06};
  EXPECT_EQ(pck_curve(e, t).pck, (std::vector<double>{0.0, 0.5}));
}

TEST(Auc, ConstantOneIsOne) {
  EXPECT_DOUBLE_EQ(auc({{0.0, 0.1, 0.35, 0.5}, {1, 1, 1, 1}}), 1.0);
}

TEST(Auc, HandComputedExample) {
  const auto e = errs({0.02, 0.06, 0.12});
  const std::vector<double> t{0.0, 0.05, 0.10, 0.15};
  const PckCurve c = pck_curve(e, t);
  ASSERT_EQ(c.pck.size(), 4u);
  EXPECT_NEAR(c.pck[0], 0.0, 1e-15);
  EXPECT_NEAR(c.pck[1], 1.0 / 3, 1e-15);
  EXPECT_NEAR(c.pck[2], 2.0 / 3, 1e-15);
  EXPECT_NEAR(c.pck[3], 1.0, 1e-15);
  // Trapezoids of width 0.05: (0+1/3)/2 + (1/3+2/3)/2 + (2/3+1)/2 = 1.5, times 0.05 over a span of 0.15.
  EXPECT_NEAR(auc(c), 0.5, 1e-9);
}

TEST(Auc, BadThresholds) {
  const auto e = errs({0.1});
  EXPECT_THROW(pck_curve(e, std::vector<double>{0.1}), InvalidArgument);
  EXPECT_THROW(pck_curve(e, std::vector<double>{0.1, 0.1}), InvalidArgument);
  EXPECT_THROW(pck_curve(e, std::vector<double>{0.2, 0.1}), InvalidArgument);
  EXPECT_THROW(pck_curve({}, std::vector<double>{0.1, 0.2}), NoComparableJoints);
}

TEST(Pck, MonotoneAndBoundedFuzz) {
  std::mt19937_64 rng(21);
  std::exponential_distribution<double> ex(10.0);
  std::bernoulli_distribution miss(0.1);
  const auto t = default_thresholds();
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::optional<double>> e;
    const int n = 1 + int(rng() % 60);
    for (int i = 0; i < n; ++i) e.push_back(miss(rng) ? std::nullopt : std::optional<double>(ex(rng)));
    const PckCurve c = pck_curve(e, t);
    for (std::size_t i = 0; i < c.pck.size(); ++i) {
      ASSERT_GE(c.pck[i], 0.0);
      ASSERT_LE(c.pck[i], 1.0);
      if (i > 0) ASSERT_GE(c.pck[i], c.pck[i - 1]);
    }
    const double a = auc(c);
    ASSERT_GE(a, 0.0);
    ASSERT_LE(a, 1.0);
    // Shrinking every error can only raise the curve.
    auto better = e;
    for (auto& x : better)
      if (x) *x *= 0.5;
    const PckCurve cb = pck_curve(better, t);
    for (std::size_t i = 0; i < c.pck.size(); ++i) ASSERT_GE(cb.pck[i], c.pck[i]);
  }
}

TEST(Auc, GridRefinementIsStable) {
  std::mt19937_64 rng(5);
  std::gamma_distribution<double> g(2.0, 0.05);
  std::vector<std::optional<double>> e;
  for (int i = 0; i < 20000; ++i) e.emplace_back(g(rng));
  std::vector<double> fine;
  for (int i = 0; i <= 100; ++i) fine.push_back(0.005 * i);
  EXPECT_LT(std::abs(auc(pck_curve(e, default_thresholds())) - auc(pck_curve(e, fine))), 1e-3);
}

TEST(DistanceBins, AllInOneBin) {
  const auto s = single_joint({{Vec3(0, 0, 2.5), 0.01}, {Vec3(0, 0, 2.2), 0.02}});
  const auto bins = pck_by_distance(s, default_distance_edges(), 0.1);
  for (const auto& b : bins) {
    if (b.lo == 2.0) {
      EXPECT_EQ(b.count, 2u);
      EXPECT_EQ(b.pck, 1.0);
    } else {
      EXPECT_FALSE(b.pck.has_value());
    }
  }
}

TEST(DistanceBins, RangeLimitedPredictor) {
  const auto s = single_joint({{Vec3(0, 0, 3.5), 0.0}, {Vec3(0, 0, 4.5), std::nullopt}, {Vec3(0, 0, 6.5), std::nullopt}});
  const auto bins = pck_by_distance(s, default_distance_edges(), 0.1);
  for (const auto& b : bins) {
    if (b.lo == 3.0) EXPECT_EQ(b.pck, 1.0);
    if (b.lo == 4.0 || b.lo == 6.0) EXPECT_EQ(b.pck, 0.0);
  }
}

TEST(DistanceBins, HalfOpenEdgesAndEmptyInput) {
  const auto s = single_joint({{Vec3(0, 0, 3.0), 0.0}});
  const auto bins = pck_by_distance(s, default_distance_edges(), 0.1);
  EXPECT_EQ(bins[2].count, 0u);
  EXPECT_EQ(bins[3].count, 1u);
  for (const auto& b : pck_by_distance({}, default_distance_edges(), 0.1)) EXPECT_FALSE(b.pck);
}

TEST(MissRate, Examples) {
  auto s = single_joint({{Vec3(0, 0, 3), 0.0}, {Vec3(0, 0, 3), 0.0}});
  EXPECT_EQ(miss_rate(s).joint, 0.0);
  EXPECT_EQ(miss_rate(s).frame, 0.0);
  s[1].pred[0].valid = false;
  EXPECT_EQ(miss_rate(s).joint, 0.5);
  EXPECT_EQ(miss_rate(s).frame, 0.5);
}

TEST(Evaluate, PooledEpeAndMask) {
  std::vector<EvalSample> s(2, {Skeleton3D(2), Skeleton3D(2)});
  for (auto& x : s)
    for (std::size_t j = 0; j < 2; ++j) x.gt[j] = x.pred[j] = {Vec3(0, 0, 3), true, 1};
  s[0].pred[0].position.x() += 0.1;
  s[1].pred[1].valid = false;
  s[1].pred[0].position.x() += 0.4;
  EvalOptions opt;
  const EvalReport r = evaluate(s, opt, {"a", "b"}, "m");
  // Pooled over three compared joints: (10 + 0 + 40) / 3.
  EXPECT_NEAR(*r.mean_epe_cm, 50.0 / 3.0, 1e-12);
  EXPECT_NEAR(*r.per_joint_epe_cm[0], 25.0, 1e-12);
  EXPECT_EQ(r.per_joint_epe_cm[1], 0.0);
  EXPECT_NEAR(r.miss.joint, 0.25, 1e-15);
  opt.excluded_joints = {"a"};
  const EvalReport m = evaluate(s, opt, {"a", "b"}, "m");
  EXPECT_FALSE(m.per_joint_epe_cm[0]);
  EXPECT_EQ(*m.mean_epe_cm, 0.0);
  opt.excluded_joints = {"nope"};
  EXPECT_THROW(evaluate(s, opt, {"a", "b"}), InvalidArgument);
  EXPECT_THROW(evaluate(s, EvalOptions{}, {"a"}), InvalidArgument);
}

TEST(Evaluate, NothingPredicted) {
  auto s = single_joint({{Vec3(0, 0, 3), std::nullopt}});
  const EvalReport r = evaluate(s, EvalOptions{}, {"a"});
  EXPECT_FALSE(r.mean_epe_cm);
  EXPECT_EQ(r.auc, 0.0);
  EXPECT_EQ(r.miss.frame, 1.0);
}

class ReportOutput : public ::testing::Test {
 protected:
  EvalReport report() {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0, 0.05);
    std::vector<EvalSample> s(5, {Skeleton3D(18), Skeleton3D(18)});
    for (auto& x : s)
      for (std::size_t j = 0; j < 18; ++j) {
        x.gt[j] = {Vec3(n(rng), n(rng), 2 + 4 * std::abs(n(rng))), true, 1};
        x.pred[j] = {x.gt[j].position + Vec3(n(rng), n(rng), n(rng)), j != 3, 1};
      }
    EvalOptions opt;
    opt.excluded_joints = {"r_eye"};
    return evaluate(s, opt, coco_names(), "a<b>&\"c\"");
  }
};

TEST_F(ReportOutput, JsonRoundTrip) {
  const EvalReport r = report();
  const EvalReport back = report_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_TRUE(back == r);
}

TEST_F(ReportOutput, CsvRowsMatchThresholds) {
  const EvalReport r = report();
  std::istringstream in(to_csv(r));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "threshold_m,pck");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    ASSERT_NE(comma, std::string::npos);
    EXPECT_EQ(std::stod(line.substr(0, comma)), r.pck.thresholds[rows]);
    EXPECT_EQ(std::stod(line.substr(comma + 1)), r.pck.pck[rows]);
    ++rows;
  }
  EXPECT_EQ(rows, r.pck.thresholds.size());
}

TEST_F(ReportOutput, SvgIsWellFormed) {
  std::vector<EvalReport> rs{report(), report()};
  rs[1].method = "second";
  const std::string svg = to_svg(rs);
  EXPECT_TRUE(well_formed_xml(svg));
  EXPECT_NE(svg.find("a&lt;b&gt;&amp;&quot;c&quot;"), std::string::npos);
  EXPECT_NE(svg.find("second"), std::string::npos);
  EXPECT_TRUE(well_formed_xml(to_svg({})));
  EXPECT_FALSE(well_formed_xml("<svg><g></svg>"));
}
