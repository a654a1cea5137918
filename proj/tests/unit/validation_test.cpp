#include <gtest/gtest.h>

#include "ntd/dgp.hpp"
#include "ntd/estimators.hpp"
#include "ntd/validation.hpp"
#include "support.hpp"

using namespace ntd;

TEST(Validation, CriticalValue) {
  EXPECT_NEAR(normal_critical_value(0.05), 1.959963984540054, 1e-12);
  EXPECT_NTD_ERROR(normal_critical_value(0.0), ErrorKind::kInvalidArgument);
}

TEST(Validation, SuiteHasSeventyTwoRows) {
  Generated gen = generate(ntd::testing::small_spec());
  auto suite = pretrend_suite(gen.data, 24);
  ASSERT_EQ(suite.size(), 72u);
  std::size_t feasible = 0;
  for (const auto& r : suite) {
    feasible += r.feasible;
    EXPECT_EQ(r.b, 23);
    EXPECT_EQ(r.a, 24 + r.e);
  }
  EXPECT_EQ(feasible, 72u);
  EXPECT_EQ(suite.front().framework, Framework::kDidF);
  EXPECT_EQ(suite.back().framework, Framework::kNtd);
  EXPECT_EQ(suite.back().dprime, 30);
}

TEST(Validation, SuiteKeepsInfeasibleElements) {
  DgpSpec s = ntd::testing::small_spec();
  s.group_max = 27;
  Generated gen = generate(s);
  auto suite = pretrend_suite(gen.data, 24);
  ASSERT_EQ(suite.size(), 72u);
  std::size_t infeasible = 0;
  for (const auto& r : suite) {
    if (!r.feasible) {
      ++infeasible;
      EXPECT_FALSE(r.reason.empty());
      EXPECT_TRUE(std::isnan(r.estimate));
    }
  }
  EXPECT_EQ(infeasible, 4u * 3u * 3u);  // d' = 28, 29, 30 absent
}

TEST(Validation, ThreadsDoNotChangeResults) {
  Generated gen = generate(ntd::testing::small_spec(3));
  ValidationOptions one, many;
  many.threads = 4;
  auto a = pretrend_suite(gen.data, 25, 5, {-4, -3, -2}, one);
  auto b = pretrend_suite(gen.data, 25, 5, {-4, -3, -2}, many);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].estimate, b[i].estimate);
    EXPECT_EQ(a[i].se, b[i].se);
    EXPECT_EQ(a[i].pass, b[i].pass);
  }
}

TEST(Validation, BonferroniOnlyWidens) {
  Generated gen = generate(ntd::testing::small_spec(8));
  ValidationOptions plain, bonf;
  bonf.bonferroni = true;
  auto a = pretrend_suite(gen.data, 25, 5, {-4, -3, -2}, plain);
  auto b = pretrend_suite(gen.data, 25, 5, {-4, -3, -2}, bonf);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].pass) EXPECT_TRUE(b[i].pass);
  }
}

TEST(Validation, PretrendWindowErrors) {
  Generated gen = generate(ntd::testing::small_spec());
  EXPECT_NTD_ERROR(pretrend_test(gen.data, Framework::kNtd, 26, 28, 0), ErrorKind::kInvalidWindow);
  EXPECT_NTD_ERROR(pretrend_test(gen.data, Framework::kNtd, 26, 28, -1), ErrorKind::kInvalidWindow);
  EXPECT_NTD_ERROR(pretrend_test(gen.data, Framework::kNtd, 22, 28, -3), ErrorKind::kInvalidWindow);
  ValidationResult r = pretrend_test(gen.data, Framework::kTd, 26, 28, -3);
  EXPECT_EQ(r.a, 23);
  EXPECT_EQ(r.b, 25);
  EXPECT_GT(r.se, 0.0);
  EXPECT_NEAR(r.z, r.estimate / r.se, 1e-12);
}

TEST(Validation, ProportionalTrendsGiveZeroPopulationPretrend) {
  for (RhoMode mode : {RhoMode::kConstant, RhoMode::kLifecycle}) {
    DgpSpec s = ntd::testing::small_spec();
    s.rho_mode = mode;
    s.rho_curvature = 0.002;
    DgpOracle o(s);
    CellTable cells = o.population_cells();
    for (int d = 25; d <= 28; ++d) {
      for (int e : {-4, -3, -2}) {
        TwoByTwoSlice slice = make_slice(cells, d, d + 2, d + e, d - 1);
        double v = ntd_gap(slice);
        double gamma = o.gamma_pt(Gender::kMale, d, d + 2, d + e, d - 1);
        if (mode == RhoMode::kConstant) {
          EXPECT_NEAR(v, 0.0, 1e-12);
        } else if (std::abs(gamma) > 1e-6) {
          EXPECT_GT(std::abs(v), 1e-6) << d << " " << e;
        }
      }
    }
  }
}

TEST(Validation, GateRequiresEveryNtdTest) {
  std::vector<ValidationResult> suite(3);
  for (auto& r : suite) {
    r.d = 24;
    r.framework = Framework::kNtd;
  }
  suite[1].feasible = false;
  suite[1].pass = false;
  GateSummary g = ntd_gate(suite, 24);
  EXPECT_EQ(g.ntd_tests, 2u);
  EXPECT_TRUE(g.plausible);
  suite[2].pass = false;
  EXPECT_FALSE(ntd_gate(suite, 24).plausible);
  EXPECT_FALSE(ntd_gate(suite, 25).plausible);
}

TEST(Validation, RhoSeriesIsRatioOfMeans) {
  Generated gen = generate(ntd::testing::small_spec(12));
  auto series = rho_pretrend_series(gen.data, {26, 28}, {20, 30});
  std::size_t expected = (26 - 20) + (27 - 20) + (28 - 20);
  ASSERT_EQ(series.size(), expected);
  for (const RhoPoint& p : series) {
    ASSERT_TRUE(p.ok);
    EXPECT_LT(p.a, p.d);
    double r = cell_mean(gen.data, Gender::kFemale, p.d, p.a).mean /
               cell_mean(gen.data, Gender::kMale, p.d, p.a).mean;
    EXPECT_DOUBLE_EQ(p.ratio, r);
    EXPECT_GT(p.se, 0.0);
    EXPECT_NEAR(p.ratio, 0.8, 12 * p.se + 0.01);
  }
}
