#include <gtest/gtest.h>

#include "ntd/dgp.hpp"
#include "ntd/estimators.hpp"
#include "support.hpp"

using namespace ntd;
using ntd::testing::rel_close;

namespace {

// Slice with every cell set from a function of (gender, group, age).
template <class F>
TwoByTwoSlice slice_from(int d, int dprime, int a, int b, F value) {
  TwoByTwoSlice s;
  s.d = d;
  s.dprime = dprime;
  s.a = a;
  s.b = b;
  for (std::size_t k = 0; k < 8; ++k) {
    CellStats& c = s.cells[k];
    c.gender = s.slot_gender(k);
    c.treat_age = s.slot_group(k);
    c.age = s.slot_age(k);
    c.count = 10;
    c.mean = value(c.gender, c.treat_age, c.age);
    c.sum = c.mean * 10;
  }
  return s;
}

std::vector<DgpSpec> scenario_grid() {
  std::vector<DgpSpec> out;
  for (int i = 0; i < 8; ++i) {
    DgpSpec s = ntd::testing::small_spec(i + 1);
    s.selection = -2.0 + i * 0.6;
    s.rho_mode = i % 2 ? RhoMode::kLifecycle : RhoMode::kConstant;
    s.rho_group_slope = i % 4 == 3 ? 0.004 : 0.0;
    s.effect_mode = i % 3 ? EffectMode::kMultiplicative : EffectMode::kAdditive;
    s.tau_m = -0.02 * (i % 3);
    s.group_level = -300.0 * (i % 4);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Estimators, DeltaApoArithmetic) {
  auto s = slice_from(26, 29, 28, 25, [](Gender, int grp, int age) {
    return grp == 29 && age == 28 ? 120.0 : 100.0;
  });
  EXPECT_DOUBLE_EQ(delta_apo(s, Gender::kFemale), 120.0);
  EXPECT_DOUBLE_EQ(delta_ate(s, Gender::kFemale), -20.0);
}

TEST(Estimators, ConstantPanel) {
  auto s = slice_from(26, 29, 28, 25, [](Gender, int, int) { return 7.5; });
  for (Gender g : kGenders) {
    EXPECT_DOUBLE_EQ(delta_apo(s, g), 7.5);
    EXPECT_DOUBLE_EQ(delta_ate(s, g), 0.0);
    EXPECT_DOUBLE_EQ(delta_theta(s, g), 0.0);
  }
  for (EstimandId id : kAllEstimands) {
    double v = evaluate(s, id);
    if (id == EstimandId::kDidApoF || id == EstimandId::kDidApoM || id == EstimandId::kTdNullApo ||
        id == EstimandId::kNtdNullApo) {
      EXPECT_DOUBLE_EQ(v, 7.5) << estimand_name(id);
    } else {
      EXPECT_NEAR(v, 0.0, 1e-15) << estimand_name(id);
    }
  }
}

TEST(Estimators, EmptyCellNamesTheCell) {
  auto s = slice_from(26, 29, 28, 25, [](Gender, int, int) { return 1.0; });
  s.cells[cell_slot(Gender::kMale, Arm::kControl, Period::kBase)] = CellStats{};
  EXPECT_NO_THROW(delta_apo(s, Gender::kFemale));
  try {
    delta_apo(s, Gender::kMale);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyCell);
    EXPECT_NE(std::string(e.what()).find("(m, d=29, a=25)"), std::string::npos) << e.what();
  }
}

TEST(Estimators, DegenerateDenominator) {
  // delta_APO(f) = 50 + 0 - 50 = 0.
  auto s = slice_from(26, 29, 28, 25, [](Gender g, int grp, int age) {
    if (g == Gender::kFemale && grp == 26 && age == 25) return 0.0;
    if (g == Gender::kFemale && grp == 29 && age == 28) return 50.0;
    return 50.0 + (g == Gender::kMale ? 10.0 : 0.0);
  });
  EXPECT_NTD_ERROR(delta_theta(s, Gender::kFemale), ErrorKind::kDegenerateDenominator);
  EXPECT_NO_THROW(td_gap(s));
}

TEST(Estimators, NamesRoundTrip) {
  EXPECT_EQ(kAllEstimands.size(), 16u);
  for (EstimandId id : kAllEstimands) EXPECT_EQ(parse_estimand(estimand_name(id)), id);
  EXPECT_FALSE(parse_estimand("NOPE").has_value());
}

TEST(Estimators, RescalingEarnings) {
  auto base = [](Gender g, int grp, int age) {
    return 1000.0 + 37.0 * age - 11.0 * grp + (g == Gender::kFemale ? -150.0 + 3.0 * age : 0.0);
  };
  auto s = slice_from(26, 31, 30, 25, base);
  auto t = slice_from(26, 31, 30, 25, [&](Gender g, int grp, int age) { return 3.5 * base(g, grp, age); });
  for (EstimandId id : kAllEstimands) {
    double x = evaluate(s, id), y = evaluate(t, id);
    if (is_normalized(id)) EXPECT_TRUE(rel_close(x, y, 1e-12)) << estimand_name(id);
    else EXPECT_TRUE(rel_close(3.5 * x, y, 1e-12)) << estimand_name(id);
  }
}

TEST(Estimators, GenderSwapFlipsGaps) {
  auto v = [](Gender g, int grp, int age) {
    return 900.0 + 41.0 * age + 7.0 * grp + (g == Gender::kFemale ? 0.2 * age * age : 0.0);
  };
  auto s = slice_from(25, 30, 29, 24, v);
  auto t = slice_from(25, 30, 29, 24, [&](Gender g, int grp, int age) { return v(other(g), grp, age); });
  EXPECT_TRUE(rel_close(td_gap(s), -td_gap(t), 1e-12));
  EXPECT_TRUE(rel_close(ntd_gap(s), -ntd_gap(t), 1e-12));
  EXPECT_TRUE(rel_close(evaluate(s, EstimandId::kDidThetaF), evaluate(t, EstimandId::kDidThetaM), 1e-14));
}

TEST(Estimators, DescriptiveEstimandsLinkToCausalOnes) {
  for (const DgpSpec& spec : scenario_grid()) {
    DgpOracle o(spec);
    CellTable cells = o.population_cells();
    for (int d = spec.group_min; d <= spec.group_max - 2; ++d) {
      for (int a = d; a + 1 <= spec.group_max; ++a) {
        TwoByTwoSlice s = build_two_by_two(cells, d, a);
        for (Gender g : kGenders) {
          double apo_cf = o.apo(g, d, Timing::kNever, a);
          double gamma = o.gamma_pt(g, d, s.dprime, a);
          EXPECT_TRUE(rel_close(delta_apo(s, g), apo_cf - gamma, 1e-10));
          EXPECT_TRUE(rel_close(delta_ate(s, g), o.ate(g, d, a) + gamma, 1e-10));
        }
      }
    }
  }
}

TEST(Estimators, NullForFathersRecoversMothers) {
  // Equal trends across genders (rho = 1) and no effect on fathers: the TD
  // null reconstructs mothers' counterfactual exactly.
  DgpSpec spec = ntd::testing::small_spec();
  spec.rho = 1.0;
  spec.tau_m = 0.0;
  spec.tau_m_slope = 0.0;
  DgpOracle o(spec);
  CellTable cells = o.population_cells();
  TwoByTwoSlice s = build_two_by_two(cells, 26, 29);
  NullTriple td = null_for_fathers(s, NullFramework::kTd);
  EXPECT_TRUE(rel_close(td.apo, o.apo(Gender::kFemale, 26, Timing::kNever, 29), 1e-10));
  EXPECT_TRUE(rel_close(td.theta, o.theta(Gender::kFemale, 26, 29), 1e-10));

  // Proportional trends with rho != 1: the NTD null does the same.
  spec.rho = 0.7;
  DgpOracle o2(spec);
  CellTable cells2 = o2.population_cells();
  TwoByTwoSlice s2 = build_two_by_two(cells2, 26, 29);
  NullTriple ntd = null_for_fathers(s2, NullFramework::kNtd);
  EXPECT_TRUE(rel_close(ntd.apo, o2.apo(Gender::kFemale, 26, Timing::kNever, 29), 1e-10));
  EXPECT_TRUE(rel_close(ntd.theta, o2.theta(Gender::kFemale, 26, 29), 1e-10));
  NullTriple td2 = null_for_fathers(s2, NullFramework::kTd);
  EXPECT_GT(std::abs(td2.apo - o2.apo(Gender::kFemale, 26, Timing::kNever, 29)), 1.0);
}

TEST(Estimators, NtdAltAndRelationIdentity) {
  DgpSpec spec = ntd::testing::small_spec();
  spec.rho = 0.83;
  spec.tau_m = -0.03;
  DgpOracle o(spec);
  CellTable cells = o.population_cells();
  for (int d = 24; d <= 28; ++d) {
    for (int a = d; a <= 31; ++a) {
      TwoByTwoSlice s = build_two_by_two(cells, d, a);
      EXPECT_TRUE(rel_close(ntd_alt(s), o.delta_rho(d, a), 1e-10));
      double tf = o.theta(Gender::kFemale, d, a), tm = o.theta(Gender::kMale, d, a);
      double rcf = o.rho_ratio(d, Timing::kNever, a);
      EXPECT_TRUE(rel_close(relation_identity(tf, tm, rcf), o.delta_rho(d, a), 1e-12));
      GapDecomposition g = decompose_gap(s);
      EXPECT_TRUE(rel_close(g.parenthood, -o.delta_rho(d, a), 1e-10));
      EXPECT_TRUE(rel_close(g.total_gap, g.parenthood + g.other, 1e-14));
    }
  }
}

TEST(Estimators, DecomposeRatiosArithmetic) {
  GapDecomposition g = decompose_ratios(0.726, 0.582);
  EXPECT_NEAR(g.total_gap, 0.418, 1e-12);
  EXPECT_NEAR(g.parenthood, 0.144, 1e-12);
  EXPECT_NEAR(g.other, 0.274, 1e-12);
  EXPECT_NEAR(g.share, 0.144 / 0.418, 1e-12);
  EXPECT_NTD_ERROR(decompose_ratios(0.9, 1.0), ErrorKind::kDegenerateDenominator);
  EXPECT_NTD_ERROR(relation_identity(0.1, -1.0, 0.8), ErrorKind::kDegenerateDenominator);
}

TEST(Estimators, PenaltyGapMatchesOracleUnderTdAssumption) {
  DgpSpec spec = ntd::testing::small_spec();
  spec.rho = 1.0;
  DgpOracle o(spec);
  TwoByTwoSlice s = build_two_by_two(o.population_cells(), 25, 28);
  // Equal trends across genders: the level gap is scaled by mothers' bias factor.
  double bias = o.bias(Gender::kFemale, 25, 29, 28);
  EXPECT_TRUE(rel_close(p_gap(s), bias * o.penalty_p(25, 28), 1e-10));
  EXPECT_GT(std::abs(bias - 1.0), 1e-4);
}
