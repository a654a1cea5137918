#include "ntd/estimators.hpp"

#include <cmath>

namespace ntd {

namespace {

constexpr std::array<std::string_view, 16> kNames{
    "DID_APO_F",   "DID_ATE_F",     "DID_THETA_F",  "DID_APO_M",
    "DID_ATE_M",   "DID_THETA_M",   "TD_GAP",       "NTD_GAP",
    "P_GAP",       "NTD_ALT",       "TD_NULL_APO",  "TD_NULL_ATE",
    "TD_NULL_THETA", "NTD_NULL_APO", "NTD_NULL_ATE", "NTD_NULL_THETA"};

std::string cell_label(Gender g, int group, int age) {
  return std::string("(") + gender_char(g) + ", d=" + std::to_string(group) +
         ", a=" + std::to_string(age) + ")";
}

double mu(const TwoByTwoSlice& s, Gender g, Arm arm, Period p) {
  const CellStats& c = s.cell(g, arm, p);
  if (c.empty()) {
    throw Error(ErrorKind::kEmptyCell,
                "empty cell " + cell_label(g, arm == Arm::kTreated ? s.d : s.dprime,
                                           p == Period::kTarget ? s.a : s.b));
  }
  return c.mean;
}

void check_denominator(const TwoByTwoSlice& s, double den, const std::string& what) {
  double tol = s.denom_tol * slice_scale(s);
  if (!(std::abs(den) > tol) || !std::isfinite(den)) {
    throw Error(ErrorKind::kDegenerateDenominator,
                "degenerate denominator " + what + " = " + std::to_string(den));
  }
}

std::string tag(const char* name, Gender g) { return std::string(name) + "(" + gender_char(g) + ")"; }

}  // namespace

std::string_view estimand_name(EstimandId id) { return kNames[static_cast<std::size_t>(id)]; }

std::optional<EstimandId> parse_estimand(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return static_cast<EstimandId>(i);
  return std::nullopt;
}

bool is_normalized(EstimandId id) {
  switch (id) {
    case EstimandId::kDidThetaF:
    case EstimandId::kDidThetaM:
    case EstimandId::kNtdGap:
    case EstimandId::kPGap:
    case EstimandId::kNtdAlt:
    case EstimandId::kTdNullTheta:
    case EstimandId::kNtdNullTheta:
      return true;
    default:
      return false;
  }
}

double slice_scale(const TwoByTwoSlice& s) {
  double total = 0.0;
  int n = 0;
  for (const auto& c : s.cells) {
    if (c.empty()) continue;
    total += std::abs(c.mean);
    ++n;
  }
  return n == 0 ? 0.0 : total / n;
}

double delta_apo(const TwoByTwoSlice& s, Gender g) {
  return mu(s, g, Arm::kTreated, Period::kBase) +
         (mu(s, g, Arm::kControl, Period::kTarget) - mu(s, g, Arm::kControl, Period::kBase));
}

double delta_ate(const TwoByTwoSlice& s, Gender g) {
  return mu(s, g, Arm::kTreated, Period::kTarget) - delta_apo(s, g);
}

double delta_theta(const TwoByTwoSlice& s, Gender g) {
  double apo = delta_apo(s, g);
  check_denominator(s, apo, tag("delta_APO", g));
  return (mu(s, g, Arm::kTreated, Period::kTarget) - apo) / apo;
}

double td_gap(const TwoByTwoSlice& s) {
  return delta_ate(s, Gender::kFemale) - delta_ate(s, Gender::kMale);
}

double ntd_gap(const TwoByTwoSlice& s) {
  return delta_theta(s, Gender::kFemale) - delta_theta(s, Gender::kMale);
}

double p_gap(const TwoByTwoSlice& s) {
  double apo_f = delta_apo(s, Gender::kFemale);
  check_denominator(s, apo_f, "delta_APO(f)");
  return td_gap(s) / apo_f;
}

double ntd_alt(const TwoByTwoSlice& s) {
  double mu_m = mu(s, Gender::kMale, Arm::kTreated, Period::kTarget);
  check_denominator(s, mu_m, "observed ratio mu(m,d,a)");
  double apo_m = delta_apo(s, Gender::kMale);
  check_denominator(s, apo_m, "counterfactual ratio delta_APO(m)");
  return mu(s, Gender::kFemale, Arm::kTreated, Period::kTarget) / mu_m -
         delta_apo(s, Gender::kFemale) / apo_m;
}

NullTriple null_for_fathers(const TwoByTwoSlice& s, NullFramework framework) {
  const double mu_f = mu(s, Gender::kFemale, Arm::kTreated, Period::kTarget);
  const double apo_f = delta_apo(s, Gender::kFemale);
  NullTriple t;
  if (framework == NullFramework::kTd) {
    t.apo = apo_f + delta_ate(s, Gender::kMale);
  } else {
    double apo_m = delta_apo(s, Gender::kMale);
    check_denominator(s, apo_m, "delta_APO(m)");
    t.apo = apo_f * mu(s, Gender::kMale, Arm::kTreated, Period::kTarget) / apo_m;
  }
  t.ate = mu_f - t.apo;
  check_denominator(s, t.apo, framework == NullFramework::kTd ? "TD-null APO" : "NTD-null APO");
  t.theta = t.ate / t.apo;
  return t;
}

GapDecomposition decompose_ratios(double rho_cf, double rho_obs) {
  GapDecomposition out;
  out.total_gap = 1.0 - rho_obs;
  out.parenthood = rho_cf - rho_obs;
  out.other = out.total_gap - out.parenthood;
  if (!(std::abs(out.total_gap) > 1e-12)) {
    throw Error(ErrorKind::kDegenerateDenominator, "total gender gap is zero");
  }
  out.share = out.parenthood / out.total_gap;
  return out;
}

GapDecomposition decompose_gap(const TwoByTwoSlice& s) {
  double mu_m = mu(s, Gender::kMale, Arm::kTreated, Period::kTarget);
  check_denominator(s, mu_m, "mu(m,d,a)");
  double apo_m = delta_apo(s, Gender::kMale);
  check_denominator(s, apo_m, "delta_APO(m)");
  double rho_obs = mu(s, Gender::kFemale, Arm::kTreated, Period::kTarget) / mu_m;
  double rho_cf = delta_apo(s, Gender::kFemale) / apo_m;
  return decompose_ratios(rho_cf, rho_obs);
}

double relation_identity(double theta_f, double theta_m, double rho_cf) {
  double den = 1.0 + theta_m;
  if (!(std::abs(den) > 1e-12)) {
    throw Error(ErrorKind::kDegenerateDenominator, "1 + theta_m is zero");
  }
  return rho_cf * (theta_f - theta_m) / den;
}

double evaluate(const TwoByTwoSlice& s, EstimandId id) {
  switch (id) {
    case EstimandId::kDidApoF: return delta_apo(s, Gender::kFemale);
    case EstimandId::kDidAteF: return delta_ate(s, Gender::kFemale);
    case EstimandId::kDidThetaF: return delta_theta(s, Gender::kFemale);
    case EstimandId::kDidApoM: return delta_apo(s, Gender::kMale);
    case EstimandId::kDidAteM: return delta_ate(s, Gender::kMale);
    case EstimandId::kDidThetaM: return delta_theta(s, Gender::kMale);
    case EstimandId::kTdGap: return td_gap(s);
    case EstimandId::kNtdGap: return ntd_gap(s);
    case EstimandId::kPGap: return p_gap(s);
    case EstimandId::kNtdAlt: return ntd_alt(s);
    case EstimandId::kTdNullApo: return null_for_fathers(s, NullFramework::kTd).apo;
    case EstimandId::kTdNullAte: return null_for_fathers(s, NullFramework::kTd).ate;
    case EstimandId::kTdNullTheta: return null_for_fathers(s, NullFramework::kTd).theta;
    case EstimandId::kNtdNullApo: return null_for_fathers(s, NullFramework::kNtd).apo;
    case EstimandId::kNtdNullAte: return null_for_fathers(s, NullFramework::kNtd).ate;
    case EstimandId::kNtdNullTheta: return null_for_fathers(s, NullFramework::kNtd).theta;
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown estimand");
}

}  // namespace ntd
