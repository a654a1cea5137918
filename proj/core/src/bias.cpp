#include "ntd/bias.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ntd/estimators.hpp"

namespace ntd {

namespace {

bool degenerate(double den, double scale) {
  return !(std::abs(den) > 1e-12 * std::max(1.0, scale));
}

double observed_mean(const PanelDataset& data, Gender g, int d, int a) {
  CellStats c = cell_mean(data, g, d, a);
  if (c.empty()) {
    throw Error(ErrorKind::kEmptyCell, std::string("empty cell (") + gender_char(g) +
                                           ", d=" + std::to_string(d) + ", a=" + std::to_string(a) + ")");
  }
  return c.mean;
}

double observed_rho(const PanelDataset& data, int d, int a) {
  double f = observed_mean(data, Gender::kFemale, d, a);
  double m = observed_mean(data, Gender::kMale, d, a);
  if (degenerate(m, std::abs(f))) {
    throw Error(ErrorKind::kDegenerateDenominator,
                "male mean is zero at d=" + std::to_string(d) + ", a=" + std::to_string(a));
  }
  return f / m;
}

}  // namespace

double bias_factor(double apo_cf, double gamma_pt) {
  double den = apo_cf - gamma_pt;
  if (degenerate(den, std::max(std::abs(apo_cf), std::abs(gamma_pt)))) {
    throw Error(ErrorKind::kDegenerateDenominator, "APO_cf equals gamma_PT");
  }
  return apo_cf / den;
}

BiasGridRow bias_corrected_gap(const TwoByTwoSlice& s, double theta_m) {
  if (std::abs(1.0 + theta_m) <= 1e-12) {
    throw Error(ErrorKind::kDegenerateDenominator, "assumed theta_m equals -1");
  }
  BiasGridRow r;
  r.d = s.d;
  r.dprime = s.dprime;
  r.a = s.a;
  r.assumed_theta_m = theta_m;
  r.conventional = ntd_gap(s);  // surfaces empty and degenerate cells first
  double mu = s.cell(Gender::kMale, Arm::kTreated, Period::kTarget).mean;
  if (!(std::abs(mu) > s.denom_tol * slice_scale(s))) {
    throw Error(ErrorKind::kDegenerateDenominator, "male treated mean at the target age is zero");
  }
  r.correction_factor = delta_apo(s, Gender::kMale) * (1.0 + theta_m) / mu;
  r.corrected = r.conventional * r.correction_factor;
  return r;
}

CellGradient bias_corrected_gradient(const TwoByTwoSlice& s, double theta_m) {
  BiasGridRow r = bias_corrected_gap(s, theta_m);
  CellGradient g = influence_gradient(s, EstimandId::kNtdGap);
  for (double& v : g) v *= r.correction_factor;
  const Gender m = Gender::kMale;
  double mu = s.cell(m, Arm::kTreated, Period::kTarget).mean;
  double apo = delta_apo(s, m);
  double k = (1.0 + theta_m) * r.conventional;
  g[cell_slot(m, Arm::kTreated, Period::kBase)] += k / mu;
  g[cell_slot(m, Arm::kControl, Period::kTarget)] += k / mu;
  g[cell_slot(m, Arm::kControl, Period::kBase)] -= k / mu;
  g[cell_slot(m, Arm::kTreated, Period::kTarget)] -= k * apo / (mu * mu);
  return g;
}

std::vector<BiasGridRow> bias_grid(const TwoByTwoSlice& s, const std::vector<double>& grid) {
  std::vector<BiasGridRow> out;
  out.reserve(grid.size());
  for (double t : grid) out.push_back(bias_corrected_gap(s, t));
  return out;
}

std::vector<BiasGridRow> bias_grid(const PanelDataset& data, const TwoByTwoSlice& s,
                                   const std::vector<double>& grid) {
  std::vector<BiasGridRow> out = bias_grid(s, grid);
  std::vector<CellGradient> grads;
  for (double t : grid) grads.push_back(bias_corrected_gradient(s, t));
  ClusterWorkspace ws;
  std::vector<double> se = slice_cluster_ses(data, s, ws, grads);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].se = se[i];
  return out;
}

TdDecomposition td_decomposition(const std::array<double, 4>& rho,
                                 const std::array<double, 4>& apo_m) {
  static constexpr double kSign[4] = {1.0, -1.0, -1.0, 1.0};
  TdDecomposition out;
  for (int i = 0; i < 4; ++i) {
    out.terms[i] = kSign[i] * (rho[i] - 1.0) * apo_m[i];
    out.sum += out.terms[i];
  }
  return out;
}

double solve_apo_star(double rho1, const std::array<double, 3>& fixed_terms) {
  double slope = rho1 - 1.0;
  if (std::abs(slope) <= 1e-12) {
    throw Error(ErrorKind::kDegenerateDenominator,
                "rho(d, a) = 1: the first term vanishes, so any APO or none balances the sum");
  }
  return -(fixed_terms[0] + fixed_terms[1] + fixed_terms[2]) / slope;
}

RhoImputation impute_rho(const PanelDataset& data, int d, int a, const std::vector<int>& donors) {
  RhoImputation out;
  std::vector<int> pool = donors.empty() ? data.treatment_groups() : donors;
  for (int g : pool) {
    if (g > a && g != d) out.donors.push_back(g);
  }
  std::sort(out.donors.begin(), out.donors.end());
  out.donors.erase(std::unique(out.donors.begin(), out.donors.end()), out.donors.end());
  if (out.donors.empty()) {
    throw Error(ErrorKind::kNoDonors, "no donor group untreated at age " + std::to_string(a));
  }
  const int b = d - 1;
  out.base = observed_rho(data, d, b);
  double change = 0.0;
  for (int g : out.donors) change += observed_rho(data, g, a) - observed_rho(data, g, b);
  out.value = out.base + change / static_cast<double>(out.donors.size());
  return out;
}

DecompositionRow decomposition_row(const PanelDataset& data, int d, int a,
                                   const std::vector<int>& donors) {
  DecompositionRow r;
  r.d = d;
  r.a = a;
  r.dprime = a + 1;
  r.b = d - 1;
  if (a < d) throw Error(ErrorKind::kInvalidWindow, "decomposition needs a post-treatment age");
  RhoImputation imp = impute_rho(data, d, a, donors);
  r.imputed_rho = imp.value;
  r.donors = imp.donors;
  const std::pair<int, int> points[3] = {{d, r.b}, {r.dprime, a}, {r.dprime, r.b}};
  for (int i = 0; i < 3; ++i) {
    r.rho[i + 1] = observed_rho(data, points[i].first, points[i].second);
    r.apo[i + 1] = observed_mean(data, Gender::kMale, points[i].first, points[i].second);
  }
  r.rho[0] = r.imputed_rho;
  TdDecomposition fixed = td_decomposition(r.rho, {0.0, r.apo[1], r.apo[2], r.apo[3]});
  r.apo_star = solve_apo_star(r.rho[0], {fixed.terms[1], fixed.terms[2], fixed.terms[3]});
  r.apo[0] = r.apo_star;
  r.terms = td_decomposition(r.rho, r.apo).terms;
  return r;
}

}  // namespace ntd
