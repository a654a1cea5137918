#pragma once

#include <array>
#include <vector>

#include "ntd/inference.hpp"
#include "ntd/panel.hpp"

namespace ntd {

// APO_cf / (APO_cf - gamma_PT). Below one when the violation is negative.
double bias_factor(double apo_cf, double gamma_pt);

struct BiasGridRow {
  int d = 0;
  int dprime = 0;
  int a = 0;
  double assumed_theta_m = 0.0;
  double conventional = 0.0;  // ntd_gap
  double corrected = 0.0;
  double correction_factor = 0.0;
  double se = 0.0;  // conditional on the assumed theta_m; 0 when not computed
};

// Treats fathers' counterfactual as mu(m,d,a) / (1 + theta_m).
BiasGridRow bias_corrected_gap(const TwoByTwoSlice& s, double theta_m);

// d(corrected)/d(cell mean) at the slice means.
CellGradient bias_corrected_gradient(const TwoByTwoSlice& s, double theta_m);

inline const std::vector<double> kDefaultThetaGrid{-0.10, -0.05, 0.0, 0.05, 0.10};

std::vector<BiasGridRow> bias_grid(const TwoByTwoSlice& s,
                                   const std::vector<double>& grid = kDefaultThetaGrid);
// Same rows with cluster SEs.
std::vector<BiasGridRow> bias_grid(const PanelDataset& data, const TwoByTwoSlice& s,
                                   const std::vector<double>& grid = kDefaultThetaGrid);

// Four-term decomposition of gamma_PT(f) - gamma_PT(m). Inputs are ordered
// (d, a), (d, b), (d', a), (d', b); rho is the counterfactual gender ratio and
// apo_m the male counterfactual level at each point.
struct TdDecomposition {
  std::array<double, 4> terms{};
  double sum = 0.0;
};
TdDecomposition td_decomposition(const std::array<double, 4>& rho,
                                 const std::array<double, 4>& apo_m);

// Male counterfactual level at (d, a) that makes the four terms cancel, given
// the already signed terms 2..4.
double solve_apo_star(double rho1, const std::array<double, 3>& fixed_terms);

// rho(d, d-1) plus the mean donor change rho(d', a) - rho(d', d-1). Donors not
// yet treated at a (d' > a) are kept; an empty donor list means every such group.
struct RhoImputation {
  double value = 0.0;
  double base = 0.0;
  std::vector<int> donors;
};
RhoImputation impute_rho(const PanelDataset& data, int d, int a,
                         const std::vector<int>& donors = {});

struct DecompositionRow {
  int d = 0;
  int a = 0;
  int dprime = 0;
  int b = 0;
  std::array<double, 4> rho{};
  std::array<double, 4> apo{};  // apo[0] holds APO*
  std::array<double, 4> terms{};
  double imputed_rho = 0.0;
  double apo_star = 0.0;
  std::vector<int> donors;
};

// Terms 2..4 from observed pre-treatment means, rho(d, a) imputed from donors,
// and APO* solved so the four terms sum to zero.
DecompositionRow decomposition_row(const PanelDataset& data, int d, int a,
                                   const std::vector<int>& donors = {});

}  // namespace ntd
