#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ntd/panel.hpp"

namespace ntd {

enum class EstimandId : std::uint8_t {
  kDidApoF,
  kDidAteF,
  kDidThetaF,
  kDidApoM,
  kDidAteM,
  kDidThetaM,
  kTdGap,
  kNtdGap,
  kPGap,
  kNtdAlt,
  kTdNullApo,
  kTdNullAte,
  kTdNullTheta,
  kNtdNullApo,
  kNtdNullAte,
  kNtdNullTheta,
};

inline constexpr std::array<EstimandId, 16> kAllEstimands{
    EstimandId::kDidApoF,    EstimandId::kDidAteF,    EstimandId::kDidThetaF,
    EstimandId::kDidApoM,    EstimandId::kDidAteM,    EstimandId::kDidThetaM,
    EstimandId::kTdGap,      EstimandId::kNtdGap,     EstimandId::kPGap,
    EstimandId::kNtdAlt,     EstimandId::kTdNullApo,  EstimandId::kTdNullAte,
    EstimandId::kTdNullTheta, EstimandId::kNtdNullApo, EstimandId::kNtdNullAte,
    EstimandId::kNtdNullTheta};

std::string_view estimand_name(EstimandId id);
std::optional<EstimandId> parse_estimand(std::string_view name);
// True for ratio-type estimands, which are invariant to rescaling earnings.
bool is_normalized(EstimandId id);

struct EstimateRecord {
  std::string estimand;
  int d = 0;
  int dprime = 0;
  int a = 0;
  int b = 0;
  double value = 0.0;
  double se = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
  std::vector<double> influence;  // may be left empty by bulk pipelines
};

// Mean |cell mean| over non-empty cells of the slice.
double slice_scale(const TwoByTwoSlice& s);

double delta_apo(const TwoByTwoSlice& s, Gender g);
double delta_ate(const TwoByTwoSlice& s, Gender g);
double delta_theta(const TwoByTwoSlice& s, Gender g);
double td_gap(const TwoByTwoSlice& s);
double ntd_gap(const TwoByTwoSlice& s);
double p_gap(const TwoByTwoSlice& s);
double ntd_alt(const TwoByTwoSlice& s);

enum class NullFramework { kTd, kNtd };

struct NullTriple {
  double apo = 0.0;
  double ate = 0.0;
  double theta = 0.0;
};

NullTriple null_for_fathers(const TwoByTwoSlice& s, NullFramework framework);

struct GapDecomposition {
  double total_gap = 0.0;
  double parenthood = 0.0;
  double other = 0.0;
  double share = 0.0;
};

GapDecomposition decompose_gap(const TwoByTwoSlice& s);
// Same decomposition from a counterfactual and an observed gender ratio.
GapDecomposition decompose_ratios(double rho_cf, double rho_obs);

double relation_identity(double theta_f, double theta_m, double rho_cf);

double evaluate(const TwoByTwoSlice& s, EstimandId id);

}  // namespace ntd
