#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ntd/covariates.hpp"
#include "ntd/panel.hpp"

namespace ntd {

enum class RhoMode { kConstant, kLifecycle };
enum class EffectMode { kMultiplicative, kAdditive };
enum class NoiseMode { kIid, kAr1 };

// Synthetic life-cycle earnings design. Ability x takes `ability_levels`
// evenly spaced values in [0, 1]; higher ability both steepens the earnings
// profile and tilts timing toward later groups (selection > 0).
struct DgpSpec {
  std::uint64_t seed = 1;
  int age_min = 20;
  int age_max = 45;
  int group_min = 24;
  int group_max = 40;
  int units_per_group = 1000;  // per gender and treatment group
  std::map<std::pair<Gender, int>, int> group_sizes;  // overrides per (gender, d)
  int never_units = 0;  // per gender
  int cohort_min = 1975;
  int cohort_max = 1990;

  int ability_levels = 3;
  double selection = 2.0;

  double base_level = 40000.0;
  double group_level = -400.0;  // level shift per year of later treatment
  double growth = 2000.0;
  double ability_growth = 3000.0;
  double curvature = 40.0;
  double year_slope = 0.0;
  double year_ref = 2000.0;

  RhoMode rho_mode = RhoMode::kConstant;
  double rho = 0.8;
  double rho_peak_age = 27.0;
  double rho_curvature = 0.0015;
  double rho_group_slope = 0.0;

  EffectMode effect_mode = EffectMode::kMultiplicative;
  double tau_f = -0.2;
  double tau_f_slope = -0.01;  // per year of event time, post-treatment
  double tau_m = 0.0;
  double tau_m_slope = 0.0;
  double tau_group_slope = 0.0;  // per year of d above group_min, both genders
  int anticipation = 0;

  double noise_sd = 0.3;
  NoiseMode noise_mode = NoiseMode::kIid;
  double ar1_phi = 0.7;
  double zero_mass = 0.0;
  bool emit_covariates = true;

  int group_size(Gender g, int d) const;
  std::vector<int> groups() const;  // finite groups, ascending
};

DgpSpec parse_dgp_spec(std::istream& in);
DgpSpec load_dgp_spec(const std::string& path);
void write_dgp_spec(std::ostream& out, const DgpSpec& spec);
// Throws InvalidSpec naming the offending field.
void validate(const DgpSpec& spec);

enum class Timing { kObserved, kNever };

enum class OracleQuantity {
  kApoCf,      // APO(g, d, inf, a)
  kApoObs,     // APO(g, d, d, a)
  kAte,        // ATE(g, d, a)
  kTheta,      // theta(g, d, a)
  kGammaPt,    // gamma_PT(g, d, d', a), baseline d - 1
  kBias,       // APO_cf / (APO_cf - gamma_PT)
  kRhoCf,      // rho(d, inf, a)
  kRhoObs,     // rho(d, d, a)
  kDeltaRho,   // rho(d, d, a) - rho(d, inf, a)
  kPenaltyP,   // (ATE_f - ATE_m) / APO_cf(f)
};

class DgpOracle {
 public:
  explicit DgpOracle(DgpSpec spec);

  const DgpSpec& spec() const { return spec_; }

  double ability_value(int level) const;
  double ability_prob(int d, int level) const;  // d may be kNeverTreated
  double mean_cohort() const;

  double rho(int d, int a) const;  // counterfactual gender ratio profile
  double tau(Gender g, int d, int a) const;  // effect in force at age a (0 before onset)
  bool treated_at(int d, int a) const;

  double cond_apo(Gender g, int d, Timing t, int a, int level) const;
  double apo(Gender g, int d, Timing t, int a) const;
  double ate(Gender g, int d, int a) const;
  double theta(Gender g, int d, int a) const;
  double cate(Gender g, int d, int a, int level) const;
  double gamma_pt(Gender g, int d, int dprime, int a, int b) const;
  double gamma_pt(Gender g, int d, int dprime, int a) const { return gamma_pt(g, d, dprime, a, d - 1); }
  double rho_ratio(int d, Timing t, int a) const;
  double delta_rho(int d, int a) const;
  double bias(Gender g, int d, int dprime, int a) const;
  double penalty_p(int d, int a) const;

  double value(OracleQuantity q, Gender g, int d, int dprime, int a) const;

  // Population cell means for every (gender, group incl. never, age).
  CellTable population_cells(std::size_t nominal_count = 1000000) const;

  // One weighted row per (gender, arm, ability level) with exact conditional means.
  SliceUnits population_units(int d, int dprime, int a, int b) const;

  // True nuisance functions evaluated on a frame whose x column holds ability values.
  NuisanceFit true_nuisances(const SliceUnits& su) const;

  // Population target of the TD-with-covariates estimand: E[CATE_f - CATE_m | G=f, D=d].
  double td_covariate_target(int d, int a) const;

  void write_json(std::ostream& out) const;

 private:
  int level_of(double x) const;
  double male_cf(int d, int a, int level) const;
  double z_of(int d) const;

  DgpSpec spec_;
  std::map<int, std::vector<double>> probs_;  // group -> P(level | group)
};

struct Generated {
  PanelDataset data;
  DgpOracle oracle;
};

Generated generate(const DgpSpec& spec, unsigned threads = 1);

double oracle_estimand(const DgpOracle& oracle, OracleQuantity which, Gender g, int d,
                       int dprime, int a);
CellTable population_cells(const DgpOracle& oracle);

}  // namespace ntd
