#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ntd/panel.hpp"

namespace ntd {

struct TreatmentDistribution {
  std::map<int, double> weights;  // d -> p_d >= 0
  std::string label;

  TreatmentDistribution normalized() const;
};

TreatmentDistribution point_mass(int d);
TreatmentDistribution uniform_distribution(int d_lo, int d_hi);
// Normal pdf evaluated at each integer d in [d_lo, d_hi], normalized.
TreatmentDistribution discretized_normal(double mean, double sd, int d_lo, int d_hi);
// Unit counts of group d (optionally one gender) over the feasible support d + e < d_max.
TreatmentDistribution empirical_distribution(const PanelDataset& data, int e, int d_max,
                                             std::optional<Gender> gender = std::nullopt);
// CSV with header "d,weight".
TreatmentDistribution load_distribution_csv(std::istream& in, std::string label = "file");

struct GroupValue {
  double value = 0.0;
  double se = 0.0;
};
using GroupValues = std::map<int, GroupValue>;

struct AggregateResult {
  std::string label;
  int e = 0;
  double value = 0.0;
  double se = 0.0;  // fixed-weight, groups treated as independent
  std::map<int, double> weights;  // effective weights on the per-group inputs
  std::vector<int> dropped;       // support points with d + e >= d_max
  bool ok = true;
  std::string reason;
};

struct AggregateOptions {
  bool strict = false;  // error instead of dropping infeasible support points
};

AggregateResult theta_agg1(const GroupValues& thetas, const TreatmentDistribution& dist, int e,
                           int d_max, const AggregateOptions& opt = {});
// Ratio of averages; `weights` holds w_d = p_d APO_d / sum p APO. The SE uses
// those weights on per-group theta SEs when supplied.
AggregateResult theta_agg2(const GroupValues& ates, const GroupValues& apos,
                           const TreatmentDistribution& dist, int e, int d_max,
                           const std::map<int, double>& theta_se = {},
                           const AggregateOptions& opt = {});
AggregateResult rho_agg(const GroupValues& deltas, const TreatmentDistribution& dist, int e,
                        int d_max, const AggregateOptions& opt = {});

struct Stratum {
  std::string label;
  GroupValues values;
};

// Every stratum aggregated under the same reference weights; a stratum that
// lacks a reference group gets ok = false with a MissingGroup reason.
std::vector<AggregateResult> reference_reweight(const std::vector<Stratum>& strata,
                                                const TreatmentDistribution& reference, int e,
                                                int d_max, const AggregateOptions& opt = {});

}  // namespace ntd
