#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ntd/panel.hpp"

namespace ntd {

enum class Framework { kDidF, kDidM, kTd, kNtd };

inline constexpr std::array<Framework, 4> kFrameworks{Framework::kDidF, Framework::kDidM,
                                                      Framework::kTd, Framework::kNtd};
std::string_view framework_name(Framework f);

struct ValidationResult {
  Framework framework = Framework::kNtd;
  int d = 0;
  int dprime = 0;
  int e = 0;
  int a = 0;
  int b = 0;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  bool pass = true;
  bool feasible = true;
  std::string reason;  // why an infeasible element was skipped
};

struct ValidationOptions {
  double alpha = 0.05;
  bool bonferroni = false;
  unsigned threads = 1;
};

double normal_critical_value(double alpha);  // two-sided

// 2x2 statistic at pre-treatment age a = d + e, baseline b = d - 1, control d'.
ValidationResult pretrend_test(const PanelDataset& data, Framework framework, int d, int dprime,
                               int e, double alpha = 0.05);

// Frameworks x control offsets 1..max_horizon+1 x pre_events, ordered by
// (framework, offset, e). Infeasible elements are kept with feasible = false.
std::vector<ValidationResult> pretrend_suite(const PanelDataset& data, int d, int max_horizon = 5,
                                             const std::vector<int>& pre_events = {-4, -3, -2},
                                             const ValidationOptions& options = {});

struct GateSummary {
  int d = 0;
  std::size_t ntd_tests = 0;
  std::size_t ntd_passed = 0;
  bool plausible = false;  // every feasible NTD pair-test passes
};
GateSummary ntd_gate(const std::vector<ValidationResult>& suite, int d);

struct RhoPoint {
  int d = 0;
  int a = 0;
  double ratio = 0.0;
  double se = 0.0;
  bool ok = true;
  std::string reason;
};

std::vector<RhoPoint> rho_pretrend_series(const PanelDataset& data, std::pair<int, int> d_range,
                                          std::pair<int, int> a_range);

}  // namespace ntd
