#pragma once

#include <string>
#include <vector>

#include "ntd/estimators.hpp"
#include "ntd/panel.hpp"

namespace ntd {

struct GridOptions {
  int d_min = 24;
  int d_max = 34;
  int e_min = 0;
  int e_max = 5;
  int control_offset = 1;
  int baseline_gap = 1;
  std::vector<EstimandId> estimands{kAllEstimands.begin(), kAllEstimands.end()};
  double denom_tol = 1e-8;
  unsigned threads = 1;
};

// One row per (d, e, estimand). Failures stay in the grid with ok = false and
// the error kind and message in `error`.
struct GridRecord {
  EstimateRecord record;
  int e = 0;
  bool ok = true;
  std::string error;
};

// Every estimand over d in [d_min, d_max] and e in [e_min, e_max] with a = d + e,
// with cluster SEs. Output order is (d, e, estimand) regardless of threads.
std::vector<GridRecord> estimate_grid(const PanelDataset& data, const GridOptions& options = {});

}  // namespace ntd
