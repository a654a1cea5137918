#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ntd/estimators.hpp"
#include "ntd/panel.hpp"

namespace ntd {

struct InfluenceVector {
  std::optional<EstimandId> estimand;  // empty for a single cell mean
  std::vector<double> contributions;   // one per dataset row
  std::vector<std::uint32_t> cluster_ids;
  std::size_t n = 0;  // number of units
};

// d(estimand)/d(cell mean) for the eight slice cells, evaluated at the
// slice's plug-in means (ordered by cell_slot).
using CellGradient = std::array<double, 8>;
CellGradient influence_gradient(const TwoByTwoSlice& s, EstimandId id);

InfluenceVector influence_mu(const PanelDataset& data, Gender g, int d, int a);
InfluenceVector influence_composite(const PanelDataset& data, const TwoByTwoSlice& s,
                                    EstimandId id);

// sqrt(n^-2 sum_c (sum_{i in c} psi_i)^2)
double cluster_se(const InfluenceVector& iv, std::size_t n);
double cluster_se(const InfluenceVector& iv);

struct ClusterSum {
  std::uint32_t cluster;
  double sum;
};
std::vector<ClusterSum> cluster_sums(const InfluenceVector& iv);

// Reusable scratch space for the per-slice fast path.
struct ClusterWorkspace {
  std::vector<std::array<double, 8>> acc;
  std::vector<std::int32_t> slot_of;  // cluster -> position in `touched`, -1 if untouched
  std::vector<std::uint32_t> touched;
};

// Per touched cluster, the scaled residual sums (n/n_k) sum (Y - mu_k) for each
// of the eight slice cells. Cluster ids are written to `clusters` in first-touch order.
std::vector<std::array<double, 8>> slice_cluster_residuals(const PanelDataset& data,
                                                           const TwoByTwoSlice& s,
                                                           ClusterWorkspace& ws,
                                                           std::vector<std::uint32_t>* clusters);

// Cluster SEs for several estimands on one slice without materializing
// per-row influence vectors. Gradients must correspond to `ids`.
std::vector<double> slice_cluster_ses(const PanelDataset& data, const TwoByTwoSlice& s,
                                      std::span<const EstimandId> ids, ClusterWorkspace& ws,
                                      std::span<const CellGradient> gradients);
// Same, for arbitrary gradients not tied to a named estimand.
std::vector<double> slice_cluster_ses(const PanelDataset& data, const TwoByTwoSlice& s,
                                      ClusterWorkspace& ws, std::span<const CellGradient> gradients);

struct BootstrapOptions {
  int reps = 2000;
  std::uint64_t seed = 1;
  int max_redraws = 10;
  unsigned threads = 1;
};

struct BootstrapResult {
  std::vector<double> se;             // per estimand
  std::vector<std::size_t> failures;  // replications abandoned after the redraw cap
  std::size_t redraws = 0;
  int reps = 0;
};

BootstrapResult cluster_bootstrap(const PanelDataset& data, const TwoByTwoSlice& s,
                                  std::span<const EstimandId> ids, const BootstrapOptions& opt);
double cluster_bootstrap(const PanelDataset& data, const TwoByTwoSlice& s, EstimandId id,
                         int reps, std::uint64_t seed);

// Cluster SE of a linear combination sum_k coef_k mu(cell_k) of cell means.
struct CellTerm {
  CellKey cell;
  double coef;
};
double linear_cluster_se(const PanelDataset& data, std::span<const CellTerm> terms);

// Seed for replication/unit `index` derived from a base seed (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace ntd
