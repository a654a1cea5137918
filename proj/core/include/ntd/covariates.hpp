#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ntd/estimators.hpp"
#include "ntd/panel.hpp"

namespace ntd {

// Unit-level frame for one (d, d', a, b) design: every unit of either gender
// in group d or d' with both ages observed. Weights default to 1; a weighted
// frame can stand in for a population (one row per covariate cell).
struct SliceUnits {
  int d = 0;
  int dprime = 0;
  int a = 0;
  int b = 0;
  std::vector<Gender> gender;
  std::vector<std::uint8_t> treated;  // 1 if D = d, 0 if D = d'
  std::vector<double> y_a;
  std::vector<double> y_b;
  std::vector<double> weight;
  std::vector<std::uint32_t> cluster;
  std::vector<std::uint32_t> unit;
  Eigen::MatrixXd x;  // size() x num covariates

  std::size_t size() const { return gender.size(); }
};

SliceUnits slice_units(const PanelDataset& data, int d, int dprime, int a, int b);

struct FoldAssignment {
  int k = 0;
  std::vector<int> fold;  // per dataset unit, 0-based; -1 never occurs
};

FoldAssignment assign_folds(const PanelDataset& data, int k, std::uint64_t seed);
FoldAssignment assign_folds(std::size_t num_units, int k, std::uint64_t seed);

enum class Learner { kModel, kInterceptOnly };

struct LearnerConfig {
  Learner propensity = Learner::kModel;  // logistic regression on [1, x]
  Learner outcome = Learner::kModel;     // linear regression on [1, x]
  double clip = 0.01;
  double tol = 1e-8;
  int max_iter = 100;
  // Without cross-fitting every nuisance is fit on the full slice.
  bool cross_fit = true;
  unsigned threads = 1;
};

struct FoldDiagnostics {
  int fold = 0;
  std::size_t train_units = 0;
  std::size_t test_units = 0;
  double propensity_logloss = 0.0;  // out-of-fold, gender-specific propensity models
  double trend_mse = 0.0;           // out-of-fold, own-arm trend models
};

// Nuisance predictions for every unit of a SliceUnits frame.
struct NuisanceFit {
  // P(D = d | G = gender_i, D in {d, d'}, x_i), evaluated for each gender.
  std::array<std::vector<double>, 2> propensity;
  // P(G = f | D in {d, d'}, x_i).
  std::vector<double> female_share;
  // E[Y_a - Y_b | G = g, D = arm, x_i] indexed [gender][arm] with arm 0 = d, 1 = d'.
  std::array<std::array<std::vector<double>, 2>, 2> trend;
  std::size_t clipped = 0;
  std::vector<FoldDiagnostics> folds;
  std::string propensity_learner;
  std::string outcome_learner;

  // pi(g, arm, x_i) = P((G, D) = (g, arm) | D in {d, d'}, x_i).
  double pi(std::size_t i, Gender g, int arm) const;
};

NuisanceFit fit_nuisances(const SliceUnits& su, const FoldAssignment* folds,
                          const LearnerConfig& cfg);

enum class DrMethod { kOr, kIpw, kDr };

std::string_view method_name(DrMethod m);

// Estimates carry the unit-level influence (Psi) in `influence` aligned with
// the SliceUnits rows.
EstimateRecord apo_with_covariates(const SliceUnits& su, Gender g, const NuisanceFit& nf,
                                   DrMethod method = DrMethod::kDr);

struct AteTheta {
  EstimateRecord ate;
  EstimateRecord theta;
};
AteTheta ate_theta_with_covariates(const SliceUnits& su, Gender g, const NuisanceFit& nf,
                                   const EstimateRecord& apo);

EstimateRecord td_with_covariates(const SliceUnits& su, const NuisanceFit& nf,
                                  DrMethod method = DrMethod::kDr);

// Weighted cluster SE: sqrt(sum_c (sum_{i in c} w_i Psi_i)^2) / sum w.
double weighted_cluster_se(const SliceUnits& su, const std::vector<double>& psi);

// Diagnostics / low-level fits exposed for tests.
Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& w, double tol, int max_iter);
Eigen::VectorXd fit_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& w);

}  // namespace ntd
