#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ntd/panel.hpp"

namespace ntd {

struct EventWindow {
  int lo = -5;
  int hi = 10;
};

struct EventStudyOptions {
  EventWindow window;
  // Never-treated units enter with every event dummy at zero; they pin down
  // the age profile when treatment groups alone cannot.
  bool include_never = true;
  unsigned threads = 1;
  bool keep_ytilde = false;
};

// Y = sum_{e != -1} beta_e 1{E = e} + alpha_age + alpha_year + error, fit on
// one gender. Parents' observations outside the window are left out.
struct EventStudyFit {
  Gender gender = Gender::kFemale;
  std::vector<int> events;  // window, ascending, includes -1
  std::vector<double> beta;  // 0 at e = -1
  std::vector<double> se;    // cluster-robust, 0 at e = -1
  std::vector<double> ytilde_mean;  // mean of intercept + alpha_age + alpha_year at e
  std::vector<double> theta_es;     // beta / ytilde_mean
  std::vector<std::size_t> event_obs;
  double intercept = 0.0;
  std::vector<int> ages;
  std::vector<double> age_effects;  // 0 at the reference age
  std::vector<int> years;
  std::vector<double> year_effects;  // 0 at the reference year
  std::vector<std::string> dropped_columns;  // normalization choices
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
  std::vector<std::uint32_t> sample_rows;  // only with keep_ytilde
  std::vector<double> ytilde;

  double beta_at(int e) const;
  double theta_at(int e) const;
};

EventStudyFit fit_event_study(const PanelDataset& data, Gender g,
                              const EventStudyOptions& options = {});

// Dense design used by the fit, for cross-checks on small panels.
struct EventStudyDesign {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> columns;
  std::vector<std::uint32_t> rows;
};
EventStudyDesign event_study_design(const PanelDataset& data, Gender g,
                                    const EventStudyOptions& options = {});

struct EventGap {
  int e = 0;
  double gap = 0.0;  // theta_ES(f, e) - theta_ES(m, e)
  bool pre = false;
};
std::vector<EventGap> event_study_gap(const EventStudyFit& female, const EventStudyFit& male);

}  // namespace ntd
