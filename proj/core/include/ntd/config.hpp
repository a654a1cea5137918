#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ntd/panel.hpp"

namespace ntd {

// Every knob of a batch run. All fields have defaults so a config file only
// needs the keys it changes.
struct RunConfig {
  std::string command;
  std::string input;   // panel CSV
  std::string spec;    // DGP spec (simulate)
  std::string output_dir = "ntd_out";
  ColumnSchema schema;

  int d_min = 24;
  int d_max = 34;
  int e_min = 0;
  int e_max = 5;
  int control_offset = 1;
  int baseline_gap = 1;
  std::vector<std::string> estimands;  // empty: all
  double denom_tol = 1e-8;
  int bootstrap_reps = 0;  // 0: IF SEs only

  double alpha = 0.05;
  bool bonferroni = false;
  int max_horizon = 5;
  std::vector<int> pre_events{-4, -3, -2};

  std::vector<std::string> distributions{"empirical"};  // aggregate

  std::vector<double> theta_grid{-0.10, -0.05, 0.0, 0.05, 0.10};
  std::vector<int> donors;  // decompose; empty: every not-yet-treated group

  int folds = 5;
  bool cross_fit = true;
  std::string dr_method = "dr";
  std::string propensity_learner = "model";
  std::string outcome_learner = "model";
  double clip = 0.01;

  int window_lo = -5;
  int window_hi = 10;
  bool include_never = true;

  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0: hardware concurrency
  bool skip_malformed = false;
  bool tolerate_errors = false;
  bool dump_if = false;
};

// key = value lines, '#' comments, lists comma separated.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
void write_config(std::ostream& out, const RunConfig& cfg);
std::vector<std::string> config_keys();

std::uint64_t fnv1a(std::string_view bytes);
// Hash of the canonical serialization.
std::uint64_t config_hash(const RunConfig& cfg);
std::string hex64(std::uint64_t v);

}  // namespace ntd
