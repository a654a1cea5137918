#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ntd/config.hpp"
#include "ntd/panel.hpp"

namespace ntd::cli {

// State shared by every subcommand: resolved config, output directory and
// what has been written so far (for the manifest).
class Run {
 public:
  explicit Run(RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  unsigned threads() const { return threads_; }
  const std::filesystem::path& dir() const { return dir_; }

  // Opens <output_dir>/<name> for writing and registers it in the manifest.
  std::ofstream open(const std::string& name);
  void set_rows(const std::string& name, std::size_t rows, std::size_t errors = 0);

  PanelDataset load_input();

  void note(const std::string& key, nlohmann::ordered_json value) { extra_[key] = std::move(value); }
  std::size_t element_errors() const { return element_errors_; }

  void write_manifest() const;

 private:
  RunConfig cfg_;
  unsigned threads_;
  std::filesystem::path dir_;
  std::chrono::steady_clock::time_point start_;
  nlohmann::ordered_json outputs_ = nlohmann::ordered_json::array();
  nlohmann::ordered_json input_;
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
  std::size_t element_errors_ = 0;
};

// Tidy CSV conventions: shortest round-trip numbers, NA for missing values,
// RFC 4180 quoting for free text.
inline std::string num(double v) { return std::isfinite(v) ? format_double(v) : std::string("NA"); }
std::string quoted(const std::string& s);
std::string treat_label(int d);

using CommandFn = int (*)(Run&);
int cmd_simulate(Run& run);
int cmd_estimate(Run& run);
int cmd_validate(Run& run);
int cmd_aggregate(Run& run);
int cmd_bias_bound(Run& run);
int cmd_decompose(Run& run);
int cmd_dr(Run& run);
int cmd_event_study(Run& run);

}  // namespace ntd::cli
