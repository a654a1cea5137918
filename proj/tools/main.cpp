#include <cstdlib>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"
#include "ntd/error.hpp"
#include "run.hpp"

using namespace ntd;
using namespace ntd::cli;

namespace {

// Flags mirror config keys; a config file given with --config overrides them.
struct Flag {
  const char* flag;
  const char* key;
  const char* help;
};

const Flag kValueFlags[] = {
    {"--input,-i", "input", "panel CSV"},
    {"--spec", "spec", "DGP spec file (simulate)"},
    {"--out,-o", "output_dir", "output directory (default $NTD_OUTPUT_DIR or ntd_out)"},
    {"--d-min", "d_min", "first treatment group"},
    {"--d-max", "d_max", "last treatment group"},
    {"--e-min", "e_min", "first event time"},
    {"--e-max", "e_max", "last event time"},
    {"--control-offset", "control_offset", "control group d' = a + offset"},
    {"--baseline-gap", "baseline_gap", "baseline age b = d - gap"},
    {"--estimands", "estimands", "comma-separated estimand names (default all)"},
    {"--denom-tol", "denom_tol", "relative denominator tolerance"},
    {"--bootstrap-reps", "bootstrap_reps", "cluster bootstrap replications (0 = off, else >= 100)"},
    {"--alpha", "alpha", "test level"},
    {"--max-horizon", "max_horizon", "validation control offsets 1..horizon+1"},
    {"--pre-events", "pre_events", "validation event times"},
    {"--distributions", "distributions", "empirical, uniform[:lo:hi], normal:mean:sd, point:d, file:path"},
    {"--theta-grid", "theta_grid", "assumed fathers' theta values"},
    {"--donors", "donors", "donor groups for rho imputation"},
    {"--folds", "folds", "cross-fitting folds"},
    {"--method", "dr_method", "dr, or, ipw or all"},
    {"--propensity-learner", "propensity_learner", "model or intercept"},
    {"--outcome-learner", "outcome_learner", "model or intercept"},
    {"--clip", "clip", "propensity clipping bound"},
    {"--window-lo", "window_lo", "first event-study event time"},
    {"--window-hi", "window_hi", "last event-study event time"},
    {"--seed", "seed", "run seed"},
    {"--threads", "threads", "worker threads (0 = all cores); never changes results"},
};

const Flag kBoolFlags[] = {
    {"--bonferroni", "bonferroni", "Bonferroni-adjust the validation suite"},
    {"--skip-malformed", "skip_malformed", "skip and report malformed input rows"},
    {"--tolerate-errors", "tolerate_errors", "exit 0 even when grid elements fail"},
    {"--dump-if", "dump_if", "write per-cluster influence sums"},
};

const Flag kNegatedFlags[] = {
    {"--no-cross-fit", "cross_fit", "fit nuisances on the full slice"},
    {"--no-never", "include_never", "leave never-treated units out of the event study"},
};

struct Command {
  const char* name;
  const char* help;
  CommandFn fn;
};

const Command kCommands[] = {
    {"simulate", "draw a synthetic panel and its oracle from a DGP spec", cmd_simulate},
    {"estimate", "every estimand over the d x e grid with cluster SEs", cmd_estimate},
    {"validate", "pre-trend suites, NTD gate and gender-ratio series", cmd_validate},
    {"aggregate", "aggregate per-group effects over treatment-timing distributions", cmd_aggregate},
    {"bias-bound", "bias-corrected NTD gap over a grid of fathers' effects", cmd_bias_bound},
    {"decompose", "decomposition of the TD violation gap with imputed ratios", cmd_decompose},
    {"dr", "covariate-adjusted OR, IPW and DR estimates", cmd_dr},
    {"event-study", "dynamic event-study coefficients and normalized gap", cmd_event_study},
};

struct Parsed {
  std::map<std::string, std::string> values;  // config key -> raw value
  std::vector<std::string> sets;
  std::string config_file;
};

void print_error(const std::string& command, const std::string& kind, const std::string& message,
                 const std::string& dir) {
  nlohmann::ordered_json j{{"status", "error"}, {"command", command}, {"error", {{"kind", kind}, {"message", message}}}};
  std::cerr << j.dump() << '\n';
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream out(std::filesystem::path(dir) / "error.json");
  if (out) out << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Normalized triple differences: estimation, validation and simulation"};
  app.require_subcommand(1);
  Parsed parsed;
  std::map<std::string, std::vector<std::pair<CLI::Option*, const Flag*>>> options;
  std::map<std::string, std::vector<std::pair<CLI::Option*, const Flag*>>> bools, negated;
  std::map<std::string, std::string> raw;  // storage per key, shared across subcommands

  for (const Command& c : kCommands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config,-c", parsed.config_file, "key = value config file; overrides flags");
    sub->add_option("--set", parsed.sets, "extra key=value config entries");
    for (const Flag& f : kValueFlags) options[c.name].push_back({sub->add_option(f.flag, raw[f.key], f.help), &f});
    for (const Flag& f : kBoolFlags) bools[c.name].push_back({sub->add_flag(f.flag, f.help), &f});
    for (const Flag& f : kNegatedFlags) negated[c.name].push_back({sub->add_flag(f.flag, f.help), &f});
  }
  CLI11_PARSE(app, argc, argv);

  const Command* chosen = nullptr;
  for (const Command& c : kCommands)
    if (app.got_subcommand(c.name)) chosen = &c;

  RunConfig cfg;
  if (const char* env = std::getenv("NTD_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
  cfg.command = chosen->name;
  try {
    for (const auto& [opt, f] : options[chosen->name])
      if (opt->count() > 0) set_config_value(cfg, f->key, raw[f->key]);
    for (const auto& [opt, f] : bools[chosen->name])
      if (opt->count() > 0) set_config_value(cfg, f->key, "true");
    for (const auto& [opt, f] : negated[chosen->name])
      if (opt->count() > 0) set_config_value(cfg, f->key, "false");
    for (const std::string& kv : parsed.sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::kInvalidSpec, "--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!parsed.config_file.empty()) cfg = load_config(parsed.config_file, cfg);
    cfg.command = chosen->name;
  } catch (const Error& e) {
    print_error(chosen->name, std::string(to_string(e.kind())), e.what(), "");
    return 2;
  }

  try {
    Run run(cfg);
    int rc = chosen->fn(run);
    run.write_manifest();
    if (rc != 0) return rc;
    if (run.element_errors() > 0) {
      std::cerr << "ntd " << chosen->name << ": " << run.element_errors()
                << " element(s) failed; see the status columns and manifest.json\n";
      return cfg.tolerate_errors ? 0 : 1;
    }
    return 0;
  } catch (const Error& e) {
    print_error(chosen->name, std::string(to_string(e.kind())), e.what(), cfg.output_dir);
  } catch (const std::exception& e) {
    print_error(chosen->name, "Internal", e.what(), cfg.output_dir);
  }
  return 2;
}
