#include "ntd/dgp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "ntd/inference.hpp"
#include "ntd/parallel.hpp"

namespace ntd {

namespace {

Error spec_error(const std::string& field, const std::string& msg) {
  return Error(ErrorKind::kInvalidSpec, "spec field '" + field + "': " + msg);
}

int effective_group(const DgpSpec& s, int d) { return is_never(d) ? s.group_max + 1 : d; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_number(const std::string& key, std::string_view v) {
  T out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw spec_error(key, "cannot parse '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw spec_error(key, "expected true/false");
}

}  // namespace

int DgpSpec::group_size(Gender g, int d) const {
  if (is_never(d)) return never_units;
  auto it = group_sizes.find({g, d});
  return it == group_sizes.end() ? units_per_group : it->second;
}

std::vector<int> DgpSpec::groups() const {
  std::vector<int> out;
  for (int d = group_min; d <= group_max; ++d) out.push_back(d);
  return out;
}

// ---------------------------------------------------------------- config file

DgpSpec parse_dgp_spec(std::istream& in) {
  DgpSpec s;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view lv = line;
    if (auto h = lv.find('#'); h != std::string_view::npos) lv = lv.substr(0, h);
    lv = trim(lv);
    if (lv.empty()) continue;
    auto eq = lv.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::kInvalidSpec, "line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(trim(lv.substr(0, eq)));
    std::string_view v = trim(lv.substr(eq + 1));
    auto num = [&](auto& field) { field = parse_number<std::decay_t<decltype(field)>>(key, v); };

    if (key == "seed") num(s.seed);
    else if (key == "age_min") num(s.age_min);
    else if (key == "age_max") num(s.age_max);
    else if (key == "group_min") num(s.group_min);
    else if (key == "group_max") num(s.group_max);
    else if (key == "units_per_group") num(s.units_per_group);
    else if (key == "never_units") num(s.never_units);
    else if (key == "cohort_min") num(s.cohort_min);
    else if (key == "cohort_max") num(s.cohort_max);
    else if (key == "ability_levels") num(s.ability_levels);
    else if (key == "selection") num(s.selection);
    else if (key == "base_level") num(s.base_level);
    else if (key == "group_level") num(s.group_level);
    else if (key == "growth") num(s.growth);
    else if (key == "ability_growth") num(s.ability_growth);
    else if (key == "curvature") num(s.curvature);
    else if (key == "year_slope") num(s.year_slope);
    else if (key == "year_ref") num(s.year_ref);
    else if (key == "rho_mode") {
      if (v == "constant") s.rho_mode = RhoMode::kConstant;
      else if (v == "lifecycle") s.rho_mode = RhoMode::kLifecycle;
      else throw spec_error(key, "expected constant or lifecycle");
    }
    else if (key == "rho") num(s.rho);
    else if (key == "rho_peak_age") num(s.rho_peak_age);
    else if (key == "rho_curvature") num(s.rho_curvature);
    else if (key == "rho_group_slope") num(s.rho_group_slope);
    else if (key == "effect_mode") {
      if (v == "multiplicative") s.effect_mode = EffectMode::kMultiplicative;
      else if (v == "additive") s.effect_mode = EffectMode::kAdditive;
      else throw spec_error(key, "expected multiplicative or additive");
    }
    else if (key == "tau_f") num(s.tau_f);
    else if (key == "tau_f_slope") num(s.tau_f_slope);
    else if (key == "tau_m") num(s.tau_m);
    else if (key == "tau_m_slope") num(s.tau_m_slope);
    else if (key == "tau_group_slope") num(s.tau_group_slope);
    else if (key == "anticipation") num(s.anticipation);
    else if (key == "noise_sd") num(s.noise_sd);
    else if (key == "noise_mode") {
      if (v == "iid") s.noise_mode = NoiseMode::kIid;
      else if (v == "ar1") s.noise_mode = NoiseMode::kAr1;
      else throw spec_error(key, "expected iid or ar1");
    }
    else if (key == "ar1_phi") num(s.ar1_phi);
    else if (key == "zero_mass") num(s.zero_mass);
    else if (key == "emit_covariates") s.emit_covariates = parse_bool(key, v);
    else if (key.rfind("group_size.", 0) == 0) {
      // group_size.<f|m>.<d> = n
      std::string_view rest = std::string_view(key).substr(11);
      auto dot = rest.find('.');
      auto g = dot == std::string_view::npos ? std::nullopt : parse_gender(rest.substr(0, dot));
      if (!g) throw spec_error(key, "expected group_size.<f|m>.<d>");
      int d = parse_number<int>(key, rest.substr(dot + 1));
      s.group_sizes[{*g, d}] = parse_number<int>(key, v);
    }
    else throw spec_error(key, "unknown key");
  }
  validate(s);
  return s;
}

DgpSpec load_dgp_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  return parse_dgp_spec(in);
}

void write_dgp_spec(std::ostream& out, const DgpSpec& s) {
  auto kv = [&](const char* k, const std::string& v) { out << k << " = " << v << '\n'; };
  auto d = [](double x) { return format_double(x); };
  kv("seed", std::to_string(s.seed));
  kv("age_min", std::to_string(s.age_min));
  kv("age_max", std::to_string(s.age_max));
  kv("group_min", std::to_string(s.group_min));
  kv("group_max", std::to_string(s.group_max));
  kv("units_per_group", std::to_string(s.units_per_group));
  kv("never_units", std::to_string(s.never_units));
  kv("cohort_min", std::to_string(s.cohort_min));
  kv("cohort_max", std::to_string(s.cohort_max));
  kv("ability_levels", std::to_string(s.ability_levels));
  kv("selection", d(s.selection));
  kv("base_level", d(s.base_level));
  kv("group_level", d(s.group_level));
  kv("growth", d(s.growth));
  kv("ability_growth", d(s.ability_growth));
  kv("curvature", d(s.curvature));
  kv("year_slope", d(s.year_slope));
  kv("year_ref", d(s.year_ref));
  kv("rho_mode", s.rho_mode == RhoMode::kConstant ? "constant" : "lifecycle");
  kv("rho", d(s.rho));
  kv("rho_peak_age", d(s.rho_peak_age));
  kv("rho_curvature", d(s.rho_curvature));
  kv("rho_group_slope", d(s.rho_group_slope));
  kv("effect_mode", s.effect_mode == EffectMode::kMultiplicative ? "multiplicative" : "additive");
  kv("tau_f", d(s.tau_f));
  kv("tau_f_slope", d(s.tau_f_slope));
  kv("tau_m", d(s.tau_m));
  kv("tau_m_slope", d(s.tau_m_slope));
  kv("tau_group_slope", d(s.tau_group_slope));
  kv("anticipation", std::to_string(s.anticipation));
  kv("noise_sd", d(s.noise_sd));
  kv("noise_mode", s.noise_mode == NoiseMode::kIid ? "iid" : "ar1");
  kv("ar1_phi", d(s.ar1_phi));
  kv("zero_mass", d(s.zero_mass));
  kv("emit_covariates", s.emit_covariates ? "true" : "false");
  for (const auto& [key, n] : s.group_sizes) {
    out << "group_size." << gender_char(key.first) << '.' << key.second << " = " << n << '\n';
  }
}

void validate(const DgpSpec& s) {
  if (s.age_min < 0) throw spec_error("age_min", "must be >= 0");
  if (s.age_max <= s.age_min) throw spec_error("age_max", "must exceed age_min");
  if (s.group_max < s.group_min) throw spec_error("group_max", "must be >= group_min");
  if (s.group_min <= s.age_min) throw spec_error("group_min", "must exceed age_min (a baseline age d-1 must be observable)");
  if (s.cohort_max < s.cohort_min) throw spec_error("cohort_max", "must be >= cohort_min");
  if (s.ability_levels < 1) throw spec_error("ability_levels", "must be >= 1");
  if (s.units_per_group < 0) throw spec_error("units_per_group", "must be >= 0");
  if (s.never_units < 0) throw spec_error("never_units", "must be >= 0");
  for (const auto& [k, n] : s.group_sizes) {
    if (n < 0) throw spec_error("group_size", "must be >= 0");
    if (k.second < s.group_min || k.second > s.group_max) throw spec_error("group_size", "group outside [group_min, group_max]");
  }
  if (!(s.noise_sd >= 0)) throw spec_error("noise_sd", "must be >= 0");
  if (!(s.ar1_phi > -1 && s.ar1_phi < 1)) throw spec_error("ar1_phi", "must lie in (-1, 1)");
  if (!(s.zero_mass >= 0 && s.zero_mass < 1)) throw spec_error("zero_mass", "must lie in [0, 1)");
  if (s.anticipation < 0) throw spec_error("anticipation", "must be >= 0");
  if (!std::isfinite(s.selection)) throw spec_error("selection", "must be finite");

  DgpOracle probe(s);
  std::vector<int> gs = s.groups();
  gs.push_back(kNeverTreated);
  for (int d : gs) {
    for (int a = s.age_min; a <= s.age_max; ++a) {
      if (!(probe.rho(d, a) > 0)) throw spec_error("rho", "gender ratio must stay positive");
      for (int l = 0; l < s.ability_levels; ++l) {
        for (Gender g : kGenders) {
          double cf = probe.cond_apo(g, d, Timing::kNever, a, l);
          double obs = probe.cond_apo(g, d, Timing::kObserved, a, l);
          // Extreme cohorts shift means by year_slope * (cohort - mean cohort).
          double spread = std::abs(s.year_slope) * (s.cohort_max - s.cohort_min) / 2.0;
          if (!(cf - spread > 0)) throw spec_error("base_level", "counterfactual mean earnings must stay positive");
          if (!(obs - spread * (1 + std::abs(probe.tau(g, d, a))) >= 0)) {
            throw spec_error("tau", "observed mean earnings must stay non-negative");
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------- oracle

DgpOracle::DgpOracle(DgpSpec spec) : spec_(std::move(spec)) {
  std::vector<int> gs = spec_.groups();
  gs.push_back(kNeverTreated);
  for (int d : gs) {
    std::vector<double> p(static_cast<std::size_t>(spec_.ability_levels));
    double z = z_of(d), total = 0.0;
    for (int l = 0; l < spec_.ability_levels; ++l) {
      p[static_cast<std::size_t>(l)] = std::exp(spec_.selection * ability_value(l) * z);
      total += p[static_cast<std::size_t>(l)];
    }
    for (double& v : p) v /= total;
    probs_[d] = std::move(p);
  }
}

double DgpOracle::z_of(int d) const {
  double mid = 0.5 * (spec_.group_min + spec_.group_max);
  double half = std::max(1.0, 0.5 * (spec_.group_max - spec_.group_min));
  return (effective_group(spec_, d) - mid) / half;
}

double DgpOracle::ability_value(int level) const {
  return spec_.ability_levels <= 1 ? 0.0 : static_cast<double>(level) / (spec_.ability_levels - 1);
}

int DgpOracle::level_of(double x) const {
  if (spec_.ability_levels <= 1) return 0;
  long l = std::lround(x * (spec_.ability_levels - 1));
  if (l < 0 || l >= spec_.ability_levels) throw Error(ErrorKind::kOutOfRange, "covariate is not an ability level");
  return static_cast<int>(l);
}

double DgpOracle::ability_prob(int d, int level) const {
  auto it = probs_.find(d);
  if (it == probs_.end() || level < 0 || level >= spec_.ability_levels) {
    throw Error(ErrorKind::kOutOfRange, "ability_prob index out of range");
  }
  return it->second[static_cast<std::size_t>(level)];
}

double DgpOracle::mean_cohort() const { return 0.5 * (spec_.cohort_min + spec_.cohort_max); }

double DgpOracle::rho(int d, int a) const {
  if (spec_.rho_mode == RhoMode::kConstant) return spec_.rho;
  double da = a - spec_.rho_peak_age;
  return spec_.rho - spec_.rho_curvature * da * da +
         spec_.rho_group_slope * (effective_group(spec_, d) - spec_.group_min);
}

bool DgpOracle::treated_at(int d, int a) const {
  return !is_never(d) && a - d >= -spec_.anticipation;
}

double DgpOracle::tau(Gender g, int d, int a) const {
  if (!treated_at(d, a)) return 0.0;
  double e = std::max(0, a - d);
  double base = g == Gender::kFemale ? spec_.tau_f + spec_.tau_f_slope * e
                                     : spec_.tau_m + spec_.tau_m_slope * e;
  return base + spec_.tau_group_slope * (d - spec_.group_min);
}

double DgpOracle::male_cf(int d, int a, int level) const {
  double t = a - spec_.age_min;
  double x = ability_value(level);
  return spec_.base_level + spec_.group_level * (effective_group(spec_, d) - spec_.group_min) +
         (spec_.growth + spec_.ability_growth * x) * t - spec_.curvature * t * t +
         spec_.year_slope * (mean_cohort() + a - spec_.year_ref);
}

double DgpOracle::cond_apo(Gender g, int d, Timing timing, int a, int level) const {
  double cf = male_cf(d, a, level) * (g == Gender::kFemale ? rho(d, a) : 1.0);
  if (timing == Timing::kNever || !treated_at(d, a)) return cf;
  double t = tau(g, d, a);
  return spec_.effect_mode == EffectMode::kMultiplicative ? cf * (1.0 + t)
                                                          : cf + t * spec_.base_level;
}

double DgpOracle::apo(Gender g, int d, Timing timing, int a) const {
  if (a < spec_.age_min || a > spec_.age_max) throw Error(ErrorKind::kOutOfRange, "age out of range");
  if (!is_never(d) && (d < spec_.group_min || d > spec_.group_max)) {
    throw Error(ErrorKind::kOutOfRange, "group out of range");
  }
  double total = 0.0;
  for (int l = 0; l < spec_.ability_levels; ++l) total += ability_prob(d, l) * cond_apo(g, d, timing, a, l);
  return total;
}

double DgpOracle::ate(Gender g, int d, int a) const {
  return apo(g, d, Timing::kObserved, a) - apo(g, d, Timing::kNever, a);
}

double DgpOracle::theta(Gender g, int d, int a) const { return ate(g, d, a) / apo(g, d, Timing::kNever, a); }

double DgpOracle::cate(Gender g, int d, int a, int level) const {
  return cond_apo(g, d, Timing::kObserved, a, level) - cond_apo(g, d, Timing::kNever, a, level);
}

double DgpOracle::gamma_pt(Gender g, int d, int dprime, int a, int b) const {
  return (apo(g, d, Timing::kNever, a) - apo(g, d, Timing::kNever, b)) -
         (apo(g, dprime, Timing::kNever, a) - apo(g, dprime, Timing::kNever, b));
}

double DgpOracle::rho_ratio(int d, Timing t, int a) const {
  return apo(Gender::kFemale, d, t, a) / apo(Gender::kMale, d, t, a);
}

double DgpOracle::delta_rho(int d, int a) const {
  return rho_ratio(d, Timing::kObserved, a) - rho_ratio(d, Timing::kNever, a);
}

double DgpOracle::bias(Gender g, int d, int dprime, int a) const {
  double cf = apo(g, d, Timing::kNever, a);
  return cf / (cf - gamma_pt(g, d, dprime, a));
}

double DgpOracle::penalty_p(int d, int a) const {
  return (ate(Gender::kFemale, d, a) - ate(Gender::kMale, d, a)) / apo(Gender::kFemale, d, Timing::kNever, a);
}

double DgpOracle::value(OracleQuantity q, Gender g, int d, int dprime, int a) const {
  switch (q) {
    case OracleQuantity::kApoCf: return apo(g, d, Timing::kNever, a);
    case OracleQuantity::kApoObs: return apo(g, d, Timing::kObserved, a);
    case OracleQuantity::kAte: return ate(g, d, a);
    case OracleQuantity::kTheta: return theta(g, d, a);
    case OracleQuantity::kGammaPt: return gamma_pt(g, d, dprime, a);
    case OracleQuantity::kBias: return bias(g, d, dprime, a);
    case OracleQuantity::kRhoCf: return rho_ratio(d, Timing::kNever, a);
    case OracleQuantity::kRhoObs: return rho_ratio(d, Timing::kObserved, a);
    case OracleQuantity::kDeltaRho: return delta_rho(d, a);
    case OracleQuantity::kPenaltyP: return penalty_p(d, a);
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown oracle quantity");
}

CellTable DgpOracle::population_cells(std::size_t nominal_count) const {
  CellTable t;
  std::vector<int> gs = spec_.groups();
  if (spec_.never_units > 0) gs.push_back(kNeverTreated);
  for (Gender g : kGenders) {
    for (int d : gs) {
      for (int a = spec_.age_min; a <= spec_.age_max; ++a) {
        CellStats c;
        c.gender = g;
        c.treat_age = d;
        c.age = a;
        c.count = nominal_count;
        c.mean = apo(g, d, Timing::kObserved, a);
        c.sum = c.mean * static_cast<double>(nominal_count);
        t.set(c);
      }
    }
  }
  return t;
}

SliceUnits DgpOracle::population_units(int d, int dprime, int a, int b) const {
  SliceUnits su;
  su.d = d;
  su.dprime = dprime;
  su.a = a;
  su.b = b;
  const int L = spec_.ability_levels;
  const std::size_t n = static_cast<std::size_t>(4 * L);
  su.x.resize(static_cast<Eigen::Index>(n), 1);
  std::size_t i = 0;
  for (Gender g : kGenders) {
    for (int arm = 0; arm < 2; ++arm) {
      int grp = arm == 0 ? d : dprime;
      for (int l = 0; l < L; ++l, ++i) {
        su.gender.push_back(g);
        su.treated.push_back(arm == 0 ? 1 : 0);
        su.y_a.push_back(cond_apo(g, grp, Timing::kObserved, a, l));
        su.y_b.push_back(cond_apo(g, grp, Timing::kObserved, b, l));
        su.weight.push_back(spec_.group_size(g, grp) * ability_prob(grp, l));
        su.cluster.push_back(static_cast<std::uint32_t>(i));
        su.unit.push_back(static_cast<std::uint32_t>(i));
        su.x(static_cast<Eigen::Index>(i), 0) = ability_value(l);
      }
    }
  }
  return su;
}

NuisanceFit DgpOracle::true_nuisances(const SliceUnits& su) const {
  if (su.x.cols() < 1) throw Error(ErrorKind::kInvalidArgument, "frame has no ability covariate");
  NuisanceFit nf;
  const std::size_t n = su.size();
  for (auto& v : nf.propensity) v.resize(n);
  nf.female_share.resize(n);
  for (auto& row : nf.trend)
    for (auto& v : row) v.resize(n);
  nf.propensity_learner = "oracle";
  nf.outcome_learner = "oracle";
  for (std::size_t i = 0; i < n; ++i) {
    int l = level_of(su.x(static_cast<Eigen::Index>(i), 0));
    double mass[2][2];
    for (Gender g : kGenders) {
      int gi = gender_index(g);
      for (int arm = 0; arm < 2; ++arm) {
        int grp = arm == 0 ? su.d : su.dprime;
        mass[gi][arm] = spec_.group_size(g, grp) * ability_prob(grp, l);
        nf.trend[static_cast<std::size_t>(gi)][static_cast<std::size_t>(arm)][i] =
            cond_apo(g, grp, Timing::kObserved, su.a, l) - cond_apo(g, grp, Timing::kObserved, su.b, l);
      }
      nf.propensity[static_cast<std::size_t>(gi)][i] = mass[gi][0] / (mass[gi][0] + mass[gi][1]);
    }
    double f = mass[0][0] + mass[0][1], m = mass[1][0] + mass[1][1];
    nf.female_share[i] = f / (f + m);
  }
  return nf;
}

double DgpOracle::td_covariate_target(int d, int a) const {
  double total = 0.0;
  for (int l = 0; l < spec_.ability_levels; ++l) {
    total += ability_prob(d, l) * (cate(Gender::kFemale, d, a, l) - cate(Gender::kMale, d, a, l));
  }
  return total;
}

void DgpOracle::write_json(std::ostream& out) const {
  nlohmann::ordered_json j;
  std::ostringstream spec_text;
  write_dgp_spec(spec_text, spec_);
  j["spec"] = spec_text.str();
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  std::vector<int> gs = spec_.groups();
  if (spec_.never_units > 0) gs.push_back(kNeverTreated);
  for (Gender g : kGenders) {
    for (int d : gs) {
      for (int a = spec_.age_min; a <= spec_.age_max; ++a) {
        nlohmann::ordered_json c;
        c["gender"] = std::string(1, gender_char(g));
        if (is_never(d)) c["treat_age"] = nullptr;
        else c["treat_age"] = d;
        c["age"] = a;
        c["apo_cf"] = apo(g, d, Timing::kNever, a);
        c["apo_obs"] = apo(g, d, Timing::kObserved, a);
        c["ate"] = ate(g, d, a);
        c["theta"] = theta(g, d, a);
        cells.push_back(c);
      }
    }
  }
  j["cells"] = cells;
  nlohmann::ordered_json ratios = nlohmann::ordered_json::array();
  for (int d : spec_.groups()) {
    for (int a = spec_.age_min; a <= spec_.age_max; ++a) {
      ratios.push_back({{"treat_age", d},
                        {"age", a},
                        {"rho_cf", rho_ratio(d, Timing::kNever, a)},
                        {"rho_obs", rho_ratio(d, Timing::kObserved, a)},
                        {"delta_rho", delta_rho(d, a)}});
    }
  }
  j["ratios"] = ratios;
  out << j.dump(1) << '\n';
}

double oracle_estimand(const DgpOracle& oracle, OracleQuantity which, Gender g, int d, int dprime,
                       int a) {
  return oracle.value(which, g, d, dprime, a);
}

CellTable population_cells(const DgpOracle& oracle) { return oracle.population_cells(); }

// ---------------------------------------------------------------- sampling

Generated generate(const DgpSpec& spec, unsigned threads) {
  validate(spec);
  DgpOracle oracle(spec);

  struct UnitPlan {
    Gender g;
    int d;
  };
  std::vector<UnitPlan> plan;
  std::vector<int> gs = spec.groups();
  gs.push_back(kNeverTreated);
  for (Gender g : kGenders)
    for (int d : gs)
      for (int i = 0; i < spec.group_size(g, d); ++i) plan.push_back({g, d});

  const std::size_t n_units = plan.size();
  const int n_ages = spec.age_max - spec.age_min + 1;
  std::vector<double> y(n_units * static_cast<std::size_t>(n_ages));
  std::vector<int> level(n_units), cohort(n_units);

  const double sd = spec.noise_sd;
  const double phi = spec.ar1_phi;
  const double innov = std::sqrt(1.0 - phi * phi);
  parallel_blocks(n_units, resolve_threads(threads), [&](std::size_t lo, std::size_t hi, unsigned) {
    std::vector<double> lp(static_cast<std::size_t>(spec.ability_levels));
    for (std::size_t u = lo; u < hi; ++u) {
      std::mt19937_64 rng(derive_seed(spec.seed, u));
      const UnitPlan& p = plan[u];
      for (int l = 0; l < spec.ability_levels; ++l) lp[static_cast<std::size_t>(l)] = oracle.ability_prob(p.d, l);
      std::discrete_distribution<int> pick_level(lp.begin(), lp.end());
      std::uniform_int_distribution<int> pick_cohort(spec.cohort_min, spec.cohort_max);
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      level[u] = pick_level(rng);
      cohort[u] = pick_cohort(rng);
      const double year_shift = spec.year_slope * (cohort[u] - oracle.mean_cohort());
      double prev = 0.0;
      for (int k = 0; k < n_ages; ++k) {
        int a = spec.age_min + k;
        // Counterfactual male mean with this unit's calendar year, then the
        // gender ratio and the treatment effect on top.
        double scale = p.g == Gender::kFemale ? oracle.rho(p.d, a) : 1.0;
        double cf = oracle.cond_apo(p.g, p.d, Timing::kNever, a, level[u]) + scale * year_shift;
        double mean = cf;
        if (oracle.treated_at(p.d, a)) {
          double t = oracle.tau(p.g, p.d, a);
          mean = spec.effect_mode == EffectMode::kMultiplicative ? cf * (1.0 + t) : cf + t * spec.base_level;
        }
        double z = normal(rng);
        double u_noise = (spec.noise_mode == NoiseMode::kAr1 && k > 0) ? phi * prev + innov * z : z;
        prev = u_noise;
        double value = mean * std::exp(sd * u_noise - 0.5 * sd * sd);
        if (spec.zero_mass > 0) {
          value = unif(rng) < spec.zero_mass ? 0.0 : value / (1.0 - spec.zero_mass);
        }
        y[u * static_cast<std::size_t>(n_ages) + static_cast<std::size_t>(k)] = value;
      }
    }
  });

  std::vector<std::string> xnames;
  if (spec.emit_covariates) xnames.push_back("x1");
  PanelDataset::Builder builder(xnames);
  builder.reserve_units(n_units);
  builder.reserve_rows(n_units * static_cast<std::size_t>(n_ages));
  std::string id;
  for (std::size_t u = 0; u < n_units; ++u) {
    id = "u" + std::to_string(u);
    double x = oracle.ability_value(level[u]);
    std::span<const double> xs = spec.emit_covariates ? std::span<const double>(&x, 1) : std::span<const double>{};
    auto ui = builder.add_unit(id, "", plan[u].g, plan[u].d, xs);
    for (int k = 0; k < n_ages; ++k) {
      int a = spec.age_min + k;
      builder.add_row(ui, a, cohort[u] + a, y[u * static_cast<std::size_t>(n_ages) + static_cast<std::size_t>(k)]);
    }
  }
  return Generated{std::move(builder).build(), std::move(oracle)};
}

}  // namespace ntd
