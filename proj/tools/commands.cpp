#include <map>
#include <sstream>

#include "ntd/aggregation.hpp"
#include "ntd/bias.hpp"
#include "ntd/covariates.hpp"
#include "ntd/dgp.hpp"
#include "ntd/error.hpp"
#include "ntd/event_study.hpp"
#include "ntd/inference.hpp"
#include "ntd/pipeline.hpp"
#include "ntd/validation.hpp"
#include "run.hpp"

namespace ntd::cli {

namespace {

std::string describe(const Error& e) { return std::string(to_string(e.kind())) + ": " + e.what(); }

std::vector<EstimandId> requested_estimands(const RunConfig& cfg) {
  if (cfg.estimands.empty()) return {kAllEstimands.begin(), kAllEstimands.end()};
  std::vector<EstimandId> out;
  for (const auto& name : cfg.estimands) {
    auto id = parse_estimand(name);
    if (!id) throw Error(ErrorKind::kInvalidSpec, "unknown estimand '" + name + "'");
    out.push_back(*id);
  }
  return out;
}

GridOptions grid_options(const Run& run) {
  const RunConfig& c = run.config();
  GridOptions g;
  g.d_min = c.d_min;
  g.d_max = c.d_max;
  g.e_min = c.e_min;
  g.e_max = c.e_max;
  g.control_offset = c.control_offset;
  g.baseline_gap = c.baseline_gap;
  g.denom_tol = c.denom_tol;
  g.threads = run.threads();
  g.estimands = requested_estimands(c);
  return g;
}

std::string status(bool ok) { return ok ? "ok" : "error"; }

// Slice for (d, e) under the configured design, or an error description.
TwoByTwoSlice slice_for(const PanelDataset& data, const RunConfig& c, int d, int e) {
  TwoByTwoSlice s = build_two_by_two(data, d, d + e, c.control_offset, c.baseline_gap);
  s.denom_tol = c.denom_tol;
  return s;
}

}  // namespace

int cmd_simulate(Run& run) {
  const RunConfig& c = run.config();
  if (c.spec.empty()) throw Error(ErrorKind::kInvalidSpec, "simulate needs a DGP spec (--spec or spec = ...)");
  DgpSpec spec = load_dgp_spec(c.spec);
  spec.seed = c.seed;  // the run seed decides the draw
  validate(spec);
  Generated gen = generate(spec, run.threads());
  {
    std::ofstream out = run.open("panel.csv");
    write_panel(out, gen.data);
    run.set_rows("panel.csv", gen.data.num_rows());
  }
  {
    std::ofstream out = run.open("oracle.json");
    gen.oracle.write_json(out);
  }
  std::ostringstream text;
  write_dgp_spec(text, spec);
  {
    std::ofstream out = run.open("dgp_spec.txt");
    out << text.str();
  }
  run.note("dgp_spec", text.str());
  run.note("panel", {{"rows", gen.data.num_rows()}, {"units", gen.data.num_units()}});
  return 0;
}

int cmd_estimate(Run& run) {
  const RunConfig& c = run.config();
  PanelDataset data = run.load_input();
  GridOptions opt = grid_options(run);
  std::vector<GridRecord> grid = estimate_grid(data, opt);
  const std::size_t k = opt.estimands.size();

  // Optional cluster bootstrap per slice, seeded by slice position.
  std::vector<double> boot(grid.size(), std::numeric_limits<double>::quiet_NaN());
  std::size_t redraws = 0;
  if (c.bootstrap_reps > 0) {
    for (std::size_t i = 0; i < grid.size(); i += k) {
      std::vector<EstimandId> ids;
      std::vector<std::size_t> pos;
      for (std::size_t j = 0; j < k; ++j) {
        if (grid[i + j].ok) {
          ids.push_back(opt.estimands[j]);
          pos.push_back(i + j);
        }
      }
      if (ids.empty()) continue;
      TwoByTwoSlice s = slice_for(data, c, grid[i].record.d, grid[i].e);
      BootstrapOptions bo;
      bo.reps = c.bootstrap_reps;
      bo.seed = derive_seed(c.seed, i / k);
      bo.threads = run.threads();
      BootstrapResult br = cluster_bootstrap(data, s, ids, bo);
      redraws += br.redraws;
      for (std::size_t j = 0; j < ids.size(); ++j) boot[pos[j]] = br.se[j];
    }
    run.note("bootstrap", {{"reps", c.bootstrap_reps}, {"redraws", redraws}});
  }

  std::size_t errors = 0;
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  {
    std::ofstream out = run.open("estimates.csv");
    out << "estimand,d,dprime,a,b,e,value,se,boot_se,n_obs,n_clusters,status,error\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const GridRecord& g = grid[i];
      const EstimateRecord& r = g.record;
      errors += g.ok ? 0 : 1;
      out << r.estimand << ',' << r.d << ',' << r.dprime << ',' << r.a << ',' << r.b << ',' << g.e << ','
          << num(r.value) << ',' << num(r.se) << ',' << num(boot[i]) << ',' << r.n_obs << ',' << r.n_clusters
          << ',' << status(g.ok) << ',' << quoted(g.error) << '\n';
      nlohmann::ordered_json j{{"estimand", r.estimand}, {"d", r.d}, {"dprime", r.dprime}, {"a", r.a},
                               {"b", r.b},               {"e", g.e}};
      j["value"] = g.ok ? nlohmann::ordered_json(r.value) : nlohmann::ordered_json(nullptr);
      j["se"] = g.ok ? nlohmann::ordered_json(r.se) : nlohmann::ordered_json(nullptr);
      j["n_obs"] = r.n_obs;
      j["n_clusters"] = r.n_clusters;
      if (!g.ok) j["error"] = g.error;
      records.push_back(std::move(j));
    }
    run.set_rows("estimates.csv", grid.size(), errors);
  }
  {
    std::ofstream out = run.open("estimates.json");
    out << records.dump(2) << '\n';
    run.set_rows("estimates.json", records.size());
  }

  if (c.dump_if) {
    std::ofstream out = run.open("influence_clusters.csv");
    out << "estimand,d,dprime,a,b,e,cluster_id,if_sum,n_units\n";
    std::size_t rows = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const GridRecord& g = grid[i];
      if (!g.ok) continue;
      TwoByTwoSlice s = slice_for(data, c, g.record.d, g.e);
      InfluenceVector iv = influence_composite(data, s, opt.estimands[i % k]);
      for (const ClusterSum& cs : cluster_sums(iv)) {
        out << g.record.estimand << ',' << g.record.d << ',' << g.record.dprime << ',' << g.record.a << ','
            << g.record.b << ',' << g.e << ',' << quoted(data.cluster_name(cs.cluster)) << ',' << num(cs.sum)
            << ',' << iv.n << '\n';
        ++rows;
      }
    }
    run.set_rows("influence_clusters.csv", rows);
  }
  return 0;
}

int cmd_validate(Run& run) {
  const RunConfig& c = run.config();
  PanelDataset data = run.load_input();
  ValidationOptions vo;
  vo.alpha = c.alpha;
  vo.bonferroni = c.bonferroni;
  vo.threads = run.threads();

  std::size_t rows = 0, errors = 0;
  std::ofstream suite_out = run.open("validation.csv");
  std::ofstream gate_out = run.open("gate.csv");
  suite_out << "framework,d,dprime,offset,e,a,b,estimate,se,z,pass,feasible,reason\n";
  gate_out << "d,ntd_tests,ntd_passed,plausible\n";
  for (int d = c.d_min; d <= c.d_max; ++d) {
    auto suite = pretrend_suite(data, d, c.max_horizon, c.pre_events, vo);
    for (const auto& r : suite) {
      errors += r.feasible ? 0 : 1;
      suite_out << framework_name(r.framework) << ',' << r.d << ',' << r.dprime << ',' << r.dprime - r.d << ','
                << r.e << ',' << r.a << ',' << r.b << ',' << num(r.estimate) << ',' << num(r.se) << ','
                << num(r.z) << ',' << (r.pass ? "true" : "false") << ',' << (r.feasible ? "true" : "false")
                << ',' << quoted(r.reason) << '\n';
    }
    rows += suite.size();
    GateSummary g = ntd_gate(suite, d);
    gate_out << g.d << ',' << g.ntd_tests << ',' << g.ntd_passed << ',' << (g.plausible ? "true" : "false")
             << '\n';
  }
  run.set_rows("validation.csv", rows, errors);
  run.set_rows("gate.csv", static_cast<std::size_t>(c.d_max - c.d_min + 1));

  std::ofstream rho_out = run.open("rho_pretrend.csv");
  rho_out << "d,a,ratio,se,status,reason\n";
  auto series = rho_pretrend_series(data, {c.d_min, c.d_max}, {data.min_age(), c.d_max - 1});
  std::size_t rho_errors = 0;
  for (const auto& p : series) {
    rho_errors += p.ok ? 0 : 1;
    rho_out << p.d << ',' << p.a << ',' << num(p.ratio) << ',' << num(p.se) << ',' << status(p.ok) << ','
            << quoted(p.reason) << '\n';
  }
  run.set_rows("rho_pretrend.csv", series.size(), rho_errors);
  return 0;
}

namespace {

TreatmentDistribution parse_distribution(const std::string& text, const PanelDataset& data, const RunConfig& c,
                                         int e, int d_max) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  auto arg = [&](std::size_t i) {
    if (i >= parts.size()) throw Error(ErrorKind::kInvalidSpec, "distribution '" + text + "' is missing arguments");
    return std::stod(parts[i]);
  };
  TreatmentDistribution dist;
  const std::string& kind = parts.empty() ? text : parts[0];
  if (kind == "empirical") {
    dist = empirical_distribution(data, e, d_max);
  } else if (kind == "uniform") {
    dist = parts.size() >= 3 ? uniform_distribution(static_cast<int>(arg(1)), static_cast<int>(arg(2)))
                             : uniform_distribution(c.d_min, c.d_max);
  } else if (kind == "normal") {
    dist = discretized_normal(arg(1), arg(2), c.d_min, c.d_max);
  } else if (kind == "point") {
    dist = point_mass(static_cast<int>(arg(1)));
  } else if (kind == "file") {
    if (parts.size() < 2) throw Error(ErrorKind::kInvalidSpec, "distribution 'file' needs a path");
    std::ifstream in(text.substr(5));
    if (!in) throw Error(ErrorKind::kIo, "cannot open distribution file " + text.substr(5));
    dist = load_distribution_csv(in, text);
  } else {
    throw Error(ErrorKind::kInvalidSpec, "unknown distribution '" + text + "'");
  }
  dist.label = text;
  // Only groups inside the configured range carry estimates.
  for (auto it = dist.weights.begin(); it != dist.weights.end();) {
    it = (it->first < c.d_min || it->first > c.d_max) ? dist.weights.erase(it) : std::next(it);
  }
  return dist;
}

}  // namespace

int cmd_aggregate(Run& run) {
  const RunConfig& c = run.config();
  PanelDataset data = run.load_input();
  if (data.treatment_groups().empty()) throw Error(ErrorKind::kMissingGroup, "panel has no treatment groups");
  const int d_max = data.treatment_groups().back();
  GridOptions opt = grid_options(run);
  opt.estimands = {EstimandId::kDidApoF, EstimandId::kDidAteF, EstimandId::kDidThetaF, EstimandId::kDidApoM,
                   EstimandId::kDidAteM, EstimandId::kDidThetaM, EstimandId::kNtdAlt};
  auto grid = estimate_grid(data, opt);

  // (estimand, e) -> per-group values.
  std::map<std::pair<EstimandId, int>, GroupValues> values;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!grid[i].ok) continue;
    EstimandId id = opt.estimands[i % opt.estimands.size()];
    values[{id, grid[i].e}][grid[i].record.d] = {grid[i].record.value, grid[i].record.se};
  }
  auto get = [&](EstimandId id, int e) -> const GroupValues& { return values[{id, e}]; };

  std::ofstream out = run.open("aggregates.csv");
  std::ofstream wout = run.open("aggregate_weights.csv");
  out << "label,measure,gender,e,value,se,n_support,dropped,status,reason\n";
  wout << "label,measure,gender,e,d,weight\n";
  std::size_t rows = 0, errors = 0, wrows = 0;
  auto emit = [&](const std::string& measure, const std::string& gender, const AggregateResult& r) {
    std::string dropped;
    for (int d : r.dropped) dropped += (dropped.empty() ? "" : ";") + std::to_string(d);
    out << quoted(r.label) << ',' << measure << ',' << gender << ',' << r.e << ',' << num(r.value) << ','
        << num(r.se) << ',' << r.weights.size() << ',' << dropped << ',' << status(r.ok) << ','
        << quoted(r.reason) << '\n';
    for (const auto& [d, w] : r.weights) {
      wout << quoted(r.label) << ',' << measure << ',' << gender << ',' << r.e << ',' << d << ',' << num(w) << '\n';
      ++wrows;
    }
    ++rows;
    errors += r.ok ? 0 : 1;
  };
  auto guarded = [&](const std::string& label, int e, auto&& f) {
    try {
      return f();
    } catch (const Error& err) {
      AggregateResult r;
      r.label = label;
      r.e = e;
      r.ok = false;
      r.value = r.se = std::numeric_limits<double>::quiet_NaN();
      r.reason = describe(err);
      return r;
    }
  };

  for (const std::string& spec : c.distributions) {
    for (int e = c.e_min; e <= c.e_max; ++e) {
      TreatmentDistribution dist;
      try {
        dist = parse_distribution(spec, data, c, e, d_max);
      } catch (const Error& err) {
        if (err.kind() == ErrorKind::kInvalidSpec || err.kind() == ErrorKind::kIo) throw;
        AggregateResult r;
        r.label = spec;
        r.e = e;
        r.ok = false;
        r.value = r.se = std::numeric_limits<double>::quiet_NaN();
        r.reason = describe(err);
        emit("setup", "NA", r);
        continue;
      }
      for (Gender g : kGenders) {
        bool f = g == Gender::kFemale;
        std::string gl(1, gender_char(g));
        EstimandId theta = f ? EstimandId::kDidThetaF : EstimandId::kDidThetaM;
        EstimandId ate = f ? EstimandId::kDidAteF : EstimandId::kDidAteM;
        EstimandId apo = f ? EstimandId::kDidApoF : EstimandId::kDidApoM;
        emit("theta_agg1", gl, guarded(spec, e, [&] { return theta_agg1(get(theta, e), dist, e, d_max); }));
        std::map<int, double> theta_se;
        for (const auto& [d, v] : get(theta, e)) theta_se[d] = v.se;
        emit("theta_agg2", gl,
             guarded(spec, e, [&] { return theta_agg2(get(ate, e), get(apo, e), dist, e, d_max, theta_se); }));
      }
      emit("rho_agg", "NA", guarded(spec, e, [&] { return rho_agg(get(EstimandId::kNtdAlt, e), dist, e, d_max); }));
    }
  }
  run.set_rows("aggregates.csv", rows, errors);
  run.set_rows("aggregate_weights.csv", wrows);
  return 0;
}

int cmd_bias_bound(Run& run) {
  const RunConfig& c = run.config();
  PanelDataset data = run.load_input();
  std::ofstream out = run.open("bias_bound.csv");
  out << "d,dprime,a,b,e,assumed_theta_m,conventional,corrected,correction_factor,se,status,error\n";
  std::size_t rows = 0, errors = 0;
  for (int d = c.d_min; d <= c.d_max; ++d) {
    for (int e = c.e_min; e <= c.e_max; ++e) {
      const int a = d + e, dp = a + c.control_offset, b = d - c.baseline_gap;
      std::vector<BiasGridRow> grid;
      std::string err;
      try {
        grid = bias_grid(data, slice_for(data, c, d, e), c.theta_grid);
      } catch (const Error& x) {
        err = describe(x);
      }
      if (!err.empty()) {
        for (double t : c.theta_grid) {
          out << d << ',' << dp << ',' << a << ',' << b << ',' << e << ',' << num(t) << ",NA,NA,NA,NA,error,"
              << quoted(err) << '\n';
          ++rows;
          ++errors;
        }
        continue;
      }
      for (const auto& r : grid) {
        out << d << ',' << dp << ',' << a << ',' << b << ',' << e << ',' << num(r.assumed_theta_m) << ','
            << num(r.conventional) << ',' << num(r.corrected) << ',' << num(r.correction_factor) << ','
            << num(r.se) << ",ok,\n";
        ++rows;
      }
    }
  }
  run.set_rows("bias_bound.csv", rows, errors);
  return 0;
}

int cmd_decompose(Run& run) {
  const RunConfig& c = run.config();
  PanelDataset data = run.load_input();
  std::ofstream out = run.open("decomposition.csv");
  out << "d,a,dprime,b,e,rho_d_a,rho_d_b,rho_dprime_a,rho_dprime_b,apo_star,apo_d_b,apo_dprime_a,apo_dprime_b,"
         "term1,term2,term3,term4,imputed_rho,donors,status,error\n";
  std::size_t rows = 0, errors = 0;
  for (int d = c.d_min; d <= c.d_max; ++d) {
    for (int e = c.e_min; e <= c.e_max; ++e) {
      const int a = d + e;
      ++rows;
      try {
        DecompositionRow r = decomposition_row(data, d, a, c.donors);
        std::string donors;
        for (int x : r.donors) donors += (donors.empty() ? "" : ";") + std::to_string(x);
        out << r.d << ',' << r.a << ',' << r.dprime << ',' << r.b << ',' << e;
        for (double v : r.rho) out << ',' << num(v);
        for (double v : r.apo) out << ',' << num(v);
        for (double v : r.terms) out << ',' << num(v);
        out << ',' << num(r.imputed_rho) << ',' << donors << ",ok,\n";
      } catch (const Error& x) {
        ++errors;
        out << d << ',' << a << ',' << a + 1 << ',' << d - 1 << ',' << e;
        for (int i = 0; i < 13; ++i) out << ",NA";
        out << ",,error," << quoted(describe(x)) << '\n';
      }
    }
  }
  run.set_rows("decomposition.csv", rows, errors);
  return 0;
}

namespace {

Learner parse_learner(const std::string& key, const std::string& v) {
  if (v == "model") return Learner::kModel;
  if (v == "intercept") return Learner::kInterceptOnly;
  throw Error(ErrorKind::kInvalidSpec, "config key '" + key + "': expected model or intercept");
}

std::vector<DrMethod> parse_methods(const std::string& v) {
  if (v == "dr") return {DrMethod::kDr};
  if (v == "or") return {DrMethod::kOr};
  if (v == "ipw") return {DrMethod::kIpw};
  if (v == "all") return {DrMethod::kOr, DrMethod::kIpw, DrMethod::kDr};
  throw Error(ErrorKind::kInvalidSpec, "config key 'dr_method': expected dr, or, ipw or all");
}

}  // namespace

int cmd_dr(Run& run) {
  const RunConfig& c = run.config();
  PanelDataset data = run.load_input();
  if (data.num_covariates() == 0) throw Error(ErrorKind::kMissingColumn, "dr needs covariate columns (x1, x2, ...)");
  LearnerConfig lc;
  lc.propensity = parse_learner("propensity_learner", c.propensity_learner);
  lc.outcome = parse_learner("outcome_learner", c.outcome_learner);
  lc.clip = c.clip;
  lc.cross_fit = c.cross_fit;
  lc.threads = run.threads();
  std::vector<DrMethod> methods = parse_methods(c.dr_method);
  FoldAssignment folds = assign_folds(data, c.folds, c.seed);

  std::ofstream out = run.open("dr.csv");
  std::ofstream fout = run.open("dr_folds.csv");
  out << "estimand,method,d,dprime,a,b,e,value,se,n_obs,n_clusters,clipped,status,error\n";
  fout << "d,e,fold,train_units,test_units,propensity_logloss,trend_mse\n";
  std::size_t rows = 0, errors = 0, frows = 0;
  const char* names[] = {"APO_F", "ATE_F", "THETA_F", "APO_M", "ATE_M", "THETA_M", "TD"};
  for (int d = c.d_min; d <= c.d_max; ++d) {
    for (int e = c.e_min; e <= c.e_max; ++e) {
      const int a = d + e, dp = a + c.control_offset, b = d - c.baseline_gap;
      auto prefix = [&](const char* est, DrMethod m) {
        std::ostringstream p;
        p << est << ',' << method_name(m) << ',' << d << ',' << dp << ',' << a << ',' << b << ',' << e;
        return p.str();
      };
      try {
        SliceUnits su = slice_units(data, d, dp, a, b);
        NuisanceFit nf = fit_nuisances(su, c.cross_fit ? &folds : nullptr, lc);
        for (const auto& f : nf.folds) {
          fout << d << ',' << e << ',' << f.fold << ',' << f.train_units << ',' << f.test_units << ','
               << num(f.propensity_logloss) << ',' << num(f.trend_mse) << '\n';
          ++frows;
        }
        for (DrMethod m : methods) {
          std::vector<EstimateRecord> recs;
          for (Gender g : kGenders) {
            EstimateRecord apo = apo_with_covariates(su, g, nf, m);
            AteTheta at = ate_theta_with_covariates(su, g, nf, apo);
            recs.push_back(apo);
            recs.push_back(at.ate);
            recs.push_back(at.theta);
          }
          recs.push_back(td_with_covariates(su, nf, m));
          for (std::size_t j = 0; j < recs.size(); ++j) {
            out << prefix(names[j], m) << ',' << num(recs[j].value) << ',' << num(recs[j].se) << ','
                << recs[j].n_obs << ',' << recs[j].n_clusters << ',' << nf.clipped << ",ok,\n";
            ++rows;
          }
        }
      } catch (const Error& x) {
        for (DrMethod m : methods) {
          for (const char* n : names) {
            out << prefix(n, m) << ",NA,NA,0,0,0,error," << quoted(describe(x)) << '\n';
            ++rows;
            ++errors;
          }
        }
      }
    }
  }
  run.set_rows("dr.csv", rows, errors);
  run.set_rows("dr_folds.csv", frows);
  return 0;
}

int cmd_event_study(Run& run) {
  const RunConfig& c = run.config();
  PanelDataset data = run.load_input();
  EventStudyOptions opt;
  opt.window = {c.window_lo, c.window_hi};
  opt.include_never = c.include_never;
  opt.threads = run.threads();
  EventStudyFit fits[2] = {fit_event_study(data, Gender::kFemale, opt), fit_event_study(data, Gender::kMale, opt)};

  std::ofstream out = run.open("event_study.csv");
  out << "gender,e,beta,se,ytilde_mean,theta_es,n_obs\n";
  std::size_t rows = 0;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const EventStudyFit& f : fits) {
    for (std::size_t j = 0; j < f.events.size(); ++j) {
      out << gender_char(f.gender) << ',' << f.events[j] << ',' << num(f.beta[j]) << ',' << num(f.se[j]) << ','
          << num(f.ytilde_mean[j]) << ',' << num(f.theta_es[j]) << ',' << f.event_obs[j] << '\n';
      ++rows;
    }
    meta[std::string(1, gender_char(f.gender))] = {
        {"n_obs", f.n_obs}, {"n_clusters", f.n_clusters}, {"dropped_columns", f.dropped_columns}};
  }
  run.set_rows("event_study.csv", rows);
  run.note("event_study", meta);

  std::ofstream gout = run.open("event_gap.csv");
  gout << "e,gap,pre\n";
  auto gaps = event_study_gap(fits[0], fits[1]);
  for (const auto& g : gaps) gout << g.e << ',' << num(g.gap) << ',' << (g.pre ? "true" : "false") << '\n';
  run.set_rows("event_gap.csv", gaps.size());
  return 0;
}

}  // namespace ntd::cli
