#include "ntd/validation.hpp"

#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "ntd/estimators.hpp"
#include "ntd/inference.hpp"
#include "ntd/parallel.hpp"

namespace ntd {

std::string_view framework_name(Framework f) {
  switch (f) {
    case Framework::kDidF: return "DID_F";
    case Framework::kDidM: return "DID_M";
    case Framework::kTd: return "TD";
    case Framework::kNtd: return "NTD";
  }
  return "?";
}

double normal_critical_value(double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw Error(ErrorKind::kInvalidArgument, "alpha must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

namespace {

EstimandId statistic(Framework f) {
  switch (f) {
    case Framework::kDidF: return EstimandId::kDidAteF;
    case Framework::kDidM: return EstimandId::kDidAteM;
    case Framework::kTd: return EstimandId::kTdGap;
    case Framework::kNtd: return EstimandId::kNtdGap;
  }
  return EstimandId::kNtdGap;
}

void decide(ValidationResult& r, double crit) {
  if (r.se > 0) {
    r.z = r.estimate / r.se;
    r.pass = std::abs(r.z) <= crit;
  } else {
    r.z = r.estimate == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.estimate);
    r.pass = r.estimate == 0.0;
  }
}

}  // namespace

ValidationResult pretrend_test(const PanelDataset& data, Framework framework, int d, int dprime,
                               int e, double alpha) {
  ValidationResult r;
  r.framework = framework;
  r.d = d;
  r.dprime = dprime;
  r.e = e;
  r.a = d + e;
  r.b = d - 1;
  auto invalid = [&](const std::string& why) {
    return Error(ErrorKind::kInvalidWindow, "pre-trend test (d=" + std::to_string(d) + ", e=" +
                                                std::to_string(e) + "): " + why);
  };
  if (e >= 0) throw invalid("event time must be negative");
  if (r.a >= r.b) throw invalid("target age must precede the baseline age d-1");
  if (data.num_rows() > 0 && r.a < data.min_age()) throw invalid("target age below the minimum observed age");
  TwoByTwoSlice s = make_slice(data, d, dprime, r.a, r.b);
  EstimandId id = statistic(framework);
  r.estimate = evaluate(s, id);
  ClusterWorkspace ws;
  CellGradient grad = influence_gradient(s, id);
  EstimandId ids[1] = {id};
  r.se = slice_cluster_ses(data, s, ids, ws, std::span<const CellGradient>(&grad, 1))[0];
  decide(r, normal_critical_value(alpha));
  return r;
}

std::vector<ValidationResult> pretrend_suite(const PanelDataset& data, int d, int max_horizon,
                                             const std::vector<int>& pre_events,
                                             const ValidationOptions& options) {
  if (max_horizon < 0) throw Error(ErrorKind::kInvalidArgument, "max_horizon must be >= 0");
  std::vector<ValidationResult> out;
  for (Framework f : kFrameworks) {
    for (int offset = 1; offset <= max_horizon + 1; ++offset) {
      for (int e : pre_events) {
        ValidationResult r;
        r.framework = f;
        r.d = d;
        r.dprime = d + offset;
        r.e = e;
        r.a = d + e;
        r.b = d - 1;
        out.push_back(r);
      }
    }
  }
  parallel_blocks(out.size(), resolve_threads(options.threads), [&](std::size_t lo, std::size_t hi, unsigned) {
    for (std::size_t i = lo; i < hi; ++i) {
      ValidationResult& r = out[i];
      try {
        r = pretrend_test(data, r.framework, r.d, r.dprime, r.e, options.alpha);
      } catch (const Error& err) {
        r.feasible = false;
        r.pass = false;
        r.estimate = r.se = r.z = std::numeric_limits<double>::quiet_NaN();
        r.reason = std::string(to_string(err.kind())) + ": " + err.what();
      }
    }
  });
  if (options.bonferroni) {
    std::size_t m = 0;
    for (const auto& r : out) m += r.feasible ? 1 : 0;
    if (m > 0) {
      double crit = normal_critical_value(options.alpha / static_cast<double>(m));
      for (auto& r : out)
        if (r.feasible) decide(r, crit);
    }
  }
  return out;
}

GateSummary ntd_gate(const std::vector<ValidationResult>& suite, int d) {
  GateSummary g;
  g.d = d;
  for (const auto& r : suite) {
    if (r.d != d || r.framework != Framework::kNtd || !r.feasible) continue;
    ++g.ntd_tests;
    g.ntd_passed += r.pass ? 1 : 0;
  }
  g.plausible = g.ntd_tests > 0 && g.ntd_passed == g.ntd_tests;
  return g;
}

std::vector<RhoPoint> rho_pretrend_series(const PanelDataset& data, std::pair<int, int> d_range,
                                          std::pair<int, int> a_range) {
  std::vector<RhoPoint> out;
  for (int d = d_range.first; d <= d_range.second; ++d) {
    for (int a = a_range.first; a <= std::min(a_range.second, d - 1); ++a) {
      RhoPoint p;
      p.d = d;
      p.a = a;
      CellStats f = cell_mean(data, Gender::kFemale, d, a);
      CellStats m = cell_mean(data, Gender::kMale, d, a);
      if (f.empty() || m.empty()) {
        p.ok = false;
        p.reason = "EmptyCell";
      } else if (!(std::abs(m.mean) > 1e-8 * 0.5 * (std::abs(f.mean) + std::abs(m.mean)))) {
        p.ok = false;
        p.reason = "DegenerateDenominator";
      } else {
        p.ratio = f.mean / m.mean;
        // psi = psi_f / mu_m - mu_f / mu_m^2 psi_m
        CellTerm terms[2] = {{{Gender::kFemale, d, a}, 1.0 / m.mean},
                             {{Gender::kMale, d, a}, -f.mean / (m.mean * m.mean)}};
        p.se = linear_cluster_se(data, terms);
      }
      if (!p.ok) p.ratio = p.se = std::numeric_limits<double>::quiet_NaN();
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace ntd
