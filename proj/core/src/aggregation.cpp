#include "ntd/aggregation.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <sstream>

namespace ntd {

TreatmentDistribution TreatmentDistribution::normalized() const {
  TreatmentDistribution out;
  out.label = label;
  double total = 0.0;
  for (const auto& [d, p] : weights) {
    if (!(p >= 0) || !std::isfinite(p)) {
      throw Error(ErrorKind::kInvalidArgument, "distribution weights must be finite and non-negative");
    }
    total += p;
  }
  if (!(total > 0)) throw Error(ErrorKind::kInvalidArgument, "distribution has no mass");
  for (const auto& [d, p] : weights)
    if (p > 0) out.weights[d] = p / total;
  return out;
}

TreatmentDistribution point_mass(int d) {
  TreatmentDistribution t;
  t.label = "point:" + std::to_string(d);
  t.weights[d] = 1.0;
  return t;
}

TreatmentDistribution uniform_distribution(int d_lo, int d_hi) {
  TreatmentDistribution t;
  t.label = "uniform";
  for (int d = d_lo; d <= d_hi; ++d) t.weights[d] = 1.0;
  return t.normalized();
}

TreatmentDistribution discretized_normal(double mean, double sd, int d_lo, int d_hi) {
  if (!(sd > 0)) throw Error(ErrorKind::kInvalidArgument, "sd must be positive");
  TreatmentDistribution t;
  std::ostringstream label;
  label << "normal(" << mean << "," << sd << ")";
  t.label = label.str();
  for (int d = d_lo; d <= d_hi; ++d) {
    double z = (d - mean) / sd;
    t.weights[d] = std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
  }
  return t.normalized();
}

TreatmentDistribution empirical_distribution(const PanelDataset& data, int e, int d_max,
                                             std::optional<Gender> gender) {
  TreatmentDistribution t;
  t.label = "empirical";
  for (int d : data.treatment_groups()) {
    if (d + e >= d_max) continue;
    double n = 0;
    for (Gender g : kGenders)
      if (!gender || *gender == g) n += static_cast<double>(data.group_units(g, d));
    if (n > 0) t.weights[d] = n;
  }
  if (t.weights.empty()) return t;
  return t.normalized();
}

TreatmentDistribution load_distribution_csv(std::istream& in, std::string label) {
  TreatmentDistribution t;
  t.label = std::move(label);
  std::string line;
  bool header = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("d,", 0) == 0) continue;
    }
    std::istringstream ss(line);
    std::string a, b;
    int d;
    double w;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b) || !(std::istringstream(a) >> d) ||
        !(std::istringstream(b) >> w)) {
      throw Error(ErrorKind::kParseError, "distribution row " + std::to_string(line_no) + ": expected d,weight");
    }
    t.weights[d] = w;
  }
  return t.normalized();
}

namespace {

// Feasible renormalized weights over support points with d + e < d_max.
std::map<int, double> feasible_weights(const TreatmentDistribution& dist, int e, int d_max,
                                       const AggregateOptions& opt, std::vector<int>& dropped) {
  std::map<int, double> w;
  double total = 0.0;
  for (const auto& [d, p] : dist.weights) {
    if (p <= 0) continue;
    if (d + e >= d_max) {
      dropped.push_back(d);
      continue;
    }
    w[d] = p;
    total += p;
  }
  if (opt.strict && !dropped.empty()) {
    std::string list;
    for (int d : dropped) list += (list.empty() ? "" : ",") + std::to_string(d);
    throw Error(ErrorKind::kMissingGroup, "support points with d + e >= d_max: " + list);
  }
  if (!(total > 0)) throw Error(ErrorKind::kMissingGroup, "no feasible support points for e = " + std::to_string(e));
  for (auto& [d, p] : w) p /= total;
  return w;
}

void require(const GroupValues& v, const std::map<int, double>& w, const char* what) {
  std::string missing;
  for (const auto& [d, p] : w)
    if (!v.count(d)) missing += (missing.empty() ? "" : ",") + std::to_string(d);
  if (!missing.empty()) {
    throw Error(ErrorKind::kMissingGroup, std::string("missing ") + what + " for groups " + missing);
  }
}

AggregateResult weighted_average(const GroupValues& v, const TreatmentDistribution& dist, int e,
                                 int d_max, const AggregateOptions& opt, const char* what) {
  AggregateResult r;
  r.label = dist.label;
  r.e = e;
  r.weights = feasible_weights(dist, e, d_max, opt, r.dropped);
  require(v, r.weights, what);
  double var = 0.0;
  for (const auto& [d, p] : r.weights) {
    const GroupValue& g = v.at(d);
    r.value += p * g.value;
    var += p * p * g.se * g.se;
  }
  r.se = std::sqrt(var);
  return r;
}

}  // namespace

AggregateResult theta_agg1(const GroupValues& thetas, const TreatmentDistribution& dist, int e,
                           int d_max, const AggregateOptions& opt) {
  return weighted_average(thetas, dist, e, d_max, opt, "theta");
}

AggregateResult rho_agg(const GroupValues& deltas, const TreatmentDistribution& dist, int e,
                        int d_max, const AggregateOptions& opt) {
  return weighted_average(deltas, dist, e, d_max, opt, "delta rho");
}

AggregateResult theta_agg2(const GroupValues& ates, const GroupValues& apos,
                           const TreatmentDistribution& dist, int e, int d_max,
                           const std::map<int, double>& theta_se, const AggregateOptions& opt) {
  AggregateResult r;
  r.label = dist.label;
  r.e = e;
  std::map<int, double> p = feasible_weights(dist, e, d_max, opt, r.dropped);
  require(ates, p, "ATE");
  require(apos, p, "APO");
  double num = 0.0, den = 0.0;
  for (const auto& [d, pd] : p) {
    num += pd * ates.at(d).value;
    den += pd * apos.at(d).value;
  }
  double scale = 0.0;
  for (const auto& [d, pd] : p) scale += pd * std::abs(apos.at(d).value);
  if (!(std::abs(den) > 1e-12 * scale)) {
    throw Error(ErrorKind::kDegenerateDenominator, "sum of p_d APO_d is zero");
  }
  r.value = num / den;
  double var = 0.0;
  bool have_se = true;
  for (const auto& [d, pd] : p) {
    double w = pd * apos.at(d).value / den;
    r.weights[d] = w;
    auto it = theta_se.find(d);
    if (it == theta_se.end()) have_se = false;
    else var += w * w * it->second * it->second;
  }
  r.se = have_se ? std::sqrt(var) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

std::vector<AggregateResult> reference_reweight(const std::vector<Stratum>& strata,
                                                const TreatmentDistribution& reference, int e,
                                                int d_max, const AggregateOptions& opt) {
  std::vector<AggregateResult> out;
  for (const Stratum& s : strata) {
    AggregateResult r;
    try {
      r = weighted_average(s.values, reference, e, d_max, opt, "estimate");
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::kMissingGroup) throw;
      r.ok = false;
      r.reason = std::string("MissingGroup: ") + err.what();
      r.value = r.se = std::numeric_limits<double>::quiet_NaN();
      r.e = e;
    }
    r.label = s.label;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ntd
