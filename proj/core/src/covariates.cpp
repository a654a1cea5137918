#include "ntd/covariates.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ntd/parallel.hpp"

namespace ntd {

SliceUnits slice_units(const PanelDataset& data, int d, int dprime, int a, int b) {
  SliceUnits su;
  su.d = d;
  su.dprime = dprime;
  su.a = a;
  su.b = b;
  const std::size_t k = data.num_covariates();
  std::vector<double> xs;
  for (Gender g : kGenders) {
    for (int arm = 0; arm < 2; ++arm) {
      int grp = arm == 0 ? d : dprime;
      auto ra = data.cell_rows(g, grp, a);
      auto rb = data.cell_rows(g, grp, b);
      // Both spans are sorted by unit; keep units observed at both ages.
      std::size_t i = 0, j = 0;
      while (i < ra.size() && j < rb.size()) {
        std::uint32_t ua = data.row_unit(ra[i]), ub = data.row_unit(rb[j]);
        if (ua < ub) {
          ++i;
        } else if (ub < ua) {
          ++j;
        } else {
          su.gender.push_back(g);
          su.treated.push_back(arm == 0 ? 1 : 0);
          su.y_a.push_back(data.row_earnings(ra[i]));
          su.y_b.push_back(data.row_earnings(rb[j]));
          su.weight.push_back(1.0);
          su.cluster.push_back(data.unit_cluster(ua));
          su.unit.push_back(ua);
          auto x = data.unit_covariates(ua);
          xs.insert(xs.end(), x.begin(), x.end());
          ++i;
          ++j;
        }
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(su.size());
  su.x.resize(n, static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c)
      su.x(i, static_cast<Eigen::Index>(c)) = xs[static_cast<std::size_t>(i) * k + c];
  return su;
}

FoldAssignment assign_folds(std::size_t num_units, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::kInvalidArgument, "K must be at least 2");
  if (num_units < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::kTooFewUnits, "fewer units (" + std::to_string(num_units) +
                                             ") than folds (" + std::to_string(k) + ")");
  }
  std::vector<std::size_t> perm(num_units);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  FoldAssignment fa;
  fa.k = k;
  fa.fold.assign(num_units, -1);
  for (std::size_t i = 0; i < num_units; ++i) fa.fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fa;
}

FoldAssignment assign_folds(const PanelDataset& data, int k, std::uint64_t seed) {
  return assign_folds(data.num_units(), k, seed);
}

std::string_view method_name(DrMethod m) {
  switch (m) {
    case DrMethod::kOr: return "OR";
    case DrMethod::kIpw: return "IPW";
    case DrMethod::kDr: return "DR";
  }
  return "?";
}

double NuisanceFit::pi(std::size_t i, Gender g, int arm) const {
  double share = g == Gender::kFemale ? female_share[i] : 1.0 - female_share[i];
  double p = propensity[static_cast<std::size_t>(gender_index(g))][i];
  return share * (arm == 0 ? p : 1.0 - p);
}

// ---------------------------------------------------------------- learners

Eigen::VectorXd fit_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& w) {
  Eigen::VectorXd sw = w.array().sqrt();
  Eigen::MatrixXd Xw = sw.asDiagonal() * X;
  Eigen::VectorXd yw = sw.asDiagonal() * y;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) {
    throw Error(ErrorKind::kSingularDesign, "outcome regression design is rank deficient");
  }
  return qr.solve(yw);
}

Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& w, double tol, int max_iter) {
  const Eigen::Index p = X.cols();
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr((w.array().sqrt().matrix()).asDiagonal() * X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) throw Error(ErrorKind::kSingularDesign, "propensity design is rank deficient");
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd mu = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    Eigen::VectorXd wt = (w.array() * mu.array() * (1.0 - mu.array())).matrix();
    Eigen::VectorXd grad = X.transpose() * (w.array() * (y - mu).array()).matrix();
    Eigen::MatrixXd H = X.transpose() * wt.asDiagonal() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) throw Error(ErrorKind::kSingularDesign, "logistic Hessian is singular");
    Eigen::VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) break;  // separation: keep the last finite fit, clipping handles it
    beta += step;
    if (step.lpNorm<Eigen::Infinity>() < tol) break;
  }
  return beta;
}

namespace {

struct Model {
  Learner kind = Learner::kModel;
  bool logistic = false;
  double constant = 0.0;  // intercept-only prediction
  Eigen::VectorXd beta;

  double predict(const Eigen::MatrixXd& x, Eigen::Index i) const {
    if (kind == Learner::kInterceptOnly || x.cols() == 0) return constant;
    double eta = beta(0) + x.row(i).dot(beta.tail(beta.size() - 1));
    return logistic ? 1.0 / (1.0 + std::exp(-eta)) : eta;
  }
};

Model train(const SliceUnits& su, const std::vector<std::size_t>& rows,
            const std::vector<double>& target, Learner kind, bool logistic,
            const LearnerConfig& cfg) {
  Model m;
  m.kind = kind;
  m.logistic = logistic;
  double sw = 0.0, swy = 0.0;
  for (std::size_t r : rows) {
    sw += su.weight[r];
    swy += su.weight[r] * target[r];
  }
  m.constant = swy / sw;
  if (kind == Learner::kInterceptOnly || su.x.cols() == 0) return m;
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X(n, su.x.cols() + 1);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t r = rows[static_cast<std::size_t>(i)];
    X(i, 0) = 1.0;
    X.row(i).tail(su.x.cols()) = su.x.row(static_cast<Eigen::Index>(r));
    y(i) = target[r];
    w(i) = su.weight[r];
  }
  m.beta = logistic ? fit_logistic(X, y, w, cfg.tol, cfg.max_iter) : fit_linear(X, y, w);
  return m;
}

std::string learner_label(Learner l, bool logistic) {
  if (l == Learner::kInterceptOnly) return "intercept-only";
  return logistic ? "logistic" : "linear";
}

}  // namespace

NuisanceFit fit_nuisances(const SliceUnits& su, const FoldAssignment* folds,
                          const LearnerConfig& cfg) {
  const std::size_t n = su.size();
  if (cfg.cross_fit && !folds) throw Error(ErrorKind::kInvalidArgument, "cross-fitting requires folds");
  const int K = cfg.cross_fit ? folds->k : 1;
  std::vector<int> unit_fold(n, 0);
  if (cfg.cross_fit) {
    for (std::size_t i = 0; i < n; ++i) {
      if (su.unit[i] >= folds->fold.size()) throw Error(ErrorKind::kInvalidArgument, "fold assignment does not cover slice units");
      unit_fold[i] = folds->fold[su.unit[i]];
    }
  }

  std::vector<double> is_treated(n), is_female(n), dy(n);
  for (std::size_t i = 0; i < n; ++i) {
    is_treated[i] = su.treated[i];
    is_female[i] = su.gender[i] == Gender::kFemale ? 1.0 : 0.0;
    dy[i] = su.y_a[i] - su.y_b[i];
  }

  NuisanceFit nf;
  for (auto& v : nf.propensity) v.assign(n, 0.0);
  nf.female_share.assign(n, 0.0);
  for (auto& row : nf.trend)
    for (auto& v : row) v.assign(n, 0.0);
  nf.propensity_learner = learner_label(cfg.propensity, true);
  nf.outcome_learner = learner_label(cfg.outcome, false);
  nf.folds.resize(static_cast<std::size_t>(K));

  parallel_blocks(static_cast<std::size_t>(K), resolve_threads(cfg.threads),
                  [&](std::size_t lo, std::size_t hi, unsigned) {
    for (std::size_t k = lo; k < hi; ++k) {
      std::vector<std::size_t> train_all, test;
      for (std::size_t i = 0; i < n; ++i) {
        bool in_fold = unit_fold[i] == static_cast<int>(k);
        if (!cfg.cross_fit || !in_fold) train_all.push_back(i);
        if (!cfg.cross_fit || in_fold) test.push_back(i);
      }
      auto subset = [&](auto pred) {
        std::vector<std::size_t> out;
        for (std::size_t i : train_all)
          if (pred(i)) out.push_back(i);
        return out;
      };
      auto degenerate = [&](const std::string& what) {
        return Error(ErrorKind::kDegenerateTrainingSplit,
                     "fold " + std::to_string(k) + ": training split lacks " + what);
      };

      std::array<Model, 2> prop;
      std::array<std::array<Model, 2>, 2> trend;
      for (Gender g : kGenders) {
        const auto gi = static_cast<std::size_t>(gender_index(g));
        auto rows = subset([&](std::size_t i) { return su.gender[i] == g; });
        bool has_t = false, has_c = false;
        for (std::size_t i : rows) (su.treated[i] ? has_t : has_c) = true;
        if (!has_t || !has_c) throw degenerate(std::string("both groups for gender ") + gender_char(g));
        prop[gi] = train(su, rows, is_treated, cfg.propensity, true, cfg);
        for (int arm = 0; arm < 2; ++arm) {
          auto arm_rows = subset([&](std::size_t i) {
            return su.gender[i] == g && su.treated[i] == (arm == 0 ? 1 : 0);
          });
          trend[gi][static_cast<std::size_t>(arm)] = train(su, arm_rows, dy, cfg.outcome, false, cfg);
        }
      }
      bool has_f = false, has_m = false;
      for (std::size_t i : train_all) (su.gender[i] == Gender::kFemale ? has_f : has_m) = true;
      if (!has_f || !has_m) throw degenerate("both genders");
      Model share = train(su, train_all, is_female, cfg.propensity, true, cfg);

      FoldDiagnostics diag;
      diag.fold = static_cast<int>(k);
      diag.train_units = train_all.size();
      diag.test_units = test.size();
      double wsum = 0.0;
      for (std::size_t i : test) {
        const auto ei = static_cast<Eigen::Index>(i);
        for (std::size_t gi = 0; gi < 2; ++gi) {
          nf.propensity[gi][i] = prop[gi].predict(su.x, ei);
          for (std::size_t arm = 0; arm < 2; ++arm) nf.trend[gi][arm][i] = trend[gi][arm].predict(su.x, ei);
        }
        nf.female_share[i] = share.predict(su.x, ei);
        const auto own = static_cast<std::size_t>(gender_index(su.gender[i]));
        double p = std::clamp(nf.propensity[own][i], 1e-12, 1.0 - 1e-12);
        double y = su.treated[i];
        double resid = dy[i] - nf.trend[own][su.treated[i] ? 0 : 1][i];
        diag.propensity_logloss -= su.weight[i] * (y * std::log(p) + (1 - y) * std::log(1 - p));
        diag.trend_mse += su.weight[i] * resid * resid;
        wsum += su.weight[i];
      }
      if (wsum > 0) {
        diag.propensity_logloss /= wsum;
        diag.trend_mse /= wsum;
      }
      nf.folds[k] = diag;
    }
  });

  const double lo = cfg.clip, hi = 1.0 - cfg.clip;
  auto clip = [&](double& v) {
    if (v < lo) {
      v = lo;
      ++nf.clipped;
    } else if (v > hi) {
      v = hi;
      ++nf.clipped;
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : nf.propensity) clip(v[i]);
    clip(nf.female_share[i]);
  }
  return nf;
}

// ---------------------------------------------------------------- estimators

namespace {

struct Frame {
  double total_weight = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_clusters = 0;
};

Frame frame_of(const SliceUnits& su) {
  Frame f;
  std::vector<std::uint32_t> cl;
  for (std::size_t i = 0; i < su.size(); ++i) {
    f.total_weight += su.weight[i];
    if (su.weight[i] > 0) {
      ++f.n_obs;
      cl.push_back(su.cluster[i]);
    }
  }
  std::sort(cl.begin(), cl.end());
  f.n_clusters = static_cast<std::size_t>(std::unique(cl.begin(), cl.end()) - cl.begin());
  return f;
}

// E_n[1{G = g, D = d}]
double group_share(const SliceUnits& su, Gender g, double total_weight) {
  double s = 0.0;
  for (std::size_t i = 0; i < su.size(); ++i)
    if (su.gender[i] == g && su.treated[i]) s += su.weight[i];
  double share = s / total_weight;
  if (!(share > 0)) {
    throw Error(ErrorKind::kDegenerateDenominator,
                std::string("zero estimated share of treated group for gender ") + gender_char(g));
  }
  return share;
}

double weighted_mean(const SliceUnits& su, const std::vector<double>& v, double total_weight) {
  double s = 0.0;
  for (std::size_t i = 0; i < su.size(); ++i) s += su.weight[i] * v[i];
  return s / total_weight;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(ErrorKind::kNonFiniteWeight, std::string("non-finite ") + what);
}

EstimateRecord make_record(const SliceUnits& su, const Frame& fr, std::string name, double value,
                           std::vector<double> psi) {
  EstimateRecord r;
  r.estimand = std::move(name);
  r.d = su.d;
  r.dprime = su.dprime;
  r.a = su.a;
  r.b = su.b;
  r.value = value;
  r.n_obs = fr.n_obs;
  r.n_clusters = fr.n_clusters;
  r.se = weighted_cluster_se(su, psi);
  r.influence = std::move(psi);
  return r;
}

}  // namespace

double weighted_cluster_se(const SliceUnits& su, const std::vector<double>& psi) {
  std::vector<std::uint32_t> order(su.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t x, std::uint32_t y) { return su.cluster[x] < su.cluster[y]; });
  double total = 0.0, acc = 0.0, wsum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::uint32_t i = order[k];
    acc += su.weight[i] * psi[i];
    wsum += su.weight[i];
    if (k + 1 == order.size() || su.cluster[order[k + 1]] != su.cluster[i]) {
      total += acc * acc;
      acc = 0.0;
    }
  }
  return wsum > 0 ? std::sqrt(total) / wsum : 0.0;
}

EstimateRecord apo_with_covariates(const SliceUnits& su, Gender g, const NuisanceFit& nf,
                                   DrMethod method) {
  const Frame fr = frame_of(su);
  const double s_gd = group_share(su, g, fr.total_weight);
  const auto gi = static_cast<std::size_t>(gender_index(g));
  const std::size_t n = su.size();
  std::vector<double> psi(n, 0.0), w1(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (su.gender[i] != g) continue;
    double mu = nf.trend[gi][1][i];  // control-group trend
    double dy = su.y_a[i] - su.y_b[i];
    if (su.treated[i]) {
      w1[i] = 1.0 / s_gd;
      psi[i] = method == DrMethod::kIpw ? w1[i] * su.y_b[i] : w1[i] * (su.y_b[i] + mu);
    } else {
      if (method == DrMethod::kOr) continue;
      double p = nf.propensity[gi][i];
      double w2 = p / (1.0 - p) / s_gd;
      check_finite(w2, "IPW weight");
      psi[i] = method == DrMethod::kIpw ? w2 * dy : w2 * (dy - mu);
    }
    check_finite(psi[i], "score");
  }
  double apo = weighted_mean(su, psi, fr.total_weight);
  for (std::size_t i = 0; i < n; ++i) psi[i] -= w1[i] * apo;
  return make_record(su, fr,
                     "APO_" + std::string(method_name(method)) + "_" + gender_char(g), apo,
                     std::move(psi));
}

AteTheta ate_theta_with_covariates(const SliceUnits& su, Gender g, const NuisanceFit& nf,
                                   const EstimateRecord& apo) {
  (void)nf;
  const Frame fr = frame_of(su);
  const double s_gd = group_share(su, g, fr.total_weight);
  const std::size_t n = su.size();
  if (apo.influence.size() != n) throw Error(ErrorKind::kInvalidArgument, "APO record does not match frame");
  std::vector<double> w1(n, 0.0), psi_ate(n);
  for (std::size_t i = 0; i < n; ++i)
    if (su.gender[i] == g && su.treated[i]) w1[i] = 1.0 / s_gd;
  // psi_ATE = w1 Y_a - psi_APO, with psi_APO = Psi_APO + w1 APO
  for (std::size_t i = 0; i < n; ++i) {
    double psi_apo = apo.influence[i] + w1[i] * apo.value;
    psi_ate[i] = w1[i] * su.y_a[i] - psi_apo;
  }
  double ate = weighted_mean(su, psi_ate, fr.total_weight);
  std::vector<double> Psi_ate(n), Psi_theta(n);
  for (std::size_t i = 0; i < n; ++i) Psi_ate[i] = psi_ate[i] - w1[i] * ate;
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale += su.weight[i] * std::abs(su.y_b[i]);
  scale /= fr.total_weight;
  if (!(std::abs(apo.value) > 1e-8 * scale)) {
    throw Error(ErrorKind::kDegenerateDenominator, "APO estimate is zero");
  }
  double theta = ate / apo.value;
  for (std::size_t i = 0; i < n; ++i) {
    Psi_theta[i] = -ate / (apo.value * apo.value) * apo.influence[i] + Psi_ate[i] / apo.value;
  }
  std::string suffix = apo.estimand.size() > 4 ? apo.estimand.substr(4) : std::string(1, gender_char(g));
  AteTheta out;
  out.ate = make_record(su, fr, "ATE_" + suffix, ate, std::move(Psi_ate));
  out.theta = make_record(su, fr, "THETA_" + suffix, theta, std::move(Psi_theta));
  return out;
}

EstimateRecord td_with_covariates(const SliceUnits& su, const NuisanceFit& nf, DrMethod method) {
  const Frame fr = frame_of(su);
  const double s_fd = group_share(su, Gender::kFemale, fr.total_weight);
  const std::size_t n = su.size();
  std::vector<double> psi(n, 0.0), w1(n, 0.0);
  const auto F = static_cast<std::size_t>(gender_index(Gender::kFemale));
  const auto M = static_cast<std::size_t>(gender_index(Gender::kMale));
  for (std::size_t i = 0; i < n; ++i) {
    const bool female = su.gender[i] == Gender::kFemale;
    const int arm = su.treated[i] ? 0 : 1;
    const double dy = su.y_a[i] - su.y_b[i];
    if (female && arm == 0) w1[i] = 1.0 / s_fd;
    // w3(f, g', d, arm) is non-zero only on the (g', arm) cell of unit i.
    double w3 = 0.0;
    if (method != DrMethod::kOr && !(female && arm == 0)) {
      w3 = nf.pi(i, Gender::kFemale, 0) / nf.pi(i, su.gender[i], arm) / s_fd;
      check_finite(w3, "w3 weight");
    }
    const double mu_fC = nf.trend[F][1][i];
    const double mu_mT = nf.trend[M][0][i];
    const double mu_mC = nf.trend[M][1][i];
    double v = 0.0;
    switch (method) {
      case DrMethod::kOr:
        v = w1[i] * (dy - mu_fC) - w1[i] * (mu_mT - mu_mC);
        break;
      case DrMethod::kIpw: {
        double w3_fC = female && arm == 1 ? w3 : 0.0;
        double w3_mT = !female && arm == 0 ? w3 : 0.0;
        double w3_mC = !female && arm == 1 ? w3 : 0.0;
        v = (w1[i] - w3_fC) * dy - (w3_mT - w3_mC) * dy;
        break;
      }
      case DrMethod::kDr: {
        double w3_fC = female && arm == 1 ? w3 : 0.0;
        double w3_mT = !female && arm == 0 ? w3 : 0.0;
        double w3_mC = !female && arm == 1 ? w3 : 0.0;
        // psi(f,f,d,d') + psi(f,m,d,d) - psi(f,m,d,d')
        v = (w1[i] - w3_fC) * (dy - mu_fC) + (w1[i] - w3_mT) * (dy - mu_mT) -
            (w1[i] - w3_mC) * (dy - mu_mC);
        break;
      }
    }
    check_finite(v, "score");
    psi[i] = v;
  }
  double vartheta = weighted_mean(su, psi, fr.total_weight);
  for (std::size_t i = 0; i < n; ++i) psi[i] -= w1[i] * vartheta;
  return make_record(su, fr, "TD_" + std::string(method_name(method)), vartheta, std::move(psi));
}

}  // namespace ntd
