#include "ntd/event_study.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "ntd/parallel.hpp"

namespace ntd {

namespace {

// Sample and column layout shared by the fit and the dense design.
struct Layout {
  std::vector<std::uint32_t> rows;
  int age_min = 0, age_max = -1, year_min = 0, year_max = -1;
  std::vector<int> event_col;  // by e - lo, -1 for the reference event
  std::vector<int> age_col;    // by age - age_min, -1 for the reference age
  std::vector<int> year_col;   // by year - year_min, -1 for the reference year
  std::vector<std::string> names;
  int lo = 0;
  int hi = 0;

  int event_of(const PanelDataset& data, std::uint32_t r) const {
    int d = data.unit_treat_age(data.row_unit(r));
    return is_never(d) ? kNeverTreated : data.row_age(r) - d;
  }

  // Nonzero columns of row r (all entries equal one). Returns the count.
  int columns(const PanelDataset& data, std::uint32_t r, std::array<int, 4>& out) const {
    int k = 0;
    out[k++] = 0;
    int e = event_of(data, r);
    if (e != kNeverTreated && event_col[e - lo] >= 0) out[k++] = event_col[e - lo];
    int ac = age_col[data.row_age(r) - age_min];
    if (ac >= 0) out[k++] = ac;
    int yc = year_col[data.row_year(r) - year_min];
    if (yc >= 0) out[k++] = yc;
    return k;
  }

  std::size_t width() const { return names.size(); }
};

Layout make_layout(const PanelDataset& data, Gender g, const EventStudyOptions& opt) {
  const EventWindow& w = opt.window;
  if (!(w.lo <= -1 && w.hi >= -1 && w.lo < w.hi)) {
    throw Error(ErrorKind::kInvalidWindow, "event window must contain -1 and at least one other event time");
  }
  Layout L;
  L.lo = w.lo;
  L.hi = w.hi;
  bool first = true;
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    std::uint32_t u = data.row_unit(r);
    if (data.unit_gender(u) != g) continue;
    int d = data.unit_treat_age(u);
    if (is_never(d)) {
      if (!opt.include_never) continue;
    } else {
      int e = data.row_age(r) - d;
      if (e < w.lo || e > w.hi) continue;
    }
    L.rows.push_back(static_cast<std::uint32_t>(r));
    int a = data.row_age(r), t = data.row_year(r);
    if (first) {
      L.age_min = L.age_max = a;
      L.year_min = L.year_max = t;
      first = false;
    }
    L.age_min = std::min(L.age_min, a);
    L.age_max = std::max(L.age_max, a);
    L.year_min = std::min(L.year_min, t);
    L.year_max = std::max(L.year_max, t);
  }
  if (L.rows.empty()) {
    throw Error(ErrorKind::kInvalidArgument,
                std::string("no observations for gender ") + gender_char(g) + " in the event window");
  }
  // Only categories that actually occur get a column.
  std::vector<char> has_e(w.hi - w.lo + 1, 0), has_a(L.age_max - L.age_min + 1, 0),
      has_t(L.year_max - L.year_min + 1, 0);
  for (std::uint32_t r : L.rows) {
    int e = L.event_of(data, r);
    if (e != kNeverTreated) has_e[e - w.lo] = 1;
    has_a[data.row_age(r) - L.age_min] = 1;
    has_t[data.row_year(r) - L.year_min] = 1;
  }
  L.names.push_back("intercept");
  L.event_col.assign(has_e.size(), -1);
  for (int e = w.lo; e <= w.hi; ++e) {
    if (e == -1 || !has_e[e - w.lo]) continue;
    L.event_col[e - w.lo] = static_cast<int>(L.names.size());
    L.names.push_back("event[" + std::to_string(e) + "]");
  }
  L.age_col.assign(has_a.size(), -1);
  for (int a = L.age_min + 1; a <= L.age_max; ++a) {
    if (!has_a[a - L.age_min]) continue;
    L.age_col[a - L.age_min] = static_cast<int>(L.names.size());
    L.names.push_back("age[" + std::to_string(a) + "]");
  }
  L.year_col.assign(has_t.size(), -1);
  for (int t = L.year_min + 1; t <= L.year_max; ++t) {
    if (!has_t[t - L.year_min]) continue;
    L.year_col[t - L.year_min] = static_cast<int>(L.names.size());
    L.names.push_back("year[" + std::to_string(t) + "]");
  }
  return L;
}

}  // namespace

double EventStudyFit::beta_at(int e) const {
  auto it = std::find(events.begin(), events.end(), e);
  if (it == events.end()) throw Error(ErrorKind::kOutOfRange, "event time outside the fitted window");
  return beta[it - events.begin()];
}

double EventStudyFit::theta_at(int e) const {
  auto it = std::find(events.begin(), events.end(), e);
  if (it == events.end()) throw Error(ErrorKind::kOutOfRange, "event time outside the fitted window");
  return theta_es[it - events.begin()];
}

EventStudyDesign event_study_design(const PanelDataset& data, Gender g,
                                    const EventStudyOptions& options) {
  Layout L = make_layout(data, g, options);
  EventStudyDesign out;
  out.columns = L.names;
  out.rows = L.rows;
  out.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(L.rows.size()),
                                static_cast<Eigen::Index>(L.width()));
  out.y.resize(static_cast<Eigen::Index>(L.rows.size()));
  std::array<int, 4> cols{};
  for (std::size_t i = 0; i < L.rows.size(); ++i) {
    int k = L.columns(data, L.rows[i], cols);
    for (int j = 0; j < k; ++j) out.x(static_cast<Eigen::Index>(i), cols[j]) = 1.0;
    out.y(static_cast<Eigen::Index>(i)) = data.row_earnings(L.rows[i]);
  }
  return out;
}

EventStudyFit fit_event_study(const PanelDataset& data, Gender g, const EventStudyOptions& options) {
  Layout L = make_layout(data, g, options);
  const auto p = static_cast<Eigen::Index>(L.width());
  const std::size_t n = L.rows.size();

  // Normal equations, one partial per worker, merged in worker order.
  unsigned threads = resolve_threads(options.threads);
  std::vector<Eigen::MatrixXd> xtx(threads, Eigen::MatrixXd::Zero(p, p));
  std::vector<Eigen::VectorXd> xty(threads, Eigen::VectorXd::Zero(p));
  parallel_blocks(n, threads, [&](std::size_t lo, std::size_t hi, unsigned w) {
    std::array<int, 4> cols{};
    Eigen::MatrixXd& A = xtx[w];
    Eigen::VectorXd& v = xty[w];
    for (std::size_t i = lo; i < hi; ++i) {
      std::uint32_t r = L.rows[i];
      int k = L.columns(data, r, cols);
      double y = data.row_earnings(r);
      for (int j = 0; j < k; ++j) {
        v(cols[j]) += y;
        for (int l = 0; l < k; ++l) A(cols[j], cols[l]) += 1.0;
      }
    }
  });
  for (unsigned w = 1; w < threads; ++w) {
    xtx[0] += xtx[w];
    xty[0] += xty[w];
  }
  const Eigen::MatrixXd& A = xtx[0];

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
  qr.setThreshold(1e-10);
  qr.compute(A);
  if (qr.rank() < p) {
    // Columns touched by the null space are the unidentified ones; the event
    // block is lost when any event column is among them.
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    lu.setThreshold(1e-10);
    Eigen::MatrixXd kernel = lu.kernel();
    std::string dropped;
    bool event_lost = false;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (kernel.row(j).cwiseAbs().maxCoeff() <= 1e-8) continue;
      const std::string& name = L.names[static_cast<std::size_t>(j)];
      event_lost = event_lost || name.rfind("event", 0) == 0;
      dropped += (dropped.empty() ? "" : ", ") + name;
    }
    throw Error(event_lost ? ErrorKind::kCollinearDesign : ErrorKind::kRankDeficient,
                "design is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                    std::to_string(p) + "); unidentified columns: " + dropped);
  }
  Eigen::VectorXd coef = qr.solve(xty[0]);

  EventStudyFit fit;
  fit.gender = g;
  fit.n_obs = n;
  fit.intercept = coef(0);
  fit.dropped_columns = {"event[-1]", "age[" + std::to_string(L.age_min) + "]",
                         "year[" + std::to_string(L.year_min) + "]"};
  for (int a = L.age_min; a <= L.age_max; ++a) {
    int c = L.age_col[a - L.age_min];
    if (c < 0 && a != L.age_min) continue;
    fit.ages.push_back(a);
    fit.age_effects.push_back(c < 0 ? 0.0 : coef(c));
  }
  for (int t = L.year_min; t <= L.year_max; ++t) {
    int c = L.year_col[t - L.year_min];
    if (c < 0 && t != L.year_min) continue;
    fit.years.push_back(t);
    fit.year_effects.push_back(c < 0 ? 0.0 : coef(c));
  }

  // Rows of (X'X)^-1 belonging to event coefficients.
  std::vector<int> ev_cols;
  for (int e = L.lo; e <= L.hi; ++e) {
    int c = L.event_col[e - L.lo];
    if (e == -1 || c >= 0) {
      fit.events.push_back(e);
      ev_cols.push_back(c);
    }
  }
  const std::size_t k = fit.events.size();
  Eigen::MatrixXd inv = qr.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd B(static_cast<Eigen::Index>(k), p);
  for (std::size_t j = 0; j < k; ++j) {
    if (ev_cols[j] < 0) B.row(static_cast<Eigen::Index>(j)).setZero();
    else B.row(static_cast<Eigen::Index>(j)) = inv.row(ev_cols[j]);
  }

  // Residual pass: cluster scores projected on the event block, plus Ytilde.
  std::vector<double> score(data.num_clusters() * k, 0.0);
  std::vector<char> seen(data.num_clusters(), 0);
  std::vector<double> ysum(k, 0.0);
  fit.event_obs.assign(k, 0);
  if (options.keep_ytilde) {
    fit.sample_rows = L.rows;
    fit.ytilde.resize(n);
  }
  std::array<int, 4> cols{};
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t r = L.rows[i];
    int m = L.columns(data, r, cols);
    double fitted = 0.0;
    for (int j = 0; j < m; ++j) fitted += coef(cols[j]);
    double resid = data.row_earnings(r) - fitted;
    int e = L.event_of(data, r);
    double yt = fitted;
    if (e != kNeverTreated && L.event_col[e - L.lo] >= 0) yt -= coef(L.event_col[e - L.lo]);
    if (options.keep_ytilde) fit.ytilde[i] = yt;
    if (e != kNeverTreated) {
      std::size_t pos = static_cast<std::size_t>(
          std::lower_bound(fit.events.begin(), fit.events.end(), e) - fit.events.begin());
      ysum[pos] += yt;
      ++fit.event_obs[pos];
    }
    std::uint32_t cl = data.row_cluster(r);
    seen[cl] = 1;
    double* s = &score[cl * k];
    for (int j = 0; j < m; ++j) {
      for (std::size_t q = 0; q < k; ++q) s[q] += B(static_cast<Eigen::Index>(q), cols[j]) * resid;
    }
  }
  for (char c : seen) fit.n_clusters += c ? 1 : 0;

  fit.beta.assign(k, 0.0);
  fit.se.assign(k, 0.0);
  fit.ytilde_mean.assign(k, std::numeric_limits<double>::quiet_NaN());
  fit.theta_es.assign(k, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t j = 0; j < k; ++j) {
    if (ev_cols[j] >= 0) fit.beta[j] = coef(ev_cols[j]);
    double v = 0.0;
    for (std::size_t c = 0; c < data.num_clusters(); ++c) v += score[c * k + j] * score[c * k + j];
    fit.se[j] = std::sqrt(v);
    if (fit.event_obs[j] > 0) {
      fit.ytilde_mean[j] = ysum[j] / static_cast<double>(fit.event_obs[j]);
      fit.theta_es[j] = fit.beta[j] / fit.ytilde_mean[j];
    }
  }
  return fit;
}

std::vector<EventGap> event_study_gap(const EventStudyFit& female, const EventStudyFit& male) {
  if (female.events != male.events) {
    throw Error(ErrorKind::kWindowMismatch, "female and male fits cover different event times");
  }
  std::vector<EventGap> out;
  for (std::size_t j = 0; j < female.events.size(); ++j) {
    EventGap g;
    g.e = female.events[j];
    g.gap = female.theta_es[j] - male.theta_es[j];
    g.pre = g.e < 0;
    out.push_back(g);
  }
  return out;
}

}  // namespace ntd
