#include "ntd/inference.hpp"

#include <cmath>
#include <random>

#include "ntd/parallel.hpp"

namespace ntd {

namespace {

// Slots per gender: treated-target, treated-base, control-target, control-base.
constexpr std::size_t kT = 0, kBt = 1, kC = 2, kCb = 3;

std::size_t off(Gender g) { return g == Gender::kFemale ? 0 : 4; }

struct GenderTerms {
  double T, apo, ate;
  CellGradient dT{}, dApo{}, dAte{};
};

GenderTerms terms(const TwoByTwoSlice& s, Gender g) {
  const std::size_t o = off(g);
  GenderTerms t;
  t.T = s.cells[o + kT].mean;
  t.apo = s.cells[o + kBt].mean + s.cells[o + kC].mean - s.cells[o + kCb].mean;
  t.ate = t.T - t.apo;
  t.dT[o + kT] = 1.0;
  // psi_APO = psi_{mu(g,d,b)} + psi_{mu(g,d',a)} - psi_{mu(g,d',b)}
  t.dApo[o + kBt] = 1.0;
  t.dApo[o + kC] = 1.0;
  t.dApo[o + kCb] = -1.0;
  // psi_ATE = psi_{mu(g,d,a)} - psi_APO
  for (std::size_t k = 0; k < 8; ++k) t.dAte[k] = t.dT[k] - t.dApo[k];
  return t;
}

CellGradient lin(double a, const CellGradient& x, double b, const CellGradient& y) {
  CellGradient r{};
  for (std::size_t k = 0; k < 8; ++k) r[k] = a * x[k] + b * y[k];
  return r;
}

// Ratio rule: psi_{N/D} = psi_N / D - N / D^2 psi_D.
CellGradient ratio(double N, const CellGradient& dN, double D, const CellGradient& dD) {
  return lin(1.0 / D, dN, -N / (D * D), dD);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

CellGradient influence_gradient(const TwoByTwoSlice& s, EstimandId id) {
  (void)evaluate(s, id);  // surfaces EmptyCell / DegenerateDenominator
  auto need_m = [&] {
    switch (id) {
      case EstimandId::kDidApoF:
      case EstimandId::kDidAteF:
      case EstimandId::kDidThetaF:
        return false;
      default:
        return true;
    }
  }();
  auto need_f = id != EstimandId::kDidApoM && id != EstimandId::kDidAteM &&
                id != EstimandId::kDidThetaM;
  GenderTerms f{}, m{};
  if (need_f) f = terms(s, Gender::kFemale);
  if (need_m) m = terms(s, Gender::kMale);
  auto theta_grad = [](const GenderTerms& t) { return ratio(t.ate, t.dAte, t.apo, t.dApo); };

  switch (id) {
    case EstimandId::kDidApoF: return f.dApo;
    case EstimandId::kDidAteF: return f.dAte;
    case EstimandId::kDidThetaF: return theta_grad(f);
    case EstimandId::kDidApoM: return m.dApo;
    case EstimandId::kDidAteM: return m.dAte;
    case EstimandId::kDidThetaM: return theta_grad(m);
    case EstimandId::kTdGap: return lin(1.0, f.dAte, -1.0, m.dAte);
    case EstimandId::kNtdGap: return lin(1.0, theta_grad(f), -1.0, theta_grad(m));
    case EstimandId::kPGap: {
      CellGradient dTd = lin(1.0, f.dAte, -1.0, m.dAte);
      return ratio(f.ate - m.ate, dTd, f.apo, f.dApo);
    }
    case EstimandId::kNtdAlt:
      // mu_f/mu_m - apo_f/apo_m
      return lin(1.0, ratio(f.T, f.dT, m.T, m.dT), -1.0, ratio(f.apo, f.dApo, m.apo, m.dApo));
    case EstimandId::kTdNullApo:
    case EstimandId::kTdNullAte:
    case EstimandId::kTdNullTheta: {
      double apo = f.apo + m.ate;
      CellGradient dApo = lin(1.0, f.dApo, 1.0, m.dAte);
      double ate = f.T - apo;
      CellGradient dAte = lin(1.0, f.dT, -1.0, dApo);
      if (id == EstimandId::kTdNullApo) return dApo;
      if (id == EstimandId::kTdNullAte) return dAte;
      return ratio(ate, dAte, apo, dApo);
    }
    case EstimandId::kNtdNullApo:
    case EstimandId::kNtdNullAte:
    case EstimandId::kNtdNullTheta: {
      // apo = apo_f * mu_m / apo_m
      double r = m.T / m.apo;
      CellGradient dR = ratio(m.T, m.dT, m.apo, m.dApo);
      double apo = f.apo * r;
      CellGradient dApo = lin(r, f.dApo, f.apo, dR);
      double ate = f.T - apo;
      CellGradient dAte = lin(1.0, f.dT, -1.0, dApo);
      if (id == EstimandId::kNtdNullApo) return dApo;
      if (id == EstimandId::kNtdNullAte) return dAte;
      return ratio(ate, dAte, apo, dApo);
    }
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown estimand");
}

namespace {

void add_cell_influence(const PanelDataset& data, Gender g, int d, int a, double coef,
                        std::vector<double>& out) {
  auto rows = data.cell_rows(g, d, a);
  if (rows.empty()) return;
  CellStats c = cell_mean(data, g, d, a);
  const double scale = coef * static_cast<double>(data.num_units()) / static_cast<double>(c.count);
  for (std::uint32_t r : rows) out[r] += scale * (data.row_earnings(r) - c.mean);
}

InfluenceVector blank(const PanelDataset& data) {
  InfluenceVector iv;
  iv.contributions.assign(data.num_rows(), 0.0);
  iv.cluster_ids.resize(data.num_rows());
  for (std::size_t r = 0; r < data.num_rows(); ++r) iv.cluster_ids[r] = data.row_cluster(r);
  iv.n = data.num_units();
  return iv;
}

}  // namespace

InfluenceVector influence_mu(const PanelDataset& data, Gender g, int d, int a) {
  if (data.cell_rows(g, d, a).empty()) {
    throw Error(ErrorKind::kEmptyCell, std::string("empty cell (") + gender_char(g) +
                                           ", d=" + std::to_string(d) + ", a=" +
                                           std::to_string(a) + ")");
  }
  InfluenceVector iv = blank(data);
  add_cell_influence(data, g, d, a, 1.0, iv.contributions);
  return iv;
}

InfluenceVector influence_composite(const PanelDataset& data, const TwoByTwoSlice& s,
                                    EstimandId id) {
  CellGradient grad = influence_gradient(s, id);
  InfluenceVector iv = blank(data);
  iv.estimand = id;
  for (std::size_t k = 0; k < 8; ++k) {
    if (grad[k] == 0.0) continue;
    add_cell_influence(data, s.slot_gender(k), s.slot_group(k), s.slot_age(k), grad[k],
                       iv.contributions);
  }
  return iv;
}

std::vector<ClusterSum> cluster_sums(const InfluenceVector& iv) {
  std::vector<std::int64_t> pos;
  std::vector<ClusterSum> out;
  for (std::size_t i = 0; i < iv.contributions.size(); ++i) {
    std::uint32_t c = iv.cluster_ids[i];
    if (c >= pos.size()) pos.resize(c + 1, -1);
    if (pos[c] < 0) {
      pos[c] = static_cast<std::int64_t>(out.size());
      out.push_back({c, 0.0});
    }
    out[static_cast<std::size_t>(pos[c])].sum += iv.contributions[i];
  }
  return out;
}

double cluster_se(const InfluenceVector& iv, std::size_t n) {
  if (n == 0) return 0.0;
  double total = 0.0;
  for (const auto& cs : cluster_sums(iv)) total += cs.sum * cs.sum;
  return std::sqrt(total) / static_cast<double>(n);
}

double cluster_se(const InfluenceVector& iv) { return cluster_se(iv, iv.n); }

namespace {

void accumulate(const PanelDataset& data, const TwoByTwoSlice& s, ClusterWorkspace& ws) {
  if (ws.slot_of.size() != data.num_clusters()) ws.slot_of.assign(data.num_clusters(), -1);
  ws.touched.clear();
  ws.acc.clear();
  const double n = static_cast<double>(data.num_units());
  for (std::size_t k = 0; k < 8; ++k) {
    const CellStats& c = s.cells[k];
    if (c.empty()) continue;
    auto rows = data.cell_rows(s.slot_gender(k), s.slot_group(k), s.slot_age(k));
    const double scale = n / static_cast<double>(c.count);
    for (std::uint32_t r : rows) {
      std::uint32_t cl = data.row_cluster(r);
      std::int32_t p = ws.slot_of[cl];
      if (p < 0) {
        p = static_cast<std::int32_t>(ws.touched.size());
        ws.slot_of[cl] = p;
        ws.touched.push_back(cl);
        ws.acc.push_back({});
      }
      ws.acc[static_cast<std::size_t>(p)][k] += scale * (data.row_earnings(r) - c.mean);
    }
  }
}

void release(ClusterWorkspace& ws) {
  for (std::uint32_t cl : ws.touched) ws.slot_of[cl] = -1;
}

}  // namespace

std::vector<std::array<double, 8>> slice_cluster_residuals(const PanelDataset& data,
                                                           const TwoByTwoSlice& s,
                                                           ClusterWorkspace& ws,
                                                           std::vector<std::uint32_t>* clusters) {
  accumulate(data, s, ws);
  if (clusters) *clusters = ws.touched;
  std::vector<std::array<double, 8>> out = ws.acc;
  release(ws);
  return out;
}

std::vector<double> slice_cluster_ses(const PanelDataset& data, const TwoByTwoSlice& s,
                                      std::span<const EstimandId> ids, ClusterWorkspace& ws,
                                      std::span<const CellGradient> gradients) {
  if (gradients.size() != ids.size()) {
    throw Error(ErrorKind::kInvalidArgument, "one gradient per estimand required");
  }
  return slice_cluster_ses(data, s, ws, gradients);
}

std::vector<double> slice_cluster_ses(const PanelDataset& data, const TwoByTwoSlice& s,
                                      ClusterWorkspace& ws, std::span<const CellGradient> gradients) {
  accumulate(data, s, ws);
  std::vector<double> total(gradients.size(), 0.0);
  for (const auto& acc : ws.acc) {
    for (std::size_t j = 0; j < gradients.size(); ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < 8; ++k) v += gradients[j][k] * acc[k];
      total[j] += v * v;
    }
  }
  release(ws);
  const double n = static_cast<double>(data.num_units());
  for (double& t : total) t = n > 0 ? std::sqrt(t) / n : 0.0;
  return total;
}

double linear_cluster_se(const PanelDataset& data, std::span<const CellTerm> terms) {
  std::vector<double> acc(data.num_clusters(), 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<std::uint8_t> seen(data.num_clusters(), 0);
  const double n = static_cast<double>(data.num_units());
  for (const CellTerm& t : terms) {
    auto rows = data.cell_rows(t.cell.gender, t.cell.treat_age, t.cell.age);
    if (rows.empty() || t.coef == 0.0) continue;
    CellStats c = cell_mean(data, t.cell.gender, t.cell.treat_age, t.cell.age);
    const double scale = t.coef * n / static_cast<double>(c.count);
    for (std::uint32_t r : rows) {
      std::uint32_t cl = data.row_cluster(r);
      if (!seen[cl]) {
        seen[cl] = 1;
        touched.push_back(cl);
      }
      acc[cl] += scale * (data.row_earnings(r) - c.mean);
    }
  }
  double total = 0.0;
  for (std::uint32_t cl : touched) total += acc[cl] * acc[cl];
  return n > 0 ? std::sqrt(total) / n : 0.0;
}

BootstrapResult cluster_bootstrap(const PanelDataset& data, const TwoByTwoSlice& s,
                                  std::span<const EstimandId> ids, const BootstrapOptions& opt) {
  if (opt.reps < 100) throw Error(ErrorKind::kInvalidArgument, "bootstrap needs at least 100 reps");
  const std::size_t n_clusters = data.num_clusters();
  std::vector<std::int32_t> compact(n_clusters, -1);
  std::vector<std::array<double, 8>> sums;
  std::vector<std::array<std::uint32_t, 8>> counts;
  for (std::size_t k = 0; k < 8; ++k) {
    for (std::uint32_t r : data.cell_rows(s.slot_gender(k), s.slot_group(k), s.slot_age(k))) {
      std::uint32_t cl = data.row_cluster(r);
      if (compact[cl] < 0) {
        compact[cl] = static_cast<std::int32_t>(sums.size());
        sums.push_back({});
        counts.push_back({});
      }
      sums[static_cast<std::size_t>(compact[cl])][k] += data.row_earnings(r);
      counts[static_cast<std::size_t>(compact[cl])][k] += 1;
    }
  }

  const std::size_t reps = static_cast<std::size_t>(opt.reps);
  const std::size_t m = ids.size();
  std::vector<double> draws(reps * m, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> rep_redraws(reps, 0);

  parallel_blocks(reps, resolve_threads(opt.threads), [&](std::size_t lo, std::size_t hi, unsigned) {
    TwoByTwoSlice rs = s;
    std::vector<double> vals(m);
    std::vector<bool> ok(m);
    for (std::size_t rep = lo; rep < hi; ++rep) {
      std::mt19937_64 rng(derive_seed(opt.seed, rep));
      std::uniform_int_distribution<std::size_t> pick(0, n_clusters - 1);
      for (int attempt = 0;; ++attempt) {
        std::array<double, 8> sm{};
        std::array<std::size_t, 8> ct{};
        for (std::size_t i = 0; i < n_clusters; ++i) {
          std::int32_t p = compact[pick(rng)];
          if (p < 0) continue;
          const auto& cs = sums[static_cast<std::size_t>(p)];
          const auto& cc = counts[static_cast<std::size_t>(p)];
          for (std::size_t k = 0; k < 8; ++k) {
            sm[k] += cs[k];
            ct[k] += cc[k];
          }
        }
        for (std::size_t k = 0; k < 8; ++k) {
          rs.cells[k].count = ct[k];
          rs.cells[k].sum = sm[k];
          rs.cells[k].mean = ct[k] > 0 ? sm[k] / static_cast<double>(ct[k])
                                       : std::numeric_limits<double>::quiet_NaN();
        }
        bool all_ok = true;
        for (std::size_t j = 0; j < m; ++j) {
          try {
            vals[j] = evaluate(rs, ids[j]);
            ok[j] = true;
          } catch (const Error&) {
            ok[j] = false;
            all_ok = false;
          }
        }
        if (all_ok || attempt >= opt.max_redraws) {
          for (std::size_t j = 0; j < m; ++j)
            if (ok[j]) draws[rep * m + j] = vals[j];
          break;
        }
        ++rep_redraws[rep];
      }
    }
  });

  BootstrapResult res;
  res.reps = opt.reps;
  res.se.assign(m, 0.0);
  res.failures.assign(m, 0);
  for (std::size_t r = 0; r < reps; ++r) res.redraws += rep_redraws[r];
  for (std::size_t j = 0; j < m; ++j) {
    double mean = 0.0;
    std::size_t cnt = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      double v = draws[r * m + j];
      if (std::isnan(v)) {
        ++res.failures[j];
        continue;
      }
      mean += v;
      ++cnt;
    }
    if (cnt < 2) {
      res.se[j] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    mean /= static_cast<double>(cnt);
    double ss = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      double v = draws[r * m + j];
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    }
    res.se[j] = std::sqrt(ss / static_cast<double>(cnt - 1));
  }
  return res;
}

double cluster_bootstrap(const PanelDataset& data, const TwoByTwoSlice& s, EstimandId id, int reps,
                         std::uint64_t seed) {
  BootstrapOptions opt;
  opt.reps = reps;
  opt.seed = seed;
  EstimandId ids[1] = {id};
  return cluster_bootstrap(data, s, ids, opt).se[0];
}

}  // namespace ntd
