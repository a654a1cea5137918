#include "ntd/pipeline.hpp"

#include <cmath>
#include <limits>

#include "ntd/error.hpp"
#include "ntd/inference.hpp"
#include "ntd/parallel.hpp"

namespace ntd {

namespace {

struct SliceJob {
  int d;
  int e;
};

void fill_slice(const PanelDataset& data, const CellTable& cells, const GridOptions& opt,
                const SliceJob& job, ClusterWorkspace& ws, GridRecord* out) {
  const int a = job.d + job.e;
  const std::size_t k = opt.estimands.size();
  for (std::size_t j = 0; j < k; ++j) {
    GridRecord& g = out[j];
    g.e = job.e;
    g.record.estimand = std::string(estimand_name(opt.estimands[j]));
    g.record.d = job.d;
    g.record.a = a;
    g.record.dprime = a + opt.control_offset;
    g.record.b = job.d - opt.baseline_gap;
  }
  auto fail_all = [&](const Error& err) {
    for (std::size_t j = 0; j < k; ++j) {
      out[j].ok = false;
      out[j].error = std::string(to_string(err.kind())) + ": " + err.what();
    }
  };

  TwoByTwoSlice s;
  try {
    s = build_two_by_two(cells, job.d, a, opt.control_offset, opt.baseline_gap);
  } catch (const Error& err) {
    fail_all(err);
    return;
  }
  s.denom_tol = opt.denom_tol;
  std::size_t n_obs = 0;
  for (const auto& c : s.cells) n_obs += c.count;

  std::vector<CellGradient> grads;
  std::vector<std::size_t> live;
  for (std::size_t j = 0; j < k; ++j) {
    GridRecord& g = out[j];
    g.record.n_obs = n_obs;
    try {
      g.record.value = evaluate(s, opt.estimands[j]);
      grads.push_back(influence_gradient(s, opt.estimands[j]));
      live.push_back(j);
    } catch (const Error& err) {
      g.ok = false;
      g.error = std::string(to_string(err.kind())) + ": " + err.what();
      g.record.value = g.record.se = std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (live.empty()) return;

  // One pass over the slice rows serves every estimand.
  std::vector<std::uint32_t> clusters;
  auto acc = slice_cluster_residuals(data, s, ws, &clusters);
  std::vector<double> total(live.size(), 0.0);
  for (const auto& r : acc) {
    for (std::size_t j = 0; j < live.size(); ++j) {
      double v = 0.0;
      for (std::size_t c = 0; c < 8; ++c) v += grads[j][c] * r[c];
      total[j] += v * v;
    }
  }
  const double n = static_cast<double>(data.num_units());
  for (std::size_t j = 0; j < live.size(); ++j) {
    EstimateRecord& rec = out[live[j]].record;
    rec.se = std::sqrt(total[j]) / n;
    rec.n_clusters = clusters.size();
  }
}

}  // namespace

std::vector<GridRecord> estimate_grid(const PanelDataset& data, const GridOptions& options) {
  if (options.d_min > options.d_max || options.e_min > options.e_max) {
    throw Error(ErrorKind::kInvalidWindow, "empty treatment-group or event-time range");
  }
  if (options.estimands.empty()) throw Error(ErrorKind::kInvalidArgument, "no estimands requested");
  std::vector<SliceJob> jobs;
  for (int d = options.d_min; d <= options.d_max; ++d)
    for (int e = options.e_min; e <= options.e_max; ++e) jobs.push_back({d, e});

  const CellTable cells = data.cell_table();
  const std::size_t k = options.estimands.size();
  std::vector<GridRecord> out(jobs.size() * k);
  parallel_blocks(jobs.size(), resolve_threads(options.threads),
                  [&](std::size_t lo, std::size_t hi, unsigned) {
                    ClusterWorkspace ws;
                    for (std::size_t i = lo; i < hi; ++i)
                      fill_slice(data, cells, options, jobs[i], ws, out.data() + i * k);
                  });
  return out;
}

}  // namespace ntd
