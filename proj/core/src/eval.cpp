#include "cnsc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "cnsc/errors.hpp"
#include "cnsc/objective.hpp"

namespace cnsc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_curve(const EffectCurve& c, const char* what) {
  if (c.grid.size() != c.values.size() || c.grid.empty())
    throw ShapeError(std::string(what) + ": grid/value size mismatch");
  for (std::size_t i = 1; i < c.grid.size(); ++i)
    if (!(c.grid[i] > c.grid[i - 1]))
      throw DomainError(std::string(what) + ": grid not strictly increasing");
}

double interp(const EffectCurve& c, double t) {
  // linear interpolation, callers guarantee t within range
  const auto& g = c.grid;
  const auto it = std::lower_bound(g.begin(), g.end(), t);
  if (it == g.begin()) return c.values.front();
  if (it == g.end()) return c.values.back();
  const std::size_t hi = static_cast<std::size_t>(it - g.begin());
  const std::size_t lo = hi - 1;
  const double f = (t - g[lo]) / (g[hi] - g[lo]);
  return c.values[lo] + f * (c.values[hi] - c.values[lo]);
}

double comb2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

std::vector<double> evaluation_grid(std::span<const PatientRecord> records,
                                    std::size_t points) {
  if (points < 2) throw DomainError("evaluation grid: need at least 2 points");
  if (records.empty()) throw DomainError("evaluation grid: empty record set");
  double t_event = 0.0;
  double t_any = 0.0;
  for (const auto& r : records) {
    t_any = std::max(t_any, r.t);
    if (r.d == 1) t_event = std::max(t_event, r.t);
  }
  const double tmax = t_event > 0.0 ? t_event : t_any;
  if (!(tmax > 0.0))
    throw DegenerateDataError("evaluation grid: all times are zero");
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i)
    grid[i] = tmax * static_cast<double>(i) / static_cast<double>(points - 1);
  return grid;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.empty()) throw DomainError("rand index: empty partitions");
  if (a.size() != b.size()) throw ShapeError("rand index: length mismatch");

  std::unordered_map<int, std::size_t> ia, ib;
  for (int v : a) ia.emplace(v, ia.size());
  for (int v : b) ib.emplace(v, ib.size());
  const std::size_t ka = ia.size(), kb = ib.size();
  std::vector<double> cell(ka * kb, 0.0), ra(ka, 0.0), cb(kb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t r = ia[a[i]], c = ib[b[i]];
    cell[r * kb + c] += 1.0;
    ra[r] += 1.0;
    cb[c] += 1.0;
  }
  double sum_cells = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (double v : cell) sum_cells += comb2(v);
  for (double v : ra) sum_a += comb2(v);
  for (double v : cb) sum_b += comb2(v);
  const double total = comb2(static_cast<double>(a.size()));
  const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions carry no signal
  return (sum_cells - expected) / (max_index - expected);
}

double ise_curves(const EffectCurve& est, const EffectCurve& truth,
                  double t_max) {
  check_curve(est, "ise estimate");
  check_curve(truth, "ise truth");
  if (!(t_max > est.grid.front()))
    throw DomainError("ise: t_max below the grid start");
  if (t_max > est.grid.back() + 1e-12 || t_max > truth.grid.back() + 1e-12)
    throw DomainError("ise: t_max beyond a curve's grid");

  double acc = 0.0;
  double prev_t = est.grid.front();
  double prev_d = est.values.front() - interp(truth, prev_t);
  for (std::size_t i = 1; i < est.grid.size() && prev_t < t_max; ++i) {
    double t = est.grid[i];
    double e = est.values[i];
    if (t > t_max) {
      e = interp(est, t_max);
      t = t_max;
    }
    const double d = e - interp(truth, t);
    acc += 0.5 * (prev_d * prev_d + d * d) * (t - prev_t);
    prev_t = t;
    prev_d = d;
  }
  return acc;
}

EffectCurve model_gate_curve(const CnscModel& m, std::size_t group,
                             std::span<const double> grid) {
  EffectCurve c;
  c.grid.assign(grid.begin(), grid.end());
  c.values.reserve(grid.size());
  for (double t : grid) c.values.push_back(gate(m, group, t));
  return c;
}

EffectCurve model_population_curve(const CnscModel& m,
                                   std::span<const PatientRecord> records,
                                   std::span<const double> grid) {
  if (records.empty())
    throw DomainError("population curve: empty record set");
  std::vector<double> pbar(m.k, 0.0);
  for (const auto& r : records) {
    const SubgroupPosterior post = assign(m, r.x);
    for (std::size_t g = 0; g < m.k; ++g) pbar[g] += post.probabilities[g];
  }
  for (double& v : pbar) v /= static_cast<double>(records.size());

  EffectCurve c;
  c.grid.assign(grid.begin(), grid.end());
  c.values.assign(grid.size(), 0.0);
  for (std::size_t g = 0; g < m.k; ++g) {
    for (std::size_t i = 0; i < c.grid.size(); ++i)
      c.values[i] += pbar[g] * gate(m, g, c.grid[i]);
  }
  return c;
}

double ise_population(const CnscModel& m, const GroundTruth& gt,
                      std::span<const PatientRecord> records, double t_max,
                      std::size_t grid_points, std::size_t mc_size,
                      std::uint64_t seed) {
  if (!(t_max > 0.0)) throw DomainError("ise_population: t_max must be > 0");
  std::vector<double> grid(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i)
    grid[i] =
        t_max * static_cast<double>(i) / static_cast<double>(grid_points - 1);
  const EffectCurve est = model_population_curve(m, records, grid);
  EffectCurve truth;
  truth.grid = grid;
  truth.values = true_population_curve(gt, grid, mc_size, seed);
  return ise_curves(est, truth, t_max);
}

std::size_t elbow_select(std::span<const double> nll, std::size_t k_lo) {
  if (nll.size() < 3)
    throw DomainError("elbow: need at least 3 consecutive K values");
  std::size_t best = 1;
  double best_d2 = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < nll.size(); ++i) {
    const double d2 = (nll[i - 1] - nll[i]) - (nll[i] - nll[i + 1]);
    if (d2 > best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return k_lo + best;
}

double rmst(const EffectCurve& survival_curve, double horizon) {
  check_curve(survival_curve, "rmst");
  const auto& g = survival_curve.grid;
  const auto& v = survival_curve.values;
  if (g.front() != 0.0) throw DomainError("rmst: grid must start at 0");
  for (double s : v)
    if (!(s >= -1e-12 && s <= 1.0 + 1e-12))
      throw DomainError("rmst: survival values outside [0,1]");
  if (horizon < 0.0 || horizon > g.back() + 1e-12)
    throw DomainError("rmst: horizon beyond the curve grid");

  EffectCurve c = survival_curve;  // for interpolation at the cut point
  double acc = 0.0;
  for (std::size_t i = 1; i < g.size() && g[i - 1] < horizon; ++i) {
    double t = g[i];
    double s = v[i];
    if (t > horizon) {
      s = interp(c, horizon);
      t = horizon;
    }
    acc += 0.5 * (v[i - 1] + s) * (t - g[i - 1]);
  }
  return acc;
}

double permutation_importance(const CnscModel& m,
                              std::span<const PatientRecord> records,
                              std::size_t index, std::size_t n_perm,
                              std::uint64_t seed) {
  if (records.empty()) throw DomainError("importance: empty record set");
  if (index >= m.covariate_dim)
    throw ShapeError("importance: covariate index out of range");
  if (n_perm == 0) throw DomainError("importance: n_perm must be >= 1");

  const double baseline = factual_nll(m, records, {});
  std::vector<PatientRecord> shuffled(records.begin(), records.end());
  std::vector<double> column(records.size());
  SeededRng rng(seed);
  double delta = 0.0;
  for (std::size_t p = 0; p < n_perm; ++p) {
    for (std::size_t i = 0; i < records.size(); ++i)
      column[i] = records[i].x[index];
    rng.shuffle(column);
    for (std::size_t i = 0; i < records.size(); ++i)
      shuffled[i].x[index] = column[i];
    delta += factual_nll(m, shuffled, {}) - baseline;
  }
  return delta / static_cast<double>(n_perm);
}

std::vector<std::size_t> min_cost_assignment(
    const std::vector<std::vector<double>>& cost) {
  const std::size_t k = cost.size();
  if (k == 0) throw DomainError("assignment: empty cost matrix");
  if (k > 10) throw DomainError("assignment: matrix too large for enumeration");
  for (const auto& row : cost)
    if (row.size() != k) throw ShapeError("assignment: matrix not square");

  std::vector<std::size_t> perm(k), best(k);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_total = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += cost[i][perm[i]];
    if (total < best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

MetricReport evaluate_model(const CnscModel& m,
                            std::span<const PatientRecord> records,
                            const GroundTruth* gt, const EvalOptions& opt) {
  MetricReport rep;
  const std::vector<double> grid = evaluation_grid(records, opt.grid_points);
  const double horizon = grid.back();
  rep.horizon = horizon;

  rep.test_nll = factual_nll(m, records, {}, opt.threads);

  std::vector<int> est_labels(records.size());
  bool have_truth_labels = true;
  std::vector<int> true_labels(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    est_labels[i] = static_cast<int>(assign(m, records[i].x).hard_label);
    true_labels[i] = records[i].z;
    if (records[i].z < 0) have_truth_labels = false;
  }
  rep.rand_index =
      have_truth_labels ? adjusted_rand_index(est_labels, true_labels) : kNaN;

  const SeededRng seeds(opt.seed);
  if (gt != nullptr && gt->k == m.k) {
    std::vector<EffectCurve> est(m.k), truth(m.k);
    for (std::size_t g = 0; g < m.k; ++g) {
      est[g] = model_gate_curve(m, g, grid);
      truth[g].grid = grid;
      truth[g].values =
          true_gate(*gt, g, grid, opt.mc_size, seeds.derive(1000 + g).seed());
    }
    std::vector<std::vector<double>> cost(m.k, std::vector<double>(m.k));
    for (std::size_t i = 0; i < m.k; ++i)
      for (std::size_t j = 0; j < m.k; ++j)
        cost[i][j] = ise_curves(est[i], truth[j], horizon);
    rep.group_matching = min_cost_assignment(cost);
    rep.ise_per_group.resize(m.k);
    for (std::size_t i = 0; i < m.k; ++i)
      rep.ise_per_group[i] = cost[i][rep.group_matching[i]];
  }
  rep.ise_pop = gt != nullptr
                    ? ise_population(m, *gt, records, horizon, grid.size(),
                                     opt.mc_size, seeds.derive(2000).seed())
                    : kNaN;

  rep.rmst_per_group.resize(m.k);
  for (std::size_t g = 0; g < m.k; ++g) {
    for (int arm = 0; arm < 2; ++arm) {
      EffectCurve surv;
      surv.grid = grid;
      surv.values.reserve(grid.size());
      for (double t : grid) {
        const double u = t / m.norm.time_scale;
        const double L = u * monotone_value(m.hazard_net, m.latent(g), u, arm);
        surv.values.push_back(std::exp(-L));
      }
      rep.rmst_per_group[g][static_cast<std::size_t>(arm)] =
          rmst(surv, horizon);
    }
  }

  if (opt.importance) {
    rep.importance.resize(m.covariate_dim);
    for (std::size_t j = 0; j < m.covariate_dim; ++j)
      rep.importance[j] = permutation_importance(
          m, records, j, opt.n_perm, seeds.derive(5000 + j).seed());
  }
  return rep;
}

}  // namespace cnsc
