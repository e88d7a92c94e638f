#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cnsc/data.hpp"
#include "cnsc/model.hpp"
#include "cnsc/record.hpp"

namespace cnsc {

struct EffectCurve {
  std::vector<double> grid;    // strictly increasing times
  std::vector<double> values;  // effect (or survival) per grid point
};

/// 200 uniform points from 0 to the last observed event time.
std::vector<double> evaluation_grid(std::span<const PatientRecord> records,
                                    std::size_t points = 200);

/// Contingency-table adjusted Rand index; 1 when both partitions carry no
/// information to disagree on (degenerate denominator).
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Trapezoid integral of the squared difference over [0, t_max]; the truth
/// curve is linearly interpolated onto the estimate's grid.
double ise_curves(const EffectCurve& est, const EffectCurve& truth,
                  double t_max);

/// Model-side subgroup effect curve on a grid.
EffectCurve model_gate_curve(const CnscModel& m, std::size_t group,
                             std::span<const double> grid);

/// Mean predicted individual effect over a covariate sample: the assignment
/// probabilities are averaged once and applied to the subgroup curves.
EffectCurve model_population_curve(const CnscModel& m,
                                   std::span<const PatientRecord> records,
                                   std::span<const double> grid);

/// ISE between the model's mean effect and the Monte-Carlo population truth.
double ise_population(const CnscModel& m, const GroundTruth& gt,
                      std::span<const PatientRecord> records, double t_max,
                      std::size_t grid_points, std::size_t mc_size,
                      std::uint64_t seed);

/// K* maximising the discrete second difference of NLL over interior points;
/// ties go to the lowest K. `nll[i]` is the value at K = k_lo + i.
std::size_t elbow_select(std::span<const double> nll, std::size_t k_lo);

/// Trapezoid integral of a survival curve from 0 to `horizon`.
double rmst(const EffectCurve& survival_curve, double horizon);

/// Mean NLL increase over `n_perm` shuffles of covariate column `index`
/// (unweighted factual NLL, fresh shuffle per repetition).
double permutation_importance(const CnscModel& m,
                              std::span<const PatientRecord> records,
                              std::size_t index, std::size_t n_perm,
                              std::uint64_t seed);

/// Exact minimum-cost matching of rows to columns (square cost matrix,
/// permutation enumeration; fine for the subgroup counts used here).
std::vector<std::size_t> min_cost_assignment(
    const std::vector<std::vector<double>>& cost);

struct MetricReport {
  double rand_index = 0.0;           // NaN when labels are unavailable
  std::vector<double> ise_per_group;  // after min-cost matching to truth
  std::vector<std::size_t> group_matching;  // model group -> truth group
  double ise_pop = 0.0;              // NaN without ground truth
  double test_nll = 0.0;
  std::vector<std::array<double, 2>> rmst_per_group;  // {control, treated}
  std::vector<double> importance;    // per covariate
  double horizon = 0.0;              // end of the evaluation grid
};

struct EvalOptions {
  std::size_t grid_points = 200;
  std::size_t mc_size = 100000;
  std::size_t n_perm = 10;
  std::uint64_t seed = 0;
  bool importance = true;
  int threads = 1;
};

/// Full evaluation on one record set; `gt` may be null (ARI/ISE become NaN).
MetricReport evaluate_model(const CnscModel& m,
                            std::span<const PatientRecord> records,
                            const GroundTruth* gt, const EvalOptions& opt);

}  // namespace cnsc
