#include "cnsc/data.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "cnsc/errors.hpp"

namespace cnsc {

std::string scenario_name(Scenario s) {
  return s == Scenario::Randomised ? "randomised" : "observational";
}

Scenario parse_scenario(const std::string& name) {
  if (name == "randomised" || name == "randomized") return Scenario::Randomised;
  if (name == "observational") return Scenario::Observational;
  throw UserError("unknown scenario '" + name +
                  "' (expected randomised or observational)");
}

double gompertz_sample(double w, double s, double u) {
  if (!(w > 0.0)) throw DomainError("gompertz_sample: shape must be > 0");
  if (s < 0.0) throw DomainError("gompertz_sample: shift must be >= 0");
  if (!(u > 0.0 && u < 1.0))
    throw DomainError("gompertz_sample: u must lie in (0,1)");
  return s + std::log(1.0 - std::log(u) / w);
}

std::vector<std::array<double, 2>> group_centres(std::size_t k) {
  static const std::array<std::array<double, 2>, 3> canonical = {
      {{0.0, 2.25}, {-2.25, -1.0}, {2.25, -1.0}}};
  std::vector<std::array<double, 2>> c;
  c.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (i < canonical.size()) {
      c.push_back(canonical[i]);
    } else {
      // extra groups evenly spaced on the same scale
      const double ang =
          std::numbers::pi / 2 +
          2.0 * std::numbers::pi * static_cast<double>(i) /
              static_cast<double>(k);
      c.push_back({2.25 * std::cos(ang), 2.25 * std::sin(ang)});
    }
  }
  return c;
}

namespace {

constexpr std::size_t kCov = 10;

double dot_range(std::span<const double> x, std::span<const double> coef,
                 std::size_t lo, std::size_t hi) {
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += x[i] * coef[i];
  return s;
}

// event-time parameters; treated swaps which covariate block drives
// the shape vs the shift
double shape0(std::span<const double> x, std::span<const double> b) {
  const double d = dot_range(x, b, 5, 10);
  return std::abs(b[0]) + d * d;
}
double shift0(std::span<const double> x, std::span<const double> g) {
  return std::abs(g[0]) + std::abs(dot_range(x, g, 1, 5));
}
double shape1(std::span<const double> x, std::span<const double> b) {
  const double d = dot_range(x, b, 1, 5);
  return std::abs(b[0]) + d * d;
}
double shift1(std::span<const double> x, std::span<const double> g) {
  return std::abs(g[0]) + std::abs(dot_range(x, g, 5, 10));
}

std::vector<double> draw_vec(SeededRng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& e : v) e = rng.normal();
  return v;
}

}  // namespace

std::pair<Cohort, GroundTruth> generate(const GeneratorConfig& cfg) {
  if (cfg.k == 0) throw DomainError("generate: k must be >= 1");
  if (cfg.n < cfg.k) throw DomainError("generate: need n >= k");
  if (cfg.mc_oracle_size < 1000)
    throw DomainError("generate: mc_oracle_size must be >= 1000");

  SeededRng rng(cfg.seed);
  GroundTruth gt;
  gt.k = cfg.k;
  gt.scenario = cfg.scenario;
  gt.seed = cfg.seed;
  gt.centres = group_centres(cfg.k);
  for (std::size_t g = 0; g < cfg.k; ++g) {
    gt.b0.push_back(draw_vec(rng, kCov));
    gt.g0.push_back(draw_vec(rng, kCov));
    gt.b1.push_back(draw_vec(rng, kCov));
    gt.g1.push_back(draw_vec(rng, kCov));
  }
  gt.bc = draw_vec(rng, 5);

  Cohort cohort;
  cohort.scenario = cfg.scenario;
  cohort.seed = cfg.seed;
  cohort.records.resize(cfg.n);
  gt.z.resize(cfg.n);
  gt.p.resize(cfg.n);
  gt.t0.resize(cfg.n);
  gt.t1.resize(cfg.n);
  gt.censor.resize(cfg.n);

  for (std::size_t i = 0; i < cfg.n; ++i) {
    const int z = static_cast<int>(rng.below(cfg.k));
    PatientRecord& rec = cohort.records[i];
    rec.x.resize(kCov);
    rec.x[0] = gt.centres[static_cast<std::size_t>(z)][0] + rng.normal();
    rec.x[1] = gt.centres[static_cast<std::size_t>(z)][1] + rng.normal();
    for (std::size_t j = 2; j < kCov; ++j) rec.x[j] = rng.normal();

    const double u_t0 = rng.uniform01();
    const double u_t1 = rng.uniform01();
    const double p = rng.uniform(0.25, 0.75);
    const double u_c = rng.uniform01();

    const auto& b0 = gt.b0[static_cast<std::size_t>(z)];
    const auto& g0 = gt.g0[static_cast<std::size_t>(z)];
    const auto& b1 = gt.b1[static_cast<std::size_t>(z)];
    const auto& g1 = gt.g1[static_cast<std::size_t>(z)];
    const double t0 = gompertz_sample(shape0(rec.x, b0), shift0(rec.x, g0), u_t0);
    const double t1 = gompertz_sample(shape1(rec.x, b1), shift1(rec.x, g1), u_t1);
    // censoring: bc has 5 entries aligned with x[5:10]
    double cdot = 0.0;
    for (std::size_t j = 0; j < 5; ++j) cdot += rec.x[5 + j] * gt.bc[j];
    const double censor = gompertz_sample(cdot * cdot, 0.0, u_c);

    gt.z[i] = z;
    gt.p[i] = p;
    gt.t0[i] = t0;
    gt.t1[i] = t1;
    gt.censor[i] = censor;
    rec.z = z;
  }

  // treatment pass: randomised uses the base propensity directly, the
  // observational variant scales it by the empirical CDF of the squared
  // norm of the group-informative covariate pair
  std::vector<double> phi;
  std::unique_ptr<EmpiricalCdf> cdf;
  if (cfg.scenario == Scenario::Observational) {
    phi.resize(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
      const auto& x = cohort.records[i].x;
      phi[i] = x[0] * x[0] + x[1] * x[1];
    }
    cdf = std::make_unique<EmpiricalCdf>(phi);
  }
  for (std::size_t i = 0; i < cfg.n; ++i) {
    double q = gt.p[i];
    if (cdf) q *= (*cdf)(phi[i]);
    const int a = rng.uniform01() < q ? 1 : 0;
    PatientRecord& rec = cohort.records[i];
    rec.a = a;
    const double tprime = a == 1 ? gt.t1[i] : gt.t0[i];
    rec.t = std::min(gt.censor[i], tprime);
    rec.d = gt.censor[i] > tprime ? 1 : 0;
  }
  return {std::move(cohort), std::move(gt)};
}

EmpiricalCdf::EmpiricalCdf(std::span<const double> values)
    : sorted_(values.begin(), values.end()) {
  if (sorted_.empty()) throw DomainError("empirical cdf: empty sample");
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double v) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), v);
  return static_cast<double>(it - sorted_.begin()) /
         static_cast<double>(sorted_.size());
}

std::vector<double> true_gate(const GroundTruth& gt, std::size_t group,
                              std::span<const double> grid,
                              std::size_t mc_size, std::uint64_t seed) {
  if (group >= gt.k) throw ShapeError("true_gate: subgroup out of range");
  if (grid.empty()) throw DomainError("true_gate: empty grid");
  if (mc_size == 0) throw DomainError("true_gate: mc_size must be > 0");

  SeededRng rng(seed);
  std::vector<double> t0s(mc_size), t1s(mc_size);
  std::vector<double> x(kCov);
  const auto& centre = gt.centres[group];
  const auto& b0 = gt.b0[group];
  const auto& g0 = gt.g0[group];
  const auto& b1 = gt.b1[group];
  const auto& g1 = gt.g1[group];
  for (std::size_t j = 0; j < mc_size; ++j) {
    x[0] = centre[0] + rng.normal();
    x[1] = centre[1] + rng.normal();
    for (std::size_t i = 2; i < kCov; ++i) x[i] = rng.normal();
    const double u0 = rng.uniform01();
    const double u1 = rng.uniform01();
    t0s[j] = gompertz_sample(shape0(x, b0), shift0(x, g0), u0);
    t1s[j] = gompertz_sample(shape1(x, b1), shift1(x, g1), u1);
  }
  std::sort(t0s.begin(), t0s.end());
  std::sort(t1s.begin(), t1s.end());

  std::vector<double> curve(grid.size());
  const double inv = 1.0 / static_cast<double>(mc_size);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    const auto surv = [&](const std::vector<double>& ts) {
      const auto it = std::lower_bound(ts.begin(), ts.end(), t);
      return static_cast<double>(ts.end() - it) * inv;
    };
    curve[i] = surv(t1s) - surv(t0s);
  }
  return curve;
}

std::vector<double> true_population_curve(const GroundTruth& gt,
                                          std::span<const double> grid,
                                          std::size_t mc_size,
                                          std::uint64_t seed) {
  std::vector<double> pooled(grid.size(), 0.0);
  const SeededRng base(seed);
  for (std::size_t g = 0; g < gt.k; ++g) {
    const std::vector<double> c =
        true_gate(gt, g, grid, mc_size, base.derive(g).seed());
    for (std::size_t i = 0; i < grid.size(); ++i) pooled[i] += c[i];
  }
  for (double& v : pooled) v /= static_cast<double>(gt.k);
  return pooled;
}

}  // namespace cnsc
