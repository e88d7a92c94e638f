#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnsc/record.hpp"
#include "cnsc/rng.hpp"

namespace cnsc {

enum class Scenario { Randomised, Observational };

std::string scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);

struct GeneratorConfig {
  std::size_t n = 30000;
  std::size_t k = 3;
  Scenario scenario = Scenario::Randomised;
  std::uint64_t seed = 0;
  std::size_t mc_oracle_size = 100000;  // per-subgroup draws for truth curves
};

/// Everything the generator knows that the model never sees: true labels,
/// coefficient vectors, per-patient propensity bases, and both uncensored
/// potential times. Powers evaluation oracles only.
struct GroundTruth {
  std::size_t k = 0;
  Scenario scenario = Scenario::Randomised;
  std::uint64_t seed = 0;
  std::vector<std::array<double, 2>> centres;     // per group
  std::vector<std::vector<double>> b0, g0, b1, g1;  // per group, 10 each
  std::vector<double> bc;                         // censoring, 5 entries
  std::vector<int> z;
  std::vector<double> p;        // Uniform(0.25, 0.75) base propensity
  std::vector<double> t0, t1;   // potential event times per arm
  std::vector<double> censor;   // censoring times, for structural checks
};

struct Cohort {
  std::vector<PatientRecord> records;
  Scenario scenario = Scenario::Randomised;
  std::uint64_t seed = 0;
};

/// Shifted standard-Gompertz draw via inverse CDF: s + log(1 - log(u)/w),
/// i.e. survival exp(-w(e^(t-s)-1)) past the shift. Strictly greater than s.
double gompertz_sample(double w, double s, double u);

/// Group centres on the informative covariate pair. The first three match the
/// published benchmark; further groups sit on the same radius-2.25 circle.
std::vector<std::array<double, 2>> group_centres(std::size_t k);

std::pair<Cohort, GroundTruth> generate(const GeneratorConfig& cfg);

/// F(v) = (number of values <= v) / n; ties share the highest rank.
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::span<const double> values);
  double operator()(double v) const;

 private:
  std::vector<double> sorted_;
};

/// Monte-Carlo truth for one subgroup: P(T1 >= t | Z=k) - P(T0 >= t | Z=k)
/// from fresh covariates and uncensored potential times.
std::vector<double> true_gate(const GroundTruth& gt, std::size_t group,
                              std::span<const double> grid,
                              std::size_t mc_size, std::uint64_t seed);

/// Population effect curve: subgroup truth curves pooled with the uniform
/// group weights of the generative process.
std::vector<double> true_population_curve(const GroundTruth& gt,
                                          std::span<const double> grid,
                                          std::size_t mc_size,
                                          std::uint64_t seed);

}  // namespace cnsc
