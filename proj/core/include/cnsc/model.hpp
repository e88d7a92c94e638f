#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnsc/dense.hpp"
#include "cnsc/monotone.hpp"
#include "cnsc/rng.hpp"

namespace cnsc {

/// Covariate z-scoring statistics plus the global time scale. Times are
/// divided by time_scale before entering the hazard net so the network sees
/// values in roughly [0, 1].
struct Normalizers {
  std::vector<double> mean;
  std::vector<double> stddev;
  double time_scale = 1.0;
};

std::vector<double> normalize(const Normalizers& n, std::span<const double> x);

/// Mixture survival model: an assignment net routes patients to K subgroups,
/// each subgroup carries a latent vector feeding a shared two-arm hazard net,
/// and a propensity net estimates treatment probability for the weighting.
struct CnscModel {
  std::size_t k = 0;
  std::size_t latent_dim = 0;
  std::size_t covariate_dim = 0;
  Mlp assign_net;       // covariates -> k logits (softmax head)
  Mlp propensity_net;   // covariates -> 1 logit (sigmoid head)
  MonotoneNet hazard_net;
  std::vector<double> latents;  // k x latent_dim, row-major
  Normalizers norm;
  std::uint64_t config_hash = 0;

  std::span<const double> latent(std::size_t group) const;
  std::span<double> latent(std::size_t group);
};

/// Fresh model with Glorot-uniform nets and standard-normal latents. Draws
/// from `rng` in a fixed order (assign, propensity, hazard, latents).
CnscModel make_model(std::size_t covariate_dim, std::size_t k,
                     std::size_t latent_dim, std::size_t depth,
                     std::size_t width, SeededRng& rng);

struct SubgroupPosterior {
  std::vector<double> probabilities;
  std::size_t hard_label = 0;  // argmax, lowest index on ties
};

SubgroupPosterior assign(const CnscModel& m, std::span<const double> x);

/// P(A=1 | x), clamped away from {0,1} so downstream logs are finite.
double propensity(const CnscModel& m, std::span<const double> x);

/// Mixture survival P(T' > t | x, do(A=a)); t is raw (unscaled) time.
double survival(const CnscModel& m, std::span<const double> x, double t, int a);

/// -dS/dt of the mixture; includes the 1/time_scale Jacobian.
double event_density(const CnscModel& m, std::span<const double> x, double t,
                     int a);

/// Subgroup-level effect: treated-arm survival minus control-arm survival.
double gate(const CnscModel& m, std::size_t group, double t);

/// Individual effect: assignment-weighted mixture of subgroup effects,
/// identical to survival(x,t,1) - survival(x,t,0).
double ite(const CnscModel& m, std::span<const double> x, double t);

/// Versioned JSON checkpoint; doubles stored as base64 IEEE-754 bytes so a
/// round-trip reproduces outputs bit-identically.
void save_checkpoint(const CnscModel& m, const std::string& path);
CnscModel load_checkpoint(const std::string& path);

}  // namespace cnsc
