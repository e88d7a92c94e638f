#pragma once

#include <span>
#include <vector>

#include "cnsc/model.hpp"
#include "cnsc/record.hpp"

namespace cnsc {

/// Truncated inverse-propensity weights: w_i = 1/clip(p) with the propensity
/// clipped to 0.05 below and 0.95 above before inversion, and the factual arm
/// probability (p for treated, 1-p for untreated) in between. Every weight
/// lands in [1/0.95, 1/0.05].
std::vector<double> ipw_weights(std::span<const double> propensities,
                                std::span<const int> treatments);

/// Gradients for everything stage-2 training moves: assignment net, hazard
/// net (raw weights), and the latent vectors.
struct ModelGrad {
  std::vector<LayerGrad> assign;
  std::vector<LayerGrad> hazard;
  std::vector<double> latents;  // k x latent_dim, row-major
};

ModelGrad make_model_grad(const CnscModel& m);
void zero_model_grad(ModelGrad& g);

/// Weighted factual negative log-likelihood, averaged over the batch.
/// Events contribute -w log f(t|x,a), censored samples -w log S(t|x,a); both
/// are evaluated in the log domain with a log-sum-exp over subgroups.
/// `weights` aligns with `records`; `idx` selects the batch (empty = all).
/// `threads` only changes wall time: samples are reduced in a fixed chunk
/// order, so results are bit-identical for any thread count.
double weighted_nll(const CnscModel& m, std::span<const PatientRecord> records,
                    std::span<const double> weights,
                    std::span<const std::size_t> idx, int threads = 1);

/// Same loss; also accumulates d(loss)/d(parameters) into `grad` (zeroed
/// first). The propensity net takes no gradient: weights are inputs here.
double weighted_nll_grad(const CnscModel& m,
                         std::span<const PatientRecord> records,
                         std::span<const double> weights,
                         std::span<const std::size_t> idx, ModelGrad& grad,
                         int threads = 1);

/// Unweighted factual NLL (unit weights) over `idx`.
double factual_nll(const CnscModel& m, std::span<const PatientRecord> records,
                   std::span<const std::size_t> idx, int threads = 1);

/// Mean binary cross-entropy of the propensity head against treatment labels.
double propensity_ce(const Mlp& w_net, const Normalizers& norm,
                     std::span<const PatientRecord> records,
                     std::span<const std::size_t> idx);

/// Cross-entropy plus parameter gradients (accumulated into `grad`, zeroed
/// first). Returns the loss.
double propensity_ce_grad(const Mlp& w_net, const Normalizers& norm,
                          std::span<const PatientRecord> records,
                          std::span<const std::size_t> idx,
                          std::vector<LayerGrad>& grad);

}  // namespace cnsc
