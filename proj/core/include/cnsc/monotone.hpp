#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "cnsc/dense.hpp"
#include "cnsc/rng.hpp"

namespace cnsc {

/// Hazard-shape network. Input is (latent, scaled time), output is one
/// non-negative value per arm (head 0 = control, head 1 = treated).
///
/// The stored weights are unconstrained "raw" values; every evaluation uses
/// their element-wise square, so effective weights are >= 0. Squared weights
/// plus increasing activations (tanh hidden, softplus head) make the output
/// non-decreasing in every input, in particular in time, which keeps
/// t * M(l, t) a valid cumulative hazard.
struct MonotoneNet {
  Mlp raw;             // weights are raw; square before use
  std::size_t latent_dim = 0;

  std::size_t input_dim() const { return latent_dim + 1; }
};

/// depth >= 1 hidden tanh layers of `width`, two identity outputs that are
/// passed through softplus by the evaluation routines.
MonotoneNet make_monotone_net(std::size_t latent_dim, std::size_t depth,
                              std::size_t width, SeededRng& rng);

struct DualValue {
  double value = 0.0;  // M(l, u)
  double dot = 0.0;    // dM/du
};

/// Reference (per-call) evaluation paths. These re-square weights every call;
/// use HazardBatch for anything iterating over many samples.
double monotone_value(const MonotoneNet& net, std::span<const double> latent,
                      double u, int head);
DualValue monotone_dual(const MonotoneNet& net, std::span<const double> latent,
                        double u, int head);

/// Hazards for one subgroup at one (scaled) time, both arms at once.
struct HazardPair {
  double lambda0 = 0.0, lambda1 = 0.0;  // instantaneous
  double Lambda0 = 0.0, Lambda1 = 0.0;  // cumulative
};

/// Cumulative hazards u * M(l, u) for (control, treated).
std::array<double, 2> cumulative_hazard(const MonotoneNet& net,
                                        std::span<const double> latent,
                                        double u);
/// d/du of the cumulative hazards: M + u * dM/du, analytic via a
/// forward-mode pass along the time input. Non-negative by construction.
std::array<double, 2> instantaneous_hazard(const MonotoneNet& net,
                                           std::span<const double> latent,
                                           double u);
HazardPair hazard_at(const MonotoneNet& net, std::span<const double> latent,
                     double u);

/// exp(-Lambda), the survival probability implied by a cumulative hazard.
double survival_from_hazard(double Lambda);

/// Batched evaluator used by the likelihood. Squares the weights once per
/// batch, factors the latent part of the first layer per subgroup, and
/// accumulates parameter gradients across samples.
///
/// Protocol per batch:
///   begin_batch(net);
///   set_latent(k, l_k) for every subgroup;
///   per sample: forward(k, u, head, with_dot) for all k, then (training only)
///               backward(k, gval, gdot) for all k;
///   end_group(k, l_k, latent_grad_k) for every subgroup;
///   finalize(net, raw_grad);
/// forward alone never touches the accumulators, so the same object scores
/// validation batches with no gradient cost.
class HazardBatch {
 public:
  HazardBatch(const MonotoneNet& net, std::size_t groups);

  void begin_batch(const MonotoneNet& net);
  void set_latent(std::size_t k, std::span<const double> latent);
  DualValue forward(std::size_t k, double u, int head, bool with_dot);
  void backward(std::size_t k, double gval, double gdot);
  /// Adds into latent_grad (callers zero it once per batch).
  void end_group(std::size_t k, std::span<const double> latent,
                 std::span<double> latent_grad);
  /// Chains the effective-weight accumulators through the squaring
  /// (d/d raw = 2 * raw * d/d eff) and adds into `raw_grad`.
  void finalize(const MonotoneNet& net, std::vector<LayerGrad>& raw_grad) const;

 private:
  struct GroupState {
    std::vector<double> base;      // eff_w0[:, :L] * latent + b0
    std::vector<double> sum_gz0;   // sum of first-layer pre-act gradients
    std::vector<double> sum_gz0u;  // same, weighted by the sample's u
    std::vector<double> sum_gdz0;  // tangent-channel first-layer gradients
    // forward scratch for the current sample
    std::vector<std::vector<double>> a, adot, zdot;
    double head_sig = 0.0, head_zdot = 0.0, u = 0.0;
    int head = 0;
    bool with_dot = false, live = false;
  };

  std::size_t hidden_ = 0;  // number of tanh layers
  std::size_t latent_dim_ = 0;
  const MonotoneNet* net_ = nullptr;       // valid between begin_batch/finalize
  const std::vector<double>* bias0_ = nullptr;
  std::vector<std::vector<double>> eff_;   // squared weights per layer
  std::vector<double> tcol_;               // time column of eff_[0]
  std::vector<LayerGrad> acc_;             // effective-weight gradients
  std::vector<GroupState> groups_;
  std::vector<double> ga_, gadot_, gz_, gzdot_;  // backward work vectors
};

}  // namespace cnsc
