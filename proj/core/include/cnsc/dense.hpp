#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cnsc/activations.hpp"
#include "cnsc/rng.hpp"

namespace cnsc {

/// Fully connected layer. Weights are row-major (out x in).
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> w;
  std::vector<double> b;
  Activation act = Activation::Identity;
};

DenseLayer make_layer(std::size_t in, std::size_t out, Activation act);

/// Plain multi-layer perceptron; heads (softmax/sigmoid/softplus) are applied
/// by callers so the same trunk machinery serves every network here.
struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }
  std::size_t parameter_count() const;
};

/// dims = {in, hidden..., out}. Hidden layers use `hidden`, the final layer
/// `last`. Weights are Glorot-uniform, biases zero.
Mlp make_mlp(std::span<const std::size_t> dims, Activation hidden,
             Activation last, SeededRng& rng);

struct LayerGrad {
  std::vector<double> w;
  std::vector<double> b;
};

std::vector<LayerGrad> make_grad_buffers(const Mlp& mlp);
void zero_grads(std::vector<LayerGrad>& grads);

/// Forward cache plus gradient buffers for one network.
struct GradientTape {
  std::vector<double> input;
  std::vector<std::vector<double>> pre;   // z per layer
  std::vector<std::vector<double>> post;  // activation per layer
  std::vector<LayerGrad> grads;
  bool forward_valid = false;

  void bind(const Mlp& mlp);
};

/// Evaluation without caching (frozen nets).
std::vector<double> mlp_forward(const Mlp& mlp, std::span<const double> x);

/// Forward pass that caches intermediates in the tape for a later backward.
const std::vector<double>& mlp_forward(const Mlp& mlp, std::span<const double> x,
                                       GradientTape& tape);

/// Populates tape.grads (zeroed first) and returns the input gradient.
std::vector<double> mlp_backward(const Mlp& mlp, GradientTape& tape,
                                 std::span<const double> upstream);

namespace detail {
/// Adds this sample's parameter gradients into `acc` without zeroing; used by
/// batched training loops. Input gradient is written to `xgrad` when non-null.
void mlp_backward_accum(const Mlp& mlp, const GradientTape& tape,
                        std::span<const double> upstream,
                        std::vector<LayerGrad>& acc, double* xgrad);
}  // namespace detail

}  // namespace cnsc
