#pragma once

#include <span>
#include <vector>

namespace cnsc {

enum class Activation { Identity, Tanh, Relu };

double activate(Activation act, double x);
/// First derivative with respect to the pre-activation.
double activate_grad(Activation act, double x);
/// Second derivative (needed when differentiating a forward-mode pass).
double activate_grad2(Activation act, double x);

/// Max-shift stabilised softmax; entries in (0,1), sum within 1e-12 of 1.
std::vector<double> softmax(std::span<const double> logits);
/// logits - logsumexp(logits); stable companion to softmax.
std::vector<double> log_softmax(std::span<const double> logits);

/// log(1 + e^x) without overflow at large |x|.
double softplus(double x);
/// d softplus / dx == sigmoid.
double sigmoid(double x);

double log_sum_exp(std::span<const double> values);

}  // namespace cnsc
