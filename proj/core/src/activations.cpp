#include "cnsc/activations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cnsc/errors.hpp"

namespace cnsc {

double activate(Activation act, double x) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

double activate_grad(Activation act, double x) {
  switch (act) {
    case Activation::Identity: return 1.0;
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

double activate_grad2(Activation act, double x) {
  switch (act) {
    case Activation::Identity: return 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::Relu: return 0.0;
  }
  return 0.0;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (std::isnan(v)) throw NumericError("softmax: NaN input");
    mx = std::max(mx, v);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

double softplus(double x) {
  if (std::isnan(x)) throw NumericError("softplus: NaN input");
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (std::isnan(x)) throw NumericError("sigmoid: NaN input");
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw ShapeError("log_sum_exp: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (std::isnan(v)) throw NumericError("log_sum_exp: NaN input");
    mx = std::max(mx, v);
  }
  if (std::isinf(mx)) return mx;  // all -inf
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

}  // namespace cnsc
