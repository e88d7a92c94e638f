#include "cnsc/model.hpp"

#include <cmath>

#include "cnsc/activations.hpp"
#include "cnsc/errors.hpp"

namespace cnsc {

std::vector<double> normalize(const Normalizers& n, std::span<const double> x) {
  if (x.size() != n.mean.size())
    throw ShapeError("normalize: covariate dimension mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = (x[i] - n.mean[i]) / n.stddev[i];
  return out;
}

std::span<const double> CnscModel::latent(std::size_t group) const {
  if (group >= k) throw ShapeError("model: subgroup index out of range");
  return {latents.data() + group * latent_dim, latent_dim};
}

std::span<double> CnscModel::latent(std::size_t group) {
  if (group >= k) throw ShapeError("model: subgroup index out of range");
  return {latents.data() + group * latent_dim, latent_dim};
}

CnscModel make_model(std::size_t covariate_dim, std::size_t k,
                     std::size_t latent_dim, std::size_t depth,
                     std::size_t width, SeededRng& rng) {
  if (k == 0) throw DomainError("model: need at least one subgroup");
  if (covariate_dim == 0) throw DomainError("model: need covariates");
  CnscModel m;
  m.k = k;
  m.latent_dim = latent_dim;
  m.covariate_dim = covariate_dim;

  std::vector<std::size_t> dims;
  dims.push_back(covariate_dim);
  for (std::size_t i = 0; i < depth; ++i) dims.push_back(width);
  dims.push_back(k);
  m.assign_net = make_mlp(dims, Activation::Tanh, Activation::Identity, rng);
  dims.back() = 1;
  m.propensity_net = make_mlp(dims, Activation::Tanh, Activation::Identity, rng);
  m.hazard_net = make_monotone_net(latent_dim, depth, width, rng);

  m.latents.resize(k * latent_dim);
  for (auto& v : m.latents) v = rng.normal();

  m.norm.mean.assign(covariate_dim, 0.0);
  m.norm.stddev.assign(covariate_dim, 1.0);
  m.norm.time_scale = 1.0;
  return m;
}

SubgroupPosterior assign(const CnscModel& m, std::span<const double> x) {
  const std::vector<double> xn = normalize(m.norm, x);
  const std::vector<double> logits = mlp_forward(m.assign_net, xn);
  SubgroupPosterior post;
  post.probabilities = softmax(logits);
  post.hard_label = 0;
  for (std::size_t i = 1; i < post.probabilities.size(); ++i)
    if (post.probabilities[i] > post.probabilities[post.hard_label])
      post.hard_label = i;
  return post;
}

double propensity(const CnscModel& m, std::span<const double> x) {
  const std::vector<double> xn = normalize(m.norm, x);
  const std::vector<double> logit = mlp_forward(m.propensity_net, xn);
  double p = sigmoid(logit[0]);
  if (p < 1e-12) p = 1e-12;
  if (p > 1.0 - 1e-12) p = 1.0 - 1e-12;
  return p;
}

namespace {

void check_arm(int a) {
  if (a != 0 && a != 1) throw DomainError("model: treatment arm must be 0 or 1");
}

}  // namespace

double survival(const CnscModel& m, std::span<const double> x, double t,
                int a) {
  check_arm(a);
  if (t < 0.0) throw DomainError("survival: negative time");
  const SubgroupPosterior post = assign(m, x);
  const double u = t / m.norm.time_scale;
  double s = 0.0;
  for (std::size_t g = 0; g < m.k; ++g) {
    const double M = monotone_value(m.hazard_net, m.latent(g), u, a);
    s += post.probabilities[g] * std::exp(-u * M);
  }
  return s;
}

double event_density(const CnscModel& m, std::span<const double> x, double t,
                     int a) {
  check_arm(a);
  if (t < 0.0) throw DomainError("event density: negative time");
  const SubgroupPosterior post = assign(m, x);
  const double c = m.norm.time_scale;
  const double u = t / c;
  double f = 0.0;
  for (std::size_t g = 0; g < m.k; ++g) {
    const DualValue d = monotone_dual(m.hazard_net, m.latent(g), u, a);
    const double lambda = (d.value + u * d.dot) / c;  // d/dt of u*M
    f += post.probabilities[g] * lambda * std::exp(-u * d.value);
  }
  return f;
}

double gate(const CnscModel& m, std::size_t group, double t) {
  if (group >= m.k) throw ShapeError("gate: subgroup index out of range");
  if (t < 0.0) throw DomainError("gate: negative time");
  const double u = t / m.norm.time_scale;
  const auto latent = m.latent(group);
  const double L1 = u * monotone_value(m.hazard_net, latent, u, 1);
  const double L0 = u * monotone_value(m.hazard_net, latent, u, 0);
  return std::exp(-L1) - std::exp(-L0);
}

double ite(const CnscModel& m, std::span<const double> x, double t) {
  const SubgroupPosterior post = assign(m, x);
  double e = 0.0;
  for (std::size_t g = 0; g < m.k; ++g)
    e += post.probabilities[g] * gate(m, g, t);
  return e;
}

}  // namespace cnsc
