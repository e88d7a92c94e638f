#include "cnsc/adam.hpp"

#include <cmath>

#include "cnsc/errors.hpp"

namespace cnsc {

namespace {

void update_block(std::span<double> p, std::span<const double> g,
                  AdamState& st, std::size_t offset, double c1, double c2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::size_t k = offset + i;
    st.m[k] = st.beta1 * st.m[k] + (1.0 - st.beta1) * g[i];
    st.v[k] = st.beta2 * st.v[k] + (1.0 - st.beta2) * g[i] * g[i];
    const double mhat = st.m[k] / c1;
    const double vhat = st.v[k] / c2;
    p[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

}  // namespace

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& st) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: block count mismatch");
  std::size_t total = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size())
      throw ShapeError("adam_step: block shape mismatch");
    total += params[b].size();
  }
  if (total != st.m.size())
    throw ShapeError("adam_step: state sized for a different parameter count");

  for (const auto& g : grads)
    for (double v : g)
      if (!std::isfinite(v)) throw NumericError("adam_step: non-finite gradient");

  st.step += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  std::size_t offset = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    update_block(params[b], grads[b], st, offset, c1, c2);
    offset += params[b].size();
  }
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state) {
  const std::span<double> p[] = {params};
  const std::span<const double> g[] = {grads};
  adam_step(std::span<const std::span<double>>(p, 1),
            std::span<const std::span<const double>>(g, 1), state);
}

}  // namespace cnsc
