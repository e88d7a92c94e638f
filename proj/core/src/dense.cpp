#include "cnsc/dense.hpp"

#include <cmath>
#include <string>

#include "cnsc/errors.hpp"

namespace cnsc {

DenseLayer make_layer(std::size_t in, std::size_t out, Activation act) {
  DenseLayer layer;
  layer.in = in;
  layer.out = out;
  layer.w.assign(in * out, 0.0);
  layer.b.assign(out, 0.0);
  layer.act = act;
  return layer;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size();
  return n;
}

Mlp make_mlp(std::span<const std::size_t> dims, Activation hidden,
             Activation last, SeededRng& rng) {
  if (dims.size() < 2) throw ShapeError("make_mlp: need at least in and out dims");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool is_last = (i + 2 == dims.size());
    DenseLayer layer = make_layer(dims[i], dims[i + 1], is_last ? last : hidden);
    const double limit = std::sqrt(6.0 / static_cast<double>(dims[i] + dims[i + 1]));
    for (double& w : layer.w) w = rng.uniform(-limit, limit);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

std::vector<LayerGrad> make_grad_buffers(const Mlp& mlp) {
  std::vector<LayerGrad> grads(mlp.layers.size());
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    grads[i].w.assign(mlp.layers[i].w.size(), 0.0);
    grads[i].b.assign(mlp.layers[i].b.size(), 0.0);
  }
  return grads;
}

void zero_grads(std::vector<LayerGrad>& grads) {
  for (auto& g : grads) {
    std::fill(g.w.begin(), g.w.end(), 0.0);
    std::fill(g.b.begin(), g.b.end(), 0.0);
  }
}

void GradientTape::bind(const Mlp& mlp) {
  pre.resize(mlp.layers.size());
  post.resize(mlp.layers.size());
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    pre[i].assign(mlp.layers[i].out, 0.0);
    post[i].assign(mlp.layers[i].out, 0.0);
  }
  grads = make_grad_buffers(mlp);
  forward_valid = false;
}

namespace {

void affine(const DenseLayer& l, std::span<const double> x, std::vector<double>& z) {
  z.resize(l.out);
  const double* w = l.w.data();
  for (std::size_t j = 0; j < l.out; ++j) {
    double acc = l.b[j];
    const double* row = w + j * l.in;
    for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * x[i];
    z[j] = acc;
  }
}

}  // namespace

std::vector<double> mlp_forward(const Mlp& mlp, std::span<const double> x) {
  if (x.size() != mlp.input_dim())
    throw ShapeError("mlp_forward: input dim " + std::to_string(x.size()) +
                     ", expected " + std::to_string(mlp.input_dim()));
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> z;
  for (const auto& l : mlp.layers) {
    affine(l, cur, z);
    cur.resize(l.out);
    for (std::size_t j = 0; j < l.out; ++j) cur[j] = activate(l.act, z[j]);
  }
  return cur;
}

const std::vector<double>& mlp_forward(const Mlp& mlp, std::span<const double> x,
                                       GradientTape& tape) {
  if (x.size() != mlp.input_dim())
    throw ShapeError("mlp_forward: input dim " + std::to_string(x.size()) +
                     ", expected " + std::to_string(mlp.input_dim()));
  if (tape.pre.size() != mlp.layers.size()) tape.bind(mlp);
  tape.input.assign(x.begin(), x.end());
  std::span<const double> cur = tape.input;
  for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
    const auto& l = mlp.layers[li];
    affine(l, cur, tape.pre[li]);
    tape.post[li].resize(l.out);
    for (std::size_t j = 0; j < l.out; ++j)
      tape.post[li][j] = activate(l.act, tape.pre[li][j]);
    cur = tape.post[li];
  }
  tape.forward_valid = true;
  return tape.post.back();
}

namespace detail {

void mlp_backward_accum(const Mlp& mlp, const GradientTape& tape,
                        std::span<const double> upstream,
                        std::vector<LayerGrad>& acc, double* xgrad) {
  if (!tape.forward_valid)
    throw StateError("mlp_backward: no cached forward pass");
  if (upstream.size() != mlp.output_dim())
    throw ShapeError("mlp_backward: upstream dim mismatch");

  std::vector<double> ga(upstream.begin(), upstream.end());
  std::vector<double> gz;
  std::vector<double> ga_prev;
  for (std::size_t li = mlp.layers.size(); li-- > 0;) {
    const auto& l = mlp.layers[li];
    gz.resize(l.out);
    for (std::size_t j = 0; j < l.out; ++j)
      gz[j] = ga[j] * activate_grad(l.act, tape.pre[li][j]);

    std::span<const double> below =
        li == 0 ? std::span<const double>(tape.input)
                : std::span<const double>(tape.post[li - 1]);
    auto& g = acc[li];
    for (std::size_t j = 0; j < l.out; ++j) {
      const double gj = gz[j];
      if (gj == 0.0) {
        continue;
      }
      double* grow = g.w.data() + j * l.in;
      for (std::size_t i = 0; i < l.in; ++i) grow[i] += gj * below[i];
    }
    for (std::size_t j = 0; j < l.out; ++j) g.b[j] += gz[j];

    const bool need_input_grad = (li > 0) || (xgrad != nullptr);
    if (need_input_grad) {
      ga_prev.assign(l.in, 0.0);
      for (std::size_t j = 0; j < l.out; ++j) {
        const double gj = gz[j];
        if (gj == 0.0) continue;
        const double* row = l.w.data() + j * l.in;
        for (std::size_t i = 0; i < l.in; ++i) ga_prev[i] += gj * row[i];
      }
      ga = ga_prev;
    }
  }
  if (xgrad != nullptr)
    for (std::size_t i = 0; i < mlp.input_dim(); ++i) xgrad[i] = ga[i];
}

}  // namespace detail

std::vector<double> mlp_backward(const Mlp& mlp, GradientTape& tape,
                                 std::span<const double> upstream) {
  zero_grads(tape.grads);
  std::vector<double> xgrad(mlp.input_dim(), 0.0);
  detail::mlp_backward_accum(mlp, tape, upstream, tape.grads, xgrad.data());
  return xgrad;
}

}  // namespace cnsc
