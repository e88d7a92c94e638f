#include "cnsc/monotone.hpp"

#include <cmath>
#include <cstring>

#include "cnsc/activations.hpp"
#include "cnsc/errors.hpp"

namespace cnsc {

MonotoneNet make_monotone_net(std::size_t latent_dim, std::size_t depth,
                              std::size_t width, SeededRng& rng) {
  if (latent_dim == 0) throw DomainError("monotone net: latent_dim must be > 0");
  if (depth == 0) throw DomainError("monotone net: depth must be >= 1");
  if (width == 0) throw DomainError("monotone net: width must be > 0");
  std::vector<std::size_t> dims;
  dims.push_back(latent_dim + 1);
  for (std::size_t i = 0; i < depth; ++i) dims.push_back(width);
  dims.push_back(2);
  MonotoneNet net;
  net.raw = make_mlp(dims, Activation::Tanh, Activation::Identity, rng);
  net.latent_dim = latent_dim;
  return net;
}

namespace {

void check_eval_args(const MonotoneNet& net, std::span<const double> latent,
                     int head) {
  if (latent.size() != net.latent_dim)
    throw ShapeError("monotone net: latent size mismatch");
  if (head != 0 && head != 1)
    throw DomainError("monotone net: head must be 0 or 1");
}

}  // namespace

DualValue monotone_dual(const MonotoneNet& net, std::span<const double> latent,
                        double u, int head) {
  check_eval_args(net, latent, head);
  const auto& layers = net.raw.layers;
  const std::size_t nh = layers.size() - 1;

  std::vector<double> a(latent.begin(), latent.end());
  a.push_back(u);
  std::vector<double> adot(a.size(), 0.0);
  adot.back() = 1.0;

  for (std::size_t l = 0; l < nh; ++l) {
    const auto& ly = layers[l];
    std::vector<double> z(ly.out), zd(ly.out);
    for (std::size_t r = 0; r < ly.out; ++r) {
      const double* wr = ly.w.data() + r * ly.in;
      double s = ly.b[r], sd = 0.0;
      for (std::size_t c = 0; c < ly.in; ++c) {
        const double e = wr[c] * wr[c];
        s += e * a[c];
        sd += e * adot[c];
      }
      z[r] = s;
      zd[r] = sd;
    }
    a.resize(ly.out);
    adot.resize(ly.out);
    for (std::size_t r = 0; r < ly.out; ++r) {
      const double t = std::tanh(z[r]);
      a[r] = t;
      adot[r] = (1.0 - t * t) * zd[r];
    }
  }

  const auto& out = layers.back();
  const double* wr = out.w.data() + static_cast<std::size_t>(head) * out.in;
  double z = out.b[static_cast<std::size_t>(head)], zd = 0.0;
  for (std::size_t c = 0; c < out.in; ++c) {
    const double e = wr[c] * wr[c];
    z += e * a[c];
    zd += e * adot[c];
  }
  return {softplus(z), sigmoid(z) * zd};
}

double monotone_value(const MonotoneNet& net, std::span<const double> latent,
                      double u, int head) {
  return monotone_dual(net, latent, u, head).value;
}

std::array<double, 2> cumulative_hazard(const MonotoneNet& net,
                                        std::span<const double> latent,
                                        double u) {
  if (u < 0.0) throw DomainError("cumulative hazard: negative time");
  return {u * monotone_value(net, latent, u, 0),
          u * monotone_value(net, latent, u, 1)};
}

std::array<double, 2> instantaneous_hazard(const MonotoneNet& net,
                                           std::span<const double> latent,
                                           double u) {
  if (u < 0.0) throw DomainError("instantaneous hazard: negative time");
  const DualValue d0 = monotone_dual(net, latent, u, 0);
  const DualValue d1 = monotone_dual(net, latent, u, 1);
  return {d0.value + u * d0.dot, d1.value + u * d1.dot};
}

HazardPair hazard_at(const MonotoneNet& net, std::span<const double> latent,
                     double u) {
  if (u < 0.0) throw DomainError("hazard: negative time");
  const DualValue d0 = monotone_dual(net, latent, u, 0);
  const DualValue d1 = monotone_dual(net, latent, u, 1);
  HazardPair h;
  h.Lambda0 = u * d0.value;
  h.Lambda1 = u * d1.value;
  h.lambda0 = d0.value + u * d0.dot;
  h.lambda1 = d1.value + u * d1.dot;
  return h;
}

double survival_from_hazard(double Lambda) {
  if (Lambda < 0.0) throw DomainError("survival: negative cumulative hazard");
  return std::exp(-Lambda);
}

// ---------------------------------------------------------------------------

HazardBatch::HazardBatch(const MonotoneNet& net, std::size_t groups) {
  const auto& layers = net.raw.layers;
  if (layers.size() < 2)
    throw ShapeError("hazard batch: net needs at least one hidden layer");
  hidden_ = layers.size() - 1;
  latent_dim_ = net.latent_dim;
  eff_.resize(layers.size());
  acc_.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    eff_[l].resize(layers[l].w.size());
    acc_[l].w.resize(layers[l].w.size());
    acc_[l].b.resize(layers[l].b.size());
  }
  tcol_.resize(layers[0].out);
  groups_.resize(groups);
  for (auto& g : groups_) {
    g.base.resize(layers[0].out);
    g.sum_gz0.resize(layers[0].out);
    g.sum_gz0u.resize(layers[0].out);
    g.sum_gdz0.resize(layers[0].out);
    g.a.resize(hidden_);
    g.adot.resize(hidden_);
    g.zdot.resize(hidden_);
    for (std::size_t l = 0; l < hidden_; ++l) {
      g.a[l].resize(layers[l].out);
      g.adot[l].resize(layers[l].out);
      g.zdot[l].resize(layers[l].out);
    }
  }
  std::size_t widest = 0;
  for (const auto& ly : layers) widest = std::max(widest, ly.out);
  ga_.resize(widest);
  gadot_.resize(widest);
  gz_.resize(widest);
  gzdot_.resize(widest);
}

void HazardBatch::begin_batch(const MonotoneNet& net) {
  const auto& layers = net.raw.layers;
  if (layers.size() != eff_.size() || net.latent_dim != latent_dim_)
    throw ShapeError("hazard batch: net shape changed");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].w;
    for (std::size_t i = 0; i < w.size(); ++i) eff_[l][i] = w[i] * w[i];
    std::fill(acc_[l].w.begin(), acc_[l].w.end(), 0.0);
    std::fill(acc_[l].b.begin(), acc_[l].b.end(), 0.0);
  }
  const auto& l0 = layers[0];
  for (std::size_t r = 0; r < l0.out; ++r)
    tcol_[r] = eff_[0][r * l0.in + latent_dim_];
  for (auto& g : groups_) {
    std::fill(g.sum_gz0.begin(), g.sum_gz0.end(), 0.0);
    std::fill(g.sum_gz0u.begin(), g.sum_gz0u.end(), 0.0);
    std::fill(g.sum_gdz0.begin(), g.sum_gdz0.end(), 0.0);
    g.live = false;
  }
  // biases are used unsquared; copy them out of the net on demand instead of
  // caching, except layer 0 where they fold into each group's base.
  bias0_ = &l0.b;
  net_ = &net;
}

void HazardBatch::set_latent(std::size_t k, std::span<const double> latent) {
  if (net_ == nullptr) throw StateError("hazard batch: begin_batch not called");
  if (k >= groups_.size()) throw ShapeError("hazard batch: group out of range");
  if (latent.size() != latent_dim_)
    throw ShapeError("hazard batch: latent size mismatch");
  auto& g = groups_[k];
  const std::size_t in = latent_dim_ + 1;
  const std::size_t out = g.base.size();
  for (std::size_t r = 0; r < out; ++r) {
    const double* er = eff_[0].data() + r * in;
    double s = (*bias0_)[r];
    for (std::size_t c = 0; c < latent_dim_; ++c) s += er[c] * latent[c];
    g.base[r] = s;
  }
  g.live = true;
}

DualValue HazardBatch::forward(std::size_t k, double u, int head,
                               bool with_dot) {
  auto& g = groups_[k];
  if (!g.live) throw StateError("hazard batch: set_latent not called");
  const auto& layers = net_->raw.layers;
  g.u = u;
  g.head = head;
  g.with_dot = with_dot;

  // layer 0: base already holds the latent part and the bias
  {
    auto& a = g.a[0];
    auto& ad = g.adot[0];
    auto& zd = g.zdot[0];
    for (std::size_t r = 0; r < a.size(); ++r) {
      const double z = g.base[r] + tcol_[r] * u;
      const double t = std::tanh(z);
      a[r] = t;
      if (with_dot) {
        zd[r] = tcol_[r];
        ad[r] = (1.0 - t * t) * tcol_[r];
      }
    }
  }
  for (std::size_t l = 1; l < hidden_; ++l) {
    const auto& prev_a = g.a[l - 1];
    const auto& prev_ad = g.adot[l - 1];
    auto& a = g.a[l];
    auto& ad = g.adot[l];
    auto& zd = g.zdot[l];
    const std::size_t in = layers[l].in;
    for (std::size_t r = 0; r < a.size(); ++r) {
      const double* er = eff_[l].data() + r * in;
      double s = layers[l].b[r];
      for (std::size_t c = 0; c < in; ++c) s += er[c] * prev_a[c];
      double sd = 0.0;
      if (with_dot)
        for (std::size_t c = 0; c < in; ++c) sd += er[c] * prev_ad[c];
      const double t = std::tanh(s);
      a[r] = t;
      if (with_dot) {
        zd[r] = sd;
        ad[r] = (1.0 - t * t) * sd;
      }
    }
  }

  const auto& out = layers.back();
  const auto& last_a = g.a[hidden_ - 1];
  const double* er = eff_.back().data() + static_cast<std::size_t>(head) * out.in;
  double z = out.b[static_cast<std::size_t>(head)];
  for (std::size_t c = 0; c < out.in; ++c) z += er[c] * last_a[c];
  double zd = 0.0;
  if (with_dot) {
    const auto& last_ad = g.adot[hidden_ - 1];
    for (std::size_t c = 0; c < out.in; ++c) zd += er[c] * last_ad[c];
  }
  g.head_sig = sigmoid(z);
  g.head_zdot = zd;
  DualValue dv;
  dv.value = softplus(z);
  dv.dot = with_dot ? g.head_sig * zd : 0.0;
  return dv;
}

void HazardBatch::backward(std::size_t k, double gval, double gdot) {
  auto& g = groups_[k];
  if (!g.live) throw StateError("hazard batch: backward without forward");
  const auto& layers = net_->raw.layers;
  const std::size_t h = static_cast<std::size_t>(g.head);
  const bool dual = g.with_dot;

  // softplus head: value = softplus(z), dot = sigmoid(z) * zdot
  const double sig = g.head_sig;
  double gz = gval * sig;
  double gzd = 0.0;
  if (dual) {
    gz += gdot * sig * (1.0 - sig) * g.head_zdot;
    gzd = gdot * sig;
  }

  // output layer, active head row only
  const auto& out = layers.back();
  const auto& last_a = g.a[hidden_ - 1];
  const auto& last_ad = g.adot[hidden_ - 1];
  {
    double* aw = acc_.back().w.data() + h * out.in;
    const double* er = eff_.back().data() + h * out.in;
    for (std::size_t c = 0; c < out.in; ++c) {
      aw[c] += gz * last_a[c];
      ga_[c] = er[c] * gz;
    }
    if (dual) {
      for (std::size_t c = 0; c < out.in; ++c) {
        aw[c] += gzd * last_ad[c];
        gadot_[c] = er[c] * gzd;
      }
    } else {
      std::fill(gadot_.begin(), gadot_.begin() + out.in, 0.0);
    }
    acc_.back().b[h] += gz;
  }

  // hidden layers, last to first
  for (std::size_t l = hidden_; l-- > 0;) {
    const auto& a = g.a[l];
    const auto& zd = g.zdot[l];
    const std::size_t n = a.size();
    // through tanh: gz = ga*phi' + gadot*phi''*zdot, gzdot = gadot*phi'
    for (std::size_t r = 0; r < n; ++r) {
      const double t = a[r];
      const double p1 = 1.0 - t * t;
      double v = ga_[r] * p1;
      if (dual) {
        v += gadot_[r] * (-2.0 * t * p1) * zd[r];
        gzdot_[r] = gadot_[r] * p1;
      }
      gz_[r] = v;
    }
    if (l == 0) {
      for (std::size_t r = 0; r < n; ++r) {
        g.sum_gz0[r] += gz_[r];
        g.sum_gz0u[r] += gz_[r] * g.u;
        if (dual) g.sum_gdz0[r] += gzdot_[r];
      }
      return;
    }
    const auto& prev_a = g.a[l - 1];
    const auto& prev_ad = g.adot[l - 1];
    const std::size_t in = layers[l].in;
    auto& acc = acc_[l];
    const double* em = eff_[l].data();
    for (std::size_t c = 0; c < in; ++c) {
      ga_[c] = 0.0;
      gadot_[c] = 0.0;
    }
    for (std::size_t r = 0; r < n; ++r) {
      const double gzr = gz_[r];
      double* aw = acc.w.data() + r * in;
      const double* er = em + r * in;
      for (std::size_t c = 0; c < in; ++c) aw[c] += gzr * prev_a[c];
      acc.b[r] += gzr;
      for (std::size_t c = 0; c < in; ++c) ga_[c] += er[c] * gzr;
      if (dual) {
        const double gzdr = gzdot_[r];
        for (std::size_t c = 0; c < in; ++c) aw[c] += gzdr * prev_ad[c];
        for (std::size_t c = 0; c < in; ++c) gadot_[c] += er[c] * gzdr;
      }
    }
  }
}

void HazardBatch::end_group(std::size_t k, std::span<const double> latent,
                            std::span<double> latent_grad) {
  auto& g = groups_[k];
  if (!g.live) return;
  if (latent.size() != latent_dim_ || latent_grad.size() != latent_dim_)
    throw ShapeError("hazard batch: latent size mismatch");
  const std::size_t in = latent_dim_ + 1;
  const std::size_t out = g.base.size();
  auto& acc0 = acc_[0];
  for (std::size_t r = 0; r < out; ++r) {
    const double s = g.sum_gz0[r];
    double* aw = acc0.w.data() + r * in;
    const double* er = eff_[0].data() + r * in;
    for (std::size_t c = 0; c < latent_dim_; ++c) {
      aw[c] += s * latent[c];
      latent_grad[c] += er[c] * s;
    }
    aw[latent_dim_] += g.sum_gz0u[r] + g.sum_gdz0[r];
    acc0.b[r] += s;
  }
  g.live = false;
}

void HazardBatch::finalize(const MonotoneNet& net,
                           std::vector<LayerGrad>& raw_grad) const {
  const auto& layers = net.raw.layers;
  if (raw_grad.size() != layers.size())
    throw ShapeError("hazard batch: gradient buffer shape mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].w;
    if (raw_grad[l].w.size() != w.size() ||
        raw_grad[l].b.size() != layers[l].b.size())
      throw ShapeError("hazard batch: gradient buffer shape mismatch");
    for (std::size_t i = 0; i < w.size(); ++i)
      raw_grad[l].w[i] += 2.0 * w[i] * acc_[l].w[i];
    for (std::size_t i = 0; i < layers[l].b.size(); ++i)
      raw_grad[l].b[i] += acc_[l].b[i];
  }
}

}  // namespace cnsc
