#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "cnsc/data.hpp"
#include "cnsc/model.hpp"
#include "cnsc/objective.hpp"
#include "cnsc/rng.hpp"

using namespace cnsc;

namespace {

CnscModel small_model(std::size_t d, std::uint64_t seed) {
  SeededRng rng(seed);
  CnscModel m = make_model(d, 3, 4, 2, 6, rng);
  m.norm.mean.assign(d, 0.0);
  m.norm.stddev.assign(d, 1.0);
  m.norm.time_scale = 4.0;
  return m;
}

std::vector<PatientRecord> small_cohort(std::size_t n, std::size_t d,
                                        std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<PatientRecord> recs(n);
  for (auto& r : recs) {
    r.x.resize(d);
    for (auto& v : r.x) v = rng.normal();
    r.a = rng.bernoulli(0.5) ? 1 : 0;
    r.t = 0.05 + 3.0 * rng.uniform01();
    r.d = rng.bernoulli(0.5) ? 1 : 0;
  }
  return recs;
}

std::vector<std::size_t> all_idx(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

TEST_CASE("inverse propensity weights hit the pinned oracle values") {
  const std::vector<double> p{0.5, 0.01, 0.2, 0.995, 0.8};
  const std::vector<int> a{1, 1, 0, 0, 1};
  const auto w = ipw_weights(p, a);
  CHECK(w[0] == doctest::Approx(2.0));           // 1/0.5
  CHECK(w[1] == doctest::Approx(20.0));          // clipped at 0.05
  CHECK(w[2] == doctest::Approx(1.25));          // control: 1/(1-0.2)
  CHECK(w[3] == doctest::Approx(20.0));          // control of p clipped at .95
  CHECK(w[4] == doctest::Approx(1.25));          // 1/0.8
}

TEST_CASE("weights always live inside the truncation band") {
  SeededRng rng(3);
  std::vector<double> p(5000);
  std::vector<int> a(5000);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = rng.uniform01();
    a[i] = rng.bernoulli(0.5) ? 1 : 0;
  }
  const auto w = ipw_weights(p, a);
  for (double v : w) {
    CHECK(v >= 1.0 / 0.95 - 1e-12);
    CHECK(v <= 20.0 + 1e-12);
  }
}

TEST_CASE("unit-weight objective equals the unweighted factual NLL") {
  const std::size_t d = 5, n = 64;
  const CnscModel m = small_model(d, 11);
  const auto recs = small_cohort(n, d, 12);
  const std::vector<double> ones(n, 1.0);
  const auto idx = all_idx(n);
  CHECK(weighted_nll(m, recs, ones, idx) ==
        doctest::Approx(factual_nll(m, recs, idx)).epsilon(1e-15));
}

TEST_CASE("objective is a weighted mean over the batch") {
  const std::size_t d = 4, n = 10;
  const CnscModel m = small_model(d, 21);
  const auto recs = small_cohort(n, d, 22);
  SeededRng rng(23);
  std::vector<double> w(n);
  for (auto& v : w) v = 1.0 + rng.uniform01();
  const auto idx = all_idx(n);
  double manual = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<std::size_t> one{i};
    manual += w[i] * weighted_nll(m, recs, std::vector<double>(n, 1.0), one);
  }
  manual /= double(n);
  CHECK(weighted_nll(m, recs, w, idx) ==
        doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("event terms use the density and censored terms the survival") {
  const std::size_t d = 3;
  const CnscModel m = small_model(d, 31);
  auto recs = small_cohort(1, d, 32);
  const std::vector<double> ones{1.0};
  const std::vector<std::size_t> idx{0};

  recs[0].d = 1;
  const double ev = weighted_nll(m, recs, ones, idx);
  CHECK(ev == doctest::Approx(-std::log(event_density(
                  m, recs[0].x, recs[0].t, recs[0].a)))
                  .epsilon(1e-10));

  recs[0].d = 0;
  const double ce = weighted_nll(m, recs, ones, idx);
  CHECK(ce ==
        doctest::Approx(-std::log(survival(m, recs[0].x, recs[0].t, recs[0].a)))
            .epsilon(1e-10));
}

TEST_CASE("analytic gradients match central finite differences") {
  const std::size_t d = 4, n = 24;
  CnscModel m = small_model(d, 41);
  const auto recs = small_cohort(n, d, 42);
  SeededRng wr(43);
  std::vector<double> w(n);
  for (auto& v : w) v = 1.0 + wr.uniform01();
  const auto idx = all_idx(n);

  ModelGrad grad = make_model_grad(m);
  zero_model_grad(grad);
  const double base = weighted_nll_grad(m, recs, w, idx, grad);
  CHECK(base == doctest::Approx(weighted_nll(m, recs, w, idx)));

  const double h = 1e-6;
  auto fd_check = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = weighted_nll(m, recs, w, idx);
    param = keep - h;
    const double dn = weighted_nll(m, recs, w, idx);
    param = keep;
    CHECK(analytic ==
          doctest::Approx((up - dn) / (2 * h)).epsilon(5e-4).scale(1e-3));
  };

  for (std::size_t li = 0; li < m.assign_net.layers.size(); ++li) {
    auto& layer = m.assign_net.layers[li];
    for (std::size_t i = 0; i < layer.w.size(); i += 7)
      fd_check(layer.w[i], grad.assign[li].w[i]);
    for (std::size_t i = 0; i < layer.b.size(); i += 3)
      fd_check(layer.b[i], grad.assign[li].b[i]);
  }
  for (std::size_t li = 0; li < m.hazard_net.raw.layers.size(); ++li) {
    auto& layer = m.hazard_net.raw.layers[li];
    for (std::size_t i = 0; i < layer.w.size(); i += 5)
      fd_check(layer.w[i], grad.hazard[li].w[i]);
    for (std::size_t i = 0; i < layer.b.size(); i += 2)
      fd_check(layer.b[i], grad.hazard[li].b[i]);
  }
  for (std::size_t i = 0; i < m.latents.size(); i += 3)
    fd_check(m.latents[i], grad.latents[i]);
}

TEST_CASE("loss and gradients are bit-identical across thread counts") {
  const std::size_t d = 5, n = 301;
  const CnscModel m = small_model(d, 51);
  const auto recs = small_cohort(n, d, 52);
  SeededRng wr(53);
  std::vector<double> w(n);
  for (auto& v : w) v = 1.0 + wr.uniform01();
  const auto idx = all_idx(n);

  ModelGrad g1 = make_model_grad(m), g4 = make_model_grad(m);
  zero_model_grad(g1);
  zero_model_grad(g4);
  const double l1 = weighted_nll_grad(m, recs, w, idx, g1, 1);
  const double l4 = weighted_nll_grad(m, recs, w, idx, g4, 4);
  CHECK(l1 == l4);
  for (std::size_t li = 0; li < g1.assign.size(); ++li)
    for (std::size_t i = 0; i < g1.assign[li].w.size(); ++i)
      CHECK(g1.assign[li].w[i] == g4.assign[li].w[i]);
  for (std::size_t i = 0; i < g1.latents.size(); ++i)
    CHECK(g1.latents[i] == g4.latents[i]);
}

TEST_CASE("propensity cross-entropy oracle at an uninformative head") {
  const std::size_t d = 3, n = 40;
  auto recs = small_cohort(n, d, 61);
  SeededRng rng(62);
  Mlp w_net = make_mlp(std::vector<std::size_t>{d, 4, 1}, Activation::Tanh,
                       Activation::Identity, rng);
  // zero the head: logit 0 -> p = 0.5 -> CE = log 2 whatever the labels
  for (auto& w : w_net.layers.back().w) w = 0.0;
  for (auto& b : w_net.layers.back().b) b = 0.0;
  Normalizers norm;
  norm.mean.assign(d, 0.0);
  norm.stddev.assign(d, 1.0);
  const auto idx = all_idx(n);
  CHECK(propensity_ce(w_net, norm, recs, idx) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("propensity gradient matches finite differences") {
  const std::size_t d = 3, n = 30;
  const auto recs = small_cohort(n, d, 71);
  SeededRng rng(72);
  Mlp w_net = make_mlp(std::vector<std::size_t>{d, 5, 1}, Activation::Tanh,
                       Activation::Identity, rng);
  Normalizers norm;
  norm.mean.assign(d, 0.1);
  norm.stddev.assign(d, 0.9);
  const auto idx = all_idx(n);

  std::vector<LayerGrad> grad = make_grad_buffers(w_net);
  zero_grads(grad);
  const double base = propensity_ce_grad(w_net, norm, recs, idx, grad);
  CHECK(base == doctest::Approx(propensity_ce(w_net, norm, recs, idx)));

  const double h = 1e-6;
  for (std::size_t li = 0; li < w_net.layers.size(); ++li) {
    auto& layer = w_net.layers[li];
    for (std::size_t i = 0; i < layer.w.size(); i += 2) {
      const double keep = layer.w[i];
      layer.w[i] = keep + h;
      const double up = propensity_ce(w_net, norm, recs, idx);
      layer.w[i] = keep - h;
      const double dn = propensity_ce(w_net, norm, recs, idx);
      layer.w[i] = keep;
      CHECK(grad[li].w[i] ==
            doctest::Approx((up - dn) / (2 * h)).epsilon(1e-4).scale(1e-3));
    }
  }
}
