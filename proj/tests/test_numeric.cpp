#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "cnsc/activations.hpp"
#include "cnsc/adam.hpp"
#include "cnsc/dense.hpp"
#include "cnsc/rng.hpp"

using namespace cnsc;

TEST_CASE("rng reruns are bit-identical and streams are decoupled") {
  SeededRng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  SeededRng base(7);
  SeededRng s1 = base.derive(1);
  SeededRng s2 = base.derive(2);
  // different streams should not collide on a short prefix
  int same = 0;
  for (int i = 0; i < 64; ++i) same += s1.next_u64() == s2.next_u64();
  CHECK(same == 0);

  // deriving must not perturb the parent sequence
  SeededRng c(7);
  (void)c.derive(1);
  SeededRng d(7);
  CHECK(c.next_u64() == d.next_u64());
}

TEST_CASE("uniform01 stays inside the open interval") {
  SeededRng rng(3);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 200000; ++i) {
    const double u = rng.uniform01();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("normal draws have roughly standard moments") {
  SeededRng rng(11);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("shuffle produces a permutation and below() respects its bound") {
  SeededRng rng(5);
  std::vector<std::size_t> v(257);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v);
  std::set<std::size_t> seen(v.begin(), v.end());
  CHECK(seen.size() == v.size());
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == v.size() - 1);

  for (int i = 0; i < 1000; ++i) CHECK(rng.below(17) < 17);
}

TEST_CASE("softmax normalises and matches a shifted naive computation") {
  std::vector<double> logits{1.0, -2.0, 0.5, 700.0};  // overflow bait
  std::vector<double> p = softmax(logits);
  double sum = 0;
  for (double q : p) {
    CHECK(q >= 0.0);
    sum += q;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[3] == doctest::Approx(1.0));

  std::vector<double> lp = log_softmax(logits);
  for (std::size_t i = 0; i < p.size(); ++i)
    CHECK(std::exp(lp[i]) == doctest::Approx(p[i]).epsilon(1e-10));
}

TEST_CASE("log_sum_exp agrees with the naive sum and survives large inputs") {
  std::vector<double> v{-1.0, 2.0, 0.25};
  double naive = std::log(std::exp(-1.0) + std::exp(2.0) + std::exp(0.25));
  CHECK(log_sum_exp(v) == doctest::Approx(naive).epsilon(1e-12));

  std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("softplus is positive, increasing and asymptotically linear") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(-745.0) > 0.0);
  CHECK(softplus(40.0) == doctest::Approx(40.0).epsilon(1e-12));
  double prev = softplus(-10.0);
  for (double x = -9.5; x < 10.0; x += 0.5) {
    const double cur = softplus(x);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("sigmoid is symmetric and bounded") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid(3.0) + sigmoid(-3.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sigmoid(800.0) <= 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
}

TEST_CASE("first adam step matches the closed form") {
  AdamState st(1, 0.1);
  std::vector<double> p{0.0};
  std::vector<double> g{1.0};
  adam_step(p, g, st);
  // mhat = 1, vhat = 1 after bias correction, so the step is lr/(1+eps)
  CHECK(p[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("adam step size is invariant to gradient scale") {
  AdamState s1(1, 0.05), s2(1, 0.05);
  std::vector<double> a{0.0}, b{0.0};
  std::vector<double> ga{1.0}, gb{1e4};
  adam_step(a, ga, s1);
  adam_step(b, gb, s2);
  CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-6));
}

TEST_CASE("multi-block adam equals the concatenated single block") {
  SeededRng rng(9);
  std::vector<double> p1(5), p2(3), g1(5), g2(3);
  for (auto& x : p1) x = rng.normal();
  for (auto& x : p2) x = rng.normal();
  for (auto& x : g1) x = rng.normal();
  for (auto& x : g2) x = rng.normal();

  std::vector<double> pcat(p1), gcat(g1);
  pcat.insert(pcat.end(), p2.begin(), p2.end());
  gcat.insert(gcat.end(), g2.begin(), g2.end());

  AdamState sa(8, 0.01), sb(8, 0.01);
  std::vector<std::span<double>> ps{p1, p2};
  std::vector<std::span<const double>> gs{g1, g2};
  adam_step(ps, gs, sa);
  adam_step(pcat, gcat, sb);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(p1[i] == doctest::Approx(pcat[i]).epsilon(1e-15));
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(p2[i] == doctest::Approx(pcat[5 + i]).epsilon(1e-15));
}

namespace {

double mlp_scalar(const Mlp& net, const std::vector<double>& x) {
  std::vector<double> out = mlp_forward(net, x);
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += (i + 1.0) * out[i];
  return s;
}

}  // namespace

TEST_CASE("mlp backward matches central finite differences") {
  SeededRng rng(21);
  const std::vector<std::size_t> dims{4, 7, 5, 3};
  Mlp net = make_mlp(dims, Activation::Tanh, Activation::Identity, rng);
  std::vector<double> x{0.3, -1.2, 0.8, 0.05};

  GradientTape tape;
  tape.bind(net);
  std::vector<double> out = mlp_forward(net, x, tape);
  std::vector<double> upstream(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) upstream[i] = i + 1.0;
  std::vector<double> xgrad = mlp_backward(net, tape, upstream);

  const double h = 1e-6;
  std::size_t li = 0;
  for (auto& layer : net.layers) {
    for (std::size_t i = 0; i < layer.w.size(); ++i) {
      const double keep = layer.w[i];
      layer.w[i] = keep + h;
      const double up = mlp_scalar(net, x);
      layer.w[i] = keep - h;
      const double dn = mlp_scalar(net, x);
      layer.w[i] = keep;
      const double fd = (up - dn) / (2 * h);
      CHECK(tape.grads[li].w[i] ==
            doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
    for (std::size_t i = 0; i < layer.b.size(); ++i) {
      const double keep = layer.b[i];
      layer.b[i] = keep + h;
      const double up = mlp_scalar(net, x);
      layer.b[i] = keep - h;
      const double dn = mlp_scalar(net, x);
      layer.b[i] = keep;
      const double fd = (up - dn) / (2 * h);
      CHECK(tape.grads[li].b[i] ==
            doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
    ++li;
  }

  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> xp(x), xm(x);
    xp[i] += h;
    xm[i] -= h;
    const double fd = (mlp_scalar(net, xp) - mlp_scalar(net, xm)) / (2 * h);
    CHECK(xgrad[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("glorot init scales down with layer width") {
  SeededRng rng(4);
  Mlp narrow = make_mlp(std::vector<std::size_t>{2, 4, 1}, Activation::Tanh,
                        Activation::Identity, rng);
  SeededRng rng2(4);
  Mlp wide = make_mlp(std::vector<std::size_t>{200, 400, 1}, Activation::Tanh,
                      Activation::Identity, rng2);
  auto max_abs = [](const Mlp& m) {
    double v = 0;
    for (const auto& l : m.layers)
      for (double w : l.w) v = std::max(v, std::abs(w));
    return v;
  };
  CHECK(max_abs(wide) < max_abs(narrow));
  for (const auto& l : narrow.layers)
    for (double b : l.b) CHECK(b == 0.0);
}
