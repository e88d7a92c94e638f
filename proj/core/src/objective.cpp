#include "cnsc/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

#include "cnsc/activations.hpp"
#include "cnsc/errors.hpp"

namespace cnsc {

std::vector<double> ipw_weights(std::span<const double> propensities,
                                std::span<const int> treatments) {
  if (propensities.size() != treatments.size())
    throw ShapeError("ipw_weights: length mismatch");
  std::vector<double> w(propensities.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double p = propensities[i];
    if (!(p > 0.0 && p < 1.0))
      throw DomainError("ipw_weights: propensity outside (0,1) at sample " +
                        std::to_string(i));
    const int a = treatments[i];
    if (a != 0 && a != 1)
      throw DomainError("ipw_weights: treatment must be 0 or 1 at sample " +
                        std::to_string(i));
    const double e = std::clamp(p, 0.05, 0.95);
    w[i] = 1.0 / (a == 1 ? e : 1.0 - e);
  }
  return w;
}

ModelGrad make_model_grad(const CnscModel& m) {
  ModelGrad g;
  g.assign = make_grad_buffers(m.assign_net);
  g.hazard = make_grad_buffers(m.hazard_net.raw);
  g.latents.assign(m.latents.size(), 0.0);
  return g;
}

void zero_model_grad(ModelGrad& g) {
  zero_grads(g.assign);
  zero_grads(g.hazard);
  std::fill(g.latents.begin(), g.latents.end(), 0.0);
}

namespace {

constexpr std::size_t kChunks = 16;  // fixed reduction tree: results are
                                     // bit-identical for any thread count

// shape signature for the reusable per-thread scratch
struct ModelShape {
  std::size_t k = 0, latent = 0, cov = 0, depth = 0, width = 0;
  bool operator==(const ModelShape&) const = default;
};

ModelShape shape_of(const CnscModel& m) {
  return {m.k, m.latent_dim, m.covariate_dim, m.hazard_net.raw.layers.size() - 1,
          m.hazard_net.raw.layers.front().out};
}

struct ChunkCtx {
  GradientTape tape;
  std::vector<LayerGrad> assign_acc;
  HazardBatch hb;
  std::vector<double> latent_acc;
  std::vector<double> xn, s, r, logp, mval, mdot, upstream;
  double loss = 0.0;

  explicit ChunkCtx(const CnscModel& m) : hb(m.hazard_net, m.k) {
    tape.bind(m.assign_net);
    assign_acc = make_grad_buffers(m.assign_net);
    latent_acc.assign(m.latents.size(), 0.0);
    xn.resize(m.covariate_dim);
    s.resize(m.k);
    r.resize(m.k);
    logp.resize(m.k);
    mval.resize(m.k);
    mdot.resize(m.k);
    upstream.resize(m.k);
  }

  void reset(const CnscModel& m) {
    zero_grads(assign_acc);
    std::fill(latent_acc.begin(), latent_acc.end(), 0.0);
    loss = 0.0;
    hb.begin_batch(m.hazard_net);
    for (std::size_t g = 0; g < m.k; ++g) hb.set_latent(g, m.latent(g));
  }
};

struct Scratch {
  ModelShape shape;
  std::vector<ChunkCtx> chunks;
};

Scratch& scratch_for(const CnscModel& m) {
  thread_local Scratch sc;
  const ModelShape want = shape_of(m);
  if (!(sc.shape == want) || sc.chunks.empty()) {
    sc.chunks.clear();
    sc.chunks.reserve(kChunks);
    for (std::size_t i = 0; i < kChunks; ++i) sc.chunks.emplace_back(m);
    sc.shape = want;
  }
  return sc;
}

void check_record(const PatientRecord& rec, std::size_t cov,
                  std::size_t sample) {
  if (rec.x.size() != cov)
    throw ShapeError("nll: covariate dim mismatch at sample " +
                     std::to_string(sample));
  if (!(rec.t >= 0.0) || !std::isfinite(rec.t))
    throw DomainError("nll: bad time at sample " + std::to_string(sample));
  if ((rec.d != 0 && rec.d != 1) || (rec.a != 0 && rec.a != 1))
    throw DomainError("nll: indicator not binary at sample " +
                      std::to_string(sample));
}

void process_chunk(const CnscModel& m, std::span<const PatientRecord> records,
                   std::span<const double> weights,
                   std::span<const std::size_t> idx, std::size_t lo,
                   std::size_t hi, bool with_grad, ChunkCtx& cx) {
  const double c = m.norm.time_scale;
  const double log_c = std::log(c);
  const std::size_t K = m.k;

  for (std::size_t j = lo; j < hi; ++j) {
    const std::size_t gi = idx[j];
    if (gi >= records.size())
      throw ShapeError("nll: index out of range: " + std::to_string(gi));
    const PatientRecord& rec = records[gi];
    check_record(rec, m.covariate_dim, gi);
    const double w = weights[gi];
    const bool event = rec.d == 1;

    for (std::size_t i = 0; i < cx.xn.size(); ++i)
      cx.xn[i] = (rec.x[i] - m.norm.mean[i]) / m.norm.stddev[i];
    const std::vector<double>& logits = mlp_forward(m.assign_net, cx.xn, cx.tape);

    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double se = 0.0;
    for (double v : logits) se += std::exp(v - mx);
    const double lse_logits = mx + std::log(se);
    for (std::size_t g = 0; g < K; ++g) cx.logp[g] = logits[g] - lse_logits;

    const double u = rec.t / c;
    for (std::size_t g = 0; g < K; ++g) {
      const DualValue dv = cx.hb.forward(g, u, rec.a, event);
      cx.mval[g] = dv.value;
      cx.mdot[g] = dv.dot;
      if (event) {
        const double lam = dv.value + u * dv.dot;
        cx.s[g] = lam > 0.0
                      ? cx.logp[g] + std::log(lam) - u * dv.value
                      : -std::numeric_limits<double>::infinity();
      } else {
        cx.s[g] = cx.logp[g] - u * dv.value;
      }
    }
    const double lse = log_sum_exp(cx.s);
    if (!std::isfinite(lse))
      throw NumericError("nll: non-finite likelihood at sample " +
                         std::to_string(gi));
    cx.loss += -w * (lse - (event ? log_c : 0.0));

    if (!with_grad) continue;

    for (std::size_t g = 0; g < K; ++g) cx.r[g] = std::exp(cx.s[g] - lse);
    for (std::size_t g = 0; g < K; ++g)
      cx.upstream[g] = -w * (cx.r[g] - std::exp(cx.logp[g]));
    detail::mlp_backward_accum(m.assign_net, cx.tape, cx.upstream,
                               cx.assign_acc, nullptr);

    for (std::size_t g = 0; g < K; ++g) {
      double gval, gdot;
      if (event) {
        const double ratio = std::exp(cx.logp[g] - u * cx.mval[g] - lse);
        gval = w * (u * cx.r[g] - ratio);
        gdot = -w * u * ratio;
      } else {
        gval = w * u * cx.r[g];
        gdot = 0.0;
      }
      cx.hb.backward(g, gval, gdot);
    }
  }
}

double nll_impl(const CnscModel& m, std::span<const PatientRecord> records,
                std::span<const double> weights,
                std::span<const std::size_t> idx, ModelGrad* grad,
                int threads) {
  if (records.empty()) throw DomainError("nll: empty record set");
  if (weights.size() != records.size())
    throw ShapeError("nll: weights must align with records");

  std::vector<std::size_t> all;
  if (idx.empty()) {
    all.resize(records.size());
    std::iota(all.begin(), all.end(), 0);
    idx = all;
  }
  const std::size_t n = idx.size();
  const bool with_grad = grad != nullptr;

  Scratch& sc = scratch_for(m);
  for (auto& cx : sc.chunks) cx.reset(m);

  auto run = [&](std::size_t ci) {
    const std::size_t lo = ci * n / kChunks;
    const std::size_t hi = (ci + 1) * n / kChunks;
    process_chunk(m, records, weights, idx, lo, hi, with_grad, sc.chunks[ci]);
  };

  const int T = std::max(1, std::min(threads, static_cast<int>(kChunks)));
  if (T == 1) {
    for (std::size_t ci = 0; ci < kChunks; ++ci) run(ci);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mx;
    for (int t = 0; t < T; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t ci = static_cast<std::size_t>(t); ci < kChunks;
               ci += static_cast<std::size_t>(T))
            run(ci);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mx);
          if (!err) err = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
  }

  // merge in fixed chunk order, then take the batch mean
  double loss = 0.0;
  for (const auto& cx : sc.chunks) loss += cx.loss;
  const double inv = 1.0 / static_cast<double>(n);
  loss *= inv;

  if (with_grad) {
    for (auto& cx : sc.chunks) {
      for (std::size_t l = 0; l < grad->assign.size(); ++l) {
        for (std::size_t i = 0; i < grad->assign[l].w.size(); ++i)
          grad->assign[l].w[i] += cx.assign_acc[l].w[i];
        for (std::size_t i = 0; i < grad->assign[l].b.size(); ++i)
          grad->assign[l].b[i] += cx.assign_acc[l].b[i];
      }
      for (std::size_t g = 0; g < m.k; ++g)
        cx.hb.end_group(g, m.latent(g),
                        {cx.latent_acc.data() + g * m.latent_dim, m.latent_dim});
      cx.hb.finalize(m.hazard_net, grad->hazard);
      for (std::size_t i = 0; i < grad->latents.size(); ++i)
        grad->latents[i] += cx.latent_acc[i];
    }
    for (auto& lg : grad->assign) {
      for (double& v : lg.w) v *= inv;
      for (double& v : lg.b) v *= inv;
    }
    for (auto& lg : grad->hazard) {
      for (double& v : lg.w) v *= inv;
      for (double& v : lg.b) v *= inv;
    }
    for (double& v : grad->latents) v *= inv;
  }
  return loss;
}

}  // namespace

double weighted_nll(const CnscModel& m, std::span<const PatientRecord> records,
                    std::span<const double> weights,
                    std::span<const std::size_t> idx, int threads) {
  return nll_impl(m, records, weights, idx, nullptr, threads);
}

double weighted_nll_grad(const CnscModel& m,
                         std::span<const PatientRecord> records,
                         std::span<const double> weights,
                         std::span<const std::size_t> idx, ModelGrad& grad,
                         int threads) {
  zero_model_grad(grad);
  return nll_impl(m, records, weights, idx, &grad, threads);
}

double factual_nll(const CnscModel& m, std::span<const PatientRecord> records,
                   std::span<const std::size_t> idx, int threads) {
  const std::vector<double> ones(records.size(), 1.0);
  return nll_impl(m, records, ones, idx, nullptr, threads);
}

double propensity_ce(const Mlp& w_net, const Normalizers& norm,
                     std::span<const PatientRecord> records,
                     std::span<const std::size_t> idx) {
  std::vector<std::size_t> all;
  if (idx.empty()) {
    all.resize(records.size());
    std::iota(all.begin(), all.end(), 0);
    idx = all;
  }
  if (idx.empty()) throw DomainError("propensity_ce: empty batch");
  double ce = 0.0;
  std::vector<double> xn(norm.mean.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const PatientRecord& rec = records[idx[j]];
    check_record(rec, norm.mean.size(), idx[j]);
    for (std::size_t i = 0; i < xn.size(); ++i)
      xn[i] = (rec.x[i] - norm.mean[i]) / norm.stddev[i];
    const std::vector<double> logit = mlp_forward(w_net, xn);
    double p = sigmoid(logit[0]);
    p = std::min(1.0 - 1e-12, std::max(1e-12, p));
    ce += rec.a == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return ce / static_cast<double>(idx.size());
}

double propensity_ce_grad(const Mlp& w_net, const Normalizers& norm,
                          std::span<const PatientRecord> records,
                          std::span<const std::size_t> idx,
                          std::vector<LayerGrad>& grad) {
  std::vector<std::size_t> all;
  if (idx.empty()) {
    all.resize(records.size());
    std::iota(all.begin(), all.end(), 0);
    idx = all;
  }
  if (idx.empty()) throw DomainError("propensity_ce: empty batch");
  zero_grads(grad);
  GradientTape tape;
  tape.bind(w_net);
  const double inv = 1.0 / static_cast<double>(idx.size());
  double ce = 0.0;
  std::vector<double> xn(norm.mean.size());
  double upstream[1];
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const PatientRecord& rec = records[idx[j]];
    check_record(rec, norm.mean.size(), idx[j]);
    for (std::size_t i = 0; i < xn.size(); ++i)
      xn[i] = (rec.x[i] - norm.mean[i]) / norm.stddev[i];
    const std::vector<double>& logit = mlp_forward(w_net, xn, tape);
    const double praw = sigmoid(logit[0]);
    const double p = std::min(1.0 - 1e-12, std::max(1e-12, praw));
    ce += rec.a == 1 ? -std::log(p) : -std::log(1.0 - p);
    // d(ce)/d(logit) for the unclipped sigmoid; exact and stable
    upstream[0] = (praw - static_cast<double>(rec.a)) * inv;
    detail::mlp_backward_accum(w_net, tape, upstream, grad, nullptr);
  }
  return ce * inv;
}

}  // namespace cnsc
