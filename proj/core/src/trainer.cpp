#include "cnsc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>

#include "cnsc/activations.hpp"
#include "cnsc/adam.hpp"
#include "cnsc/errors.hpp"
#include "cnsc/hash.hpp"

namespace cnsc {

std::uint64_t config_hash(const TrainConfig& c) {
  // threads and logging knobs change nothing computed, so stay out
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "epochs=%zu;batch=%zu;lr=%.17g;depth=%zu;width=%zu;latent=%zu;"
                "k=%zu;patience=%zu;warm=%zu;alrs=%.17g;seed=%llu;adjusted=%d",
                c.epochs, c.batch_size, c.learning_rate, c.depth, c.width,
                c.latent_dim, c.k, c.patience, c.warmup_epochs,
                c.assign_lr_scale, static_cast<unsigned long long>(c.seed),
                c.adjusted ? 1 : 0);
  return fnv1a64(buf);
}

std::vector<FoldSplit> make_folds(std::size_t n, std::size_t folds,
                                  std::uint64_t seed) {
  if (folds < 2) throw DomainError("make_folds: need at least 2 folds");
  if (n < folds * 2) throw DegenerateDataError("make_folds: too few samples");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  SeededRng rng(seed);
  rng.shuffle(idx);

  std::vector<FoldSplit> out(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds;
    const std::size_t hi = (f + 1) * n / folds;
    FoldSplit& s = out[f];
    s.test.assign(idx.begin() + lo, idx.begin() + hi);
    std::vector<std::size_t> dev;
    dev.reserve(n - (hi - lo));
    dev.insert(dev.end(), idx.begin(), idx.begin() + lo);
    dev.insert(dev.end(), idx.begin() + hi, idx.end());
    if (dev.size() < 3)
      throw DegenerateDataError("make_folds: development set too small");
    const std::size_t nstop = std::max<std::size_t>(1, dev.size() / 10);
    const std::size_t nsel = std::max<std::size_t>(1, dev.size() / 10);
    const std::size_t ntrain = dev.size() - nstop - nsel;
    s.train.assign(dev.begin(), dev.begin() + ntrain);
    s.stop.assign(dev.begin() + ntrain, dev.begin() + ntrain + nstop);
    s.select.assign(dev.begin() + ntrain + nstop, dev.end());
  }
  return out;
}

Normalizers compute_normalizers(std::span<const PatientRecord> records,
                                std::span<const std::size_t> idx) {
  std::vector<std::size_t> all;
  if (idx.empty()) {
    all.resize(records.size());
    std::iota(all.begin(), all.end(), 0);
    idx = all;
  }
  if (idx.empty()) throw DomainError("normalizers: empty index set");
  const std::size_t d = records[idx[0]].x.size();
  Normalizers norm;
  norm.mean.assign(d, 0.0);
  norm.stddev.assign(d, 0.0);
  double tmax = 0.0;
  for (std::size_t j : idx) {
    const PatientRecord& rec = records[j];
    if (rec.x.size() != d) throw ShapeError("normalizers: ragged covariates");
    for (std::size_t i = 0; i < d; ++i) norm.mean[i] += rec.x[i];
    tmax = std::max(tmax, rec.t);
  }
  const double n = static_cast<double>(idx.size());
  for (double& v : norm.mean) v /= n;
  for (std::size_t j : idx)
    for (std::size_t i = 0; i < d; ++i) {
      const double c = records[j].x[i] - norm.mean[i];
      norm.stddev[i] += c * c;
    }
  for (double& v : norm.stddev) {
    v = std::sqrt(v / n);
    if (v < 1e-12) v = 1.0;  // constant column: leave values centred only
  }
  norm.time_scale = tmax > 0.0 ? tmax : 1.0;
  return norm;
}

namespace {

// adam runs over spans that alias the live parameter/grad vectors
struct Blocks {
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> grads;

  void add(std::vector<double>& p, const std::vector<double>& g) {
    params.emplace_back(p);
    grads.emplace_back(g);
  }
  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& p : params) t += p.size();
    return t;
  }
};

Blocks bind_net(Mlp& net, std::vector<LayerGrad>& grad) {
  Blocks b;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    b.add(net.layers[l].w, grad[l].w);
    b.add(net.layers[l].b, grad[l].b);
  }
  return b;
}

void log_line(bool verbose, const char* fmt, ...) {
  if (!verbose) return;
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  va_end(args);
  std::fputc('\n', stderr);
}

bool g_verbose = false;

}  // namespace

void set_training_log(bool on) { g_verbose = on; }

Mlp train_propensity(std::span<const PatientRecord> records,
                     const Normalizers& norm,
                     std::span<const std::size_t> train,
                     std::span<const std::size_t> stop,
                     const TrainConfig& cfg, double* best_ce_out) {
  if (train.empty() || stop.empty())
    throw DegenerateDataError("propensity training: empty split");
  std::size_t treated = 0;
  for (std::size_t j : train) treated += records[j].a == 1 ? 1 : 0;
  if (treated == 0 || treated == train.size())
    throw DegenerateDataError(
        "propensity training: single treatment class in training split");

  const std::size_t d = records[train[0]].x.size();
  SeededRng master(cfg.seed);
  SeededRng init_rng = master.derive(40);
  SeededRng shuffle_rng = master.derive(41);

  std::vector<std::size_t> dims;
  dims.push_back(d);
  for (std::size_t i = 0; i < cfg.depth; ++i) dims.push_back(cfg.width);
  dims.push_back(1);
  Mlp net = make_mlp(dims, Activation::Tanh, Activation::Identity, init_rng);

  std::vector<LayerGrad> grad = make_grad_buffers(net);
  Blocks blocks = bind_net(net, grad);
  AdamState adam(blocks.total(), cfg.learning_rate);

  std::vector<std::size_t> order(train.begin(), train.end());
  Mlp best = net;
  double best_ce = propensity_ce(net, norm, records, stop);
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      propensity_ce_grad(net, norm, records,
                         {order.data() + lo, hi - lo}, grad);
      adam_step(blocks.params, blocks.grads, adam);
    }
    const double ce = propensity_ce(net, norm, records, stop);
    if (ce < best_ce) {
      best_ce = ce;
      best = net;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  if (best_ce_out != nullptr) *best_ce_out = best_ce;
  return best;
}

namespace {

std::vector<double> stage2_weights(const CnscModel& m,
                                   std::span<const PatientRecord> records,
                                   const FoldSplit& split, bool adjusted) {
  std::vector<double> w(records.size(), 1.0);
  if (!adjusted) return w;
  std::vector<std::size_t> used(split.train.begin(), split.train.end());
  used.insert(used.end(), split.stop.begin(), split.stop.end());
  std::vector<double> props(used.size());
  std::vector<int> arms(used.size());
  for (std::size_t i = 0; i < used.size(); ++i) {
    props[i] = propensity(m, records[used[i]].x);
    arms[i] = records[used[i]].a;
  }
  const std::vector<double> ww = ipw_weights(props, arms);
  for (std::size_t i = 0; i < used.size(); ++i) w[used[i]] = ww[i];
  return w;
}

}  // namespace

FitResult train_model(std::span<const PatientRecord> records, const Mlp& w_net,
                      const Normalizers& norm, const FoldSplit& split,
                      const TrainConfig& cfg) {
  if (split.train.empty() || split.stop.empty())
    throw DegenerateDataError("training: empty split");
  const auto t_start = std::chrono::steady_clock::now();
  const std::size_t d = records[split.train[0]].x.size();

  SeededRng master(cfg.seed);
  SeededRng init_rng = master.derive(10);
  SeededRng shuffle_rng = master.derive(11);

  CnscModel model =
      make_model(d, cfg.k, cfg.latent_dim, cfg.depth, cfg.width, init_rng);
  model.propensity_net = w_net;
  model.norm = norm;
  model.config_hash = config_hash(cfg);

  const std::vector<double> weights =
      stage2_weights(model, records, split, cfg.adjusted);

  ModelGrad grad = make_model_grad(model);
  Blocks assign_blocks = bind_net(model.assign_net, grad.assign);
  Blocks hazard_blocks = bind_net(model.hazard_net.raw, grad.hazard);
  hazard_blocks.add(model.latents, grad.latents);
  AdamState assign_adam(assign_blocks.total(),
                        cfg.learning_rate * cfg.assign_lr_scale);
  AdamState hazard_adam(hazard_blocks.total(), cfg.learning_rate);

  TrainReport report;
  report.config = cfg;

  std::vector<std::size_t> order(split.train.begin(), split.train.end());
  CnscModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    std::size_t batch_id = 0;
    const bool warm = epoch < cfg.warmup_epochs;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      try {
        weighted_nll_grad(model, records, weights,
                          {order.data() + lo, hi - lo}, grad, cfg.threads);
        adam_step(hazard_blocks.params, hazard_blocks.grads, hazard_adam);
        if (!warm)
          adam_step(assign_blocks.params, assign_blocks.grads, assign_adam);
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_id) + ": " + e.what());
      }
      ++batch_id;
    }
    const double val =
        weighted_nll(model, records, weights, split.stop, cfg.threads);
    report.val_trace.push_back(val);
    if (val < best_val) {
      best_val = val;
      best = model;
      report.best_epoch = epoch;
      stale = 0;
    } else if (!warm) {
      // the clock towards the patience cut only runs once every
      // parameter group is live
      ++stale;
    }
    log_line(g_verbose, "epoch %zu val %.6f best %.6f (stale %zu)", epoch, val,
             best_val, stale);
    if (stale >= cfg.patience) break;
  }
  model = std::move(best);
  report.best_val = best_val;
  report.test_nll = split.test.empty()
                        ? std::numeric_limits<double>::quiet_NaN()
                        : factual_nll(model, records, split.test, cfg.threads);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return {std::move(model), std::move(report)};
}

FitResult fit_cnsc(std::span<const PatientRecord> records,
                   const FoldSplit& split, const TrainConfig& cfg) {
  const Normalizers norm = compute_normalizers(records, split.train);
  double w_ce = 0.0;
  const Mlp w_net =
      train_propensity(records, norm, split.train, split.stop, cfg, &w_ce);
  FitResult fit = train_model(records, w_net, norm, split, cfg);
  fit.report.propensity_val_ce = w_ce;
  return fit;
}

TrainConfig SearchGrid::at(std::size_t i, const TrainConfig& base) const {
  if (depths.empty() || latent_dims.empty() || learning_rates.empty() ||
      batch_sizes.empty())
    throw DomainError("search grid: empty axis");
  TrainConfig c = base;
  c.depth = depths[i % depths.size()];
  i /= depths.size();
  c.latent_dim = latent_dims[i % latent_dims.size()];
  i /= latent_dims.size();
  c.learning_rate = learning_rates[i % learning_rates.size()];
  i /= learning_rates.size();
  c.batch_size = batch_sizes[i % batch_sizes.size()];
  return c;
}

GridSearchResult random_grid_search(std::span<const PatientRecord> records,
                                    const FoldSplit& split,
                                    const SearchGrid& grid,
                                    const TrainConfig& base,
                                    std::size_t n_iter, std::uint64_t seed) {
  if (n_iter == 0) throw DomainError("grid search: n_iter must be >= 1");
  const std::size_t total = grid.size();
  std::vector<std::size_t> combos(total);
  std::iota(combos.begin(), combos.end(), 0);
  SeededRng master(seed);
  master.shuffle(combos);
  const std::size_t m = std::min(n_iter, total);  // without replacement

  GridSearchResult res;
  res.select_nll.reserve(m);
  bool have_best = false;
  for (std::size_t c = 0; c < m; ++c) {
    TrainConfig cfg = grid.at(combos[c], base);
    cfg.seed = master.derive(c).seed();
    log_line(g_verbose,
             "candidate %zu/%zu: depth=%zu latent=%zu lr=%g batch=%zu", c + 1,
             m, cfg.depth, cfg.latent_dim, cfg.learning_rate, cfg.batch_size);
    FitResult fit = fit_cnsc(records, split, cfg);
    const double sel =
        factual_nll(fit.model, records, split.select, cfg.threads);
    res.candidates.push_back(cfg);
    res.select_nll.push_back(sel);
    if (!have_best || sel < res.select_nll[res.best]) {
      res.best = c;
      res.fit = std::move(fit);
      have_best = true;
    }
  }
  return res;
}

std::vector<KSweepEntry> sweep_k(std::span<const PatientRecord> records,
                                 std::size_t k_lo, std::size_t k_hi,
                                 std::size_t folds, const TrainConfig& base,
                                 bool tune, const SearchGrid& grid,
                                 std::size_t n_iter) {
  if (k_lo == 0 || k_hi < k_lo) throw DomainError("sweep_k: bad K range");
  const std::vector<FoldSplit> splits =
      make_folds(records.size(), folds, base.seed);
  SeededRng master(base.seed);

  std::vector<KSweepEntry> out;
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    KSweepEntry entry;
    entry.k = k;
    for (std::size_t f = 0; f < splits.size(); ++f) {
      TrainConfig cfg = base;
      cfg.k = k;
      const std::uint64_t cell_seed = master.derive(k * 100 + f).seed();
      double nll;
      if (tune) {
        GridSearchResult res =
            random_grid_search(records, splits[f], grid, cfg, n_iter, cell_seed);
        nll = res.fit.report.test_nll;
      } else {
        cfg.seed = cell_seed;
        nll = fit_cnsc(records, splits[f], cfg).report.test_nll;
      }
      entry.fold_nll.push_back(nll);
      log_line(g_verbose, "K=%zu fold %zu test NLL %.6f", k, f, nll);
    }
    double mean = 0.0;
    for (double v : entry.fold_nll) mean += v;
    mean /= static_cast<double>(entry.fold_nll.size());
    double var = 0.0;
    for (double v : entry.fold_nll) var += (v - mean) * (v - mean);
    entry.mean_nll = mean;
    entry.std_nll = entry.fold_nll.size() > 1
                        ? std::sqrt(var / static_cast<double>(
                                              entry.fold_nll.size() - 1))
                        : 0.0;
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace cnsc
