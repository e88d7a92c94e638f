#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "cnsc/data.hpp"
#include "cnsc/errors.hpp"
#include "cnsc/objective.hpp"
#include "cnsc/trainer.hpp"

using namespace cnsc;

namespace {

std::vector<PatientRecord> tiny_cohort(std::size_t n, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.n = n;
  cfg.k = 3;
  cfg.scenario = Scenario::Observational;
  cfg.seed = seed;
  return generate(cfg).first.records;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 100;
  cfg.depth = 1;
  cfg.width = 12;
  cfg.latent_dim = 6;
  cfg.k = 3;
  cfg.patience = 12;
  cfg.warmup_epochs = 4;  // short enough that every block trains
  cfg.assign_lr_scale = 0.5;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("fold splits partition the data without leakage") {
  const auto folds = make_folds(103, 5, 9);
  REQUIRE(folds.size() == 5);
  std::vector<int> test_seen(103, 0);
  for (const auto& f : folds) {
    std::set<std::size_t> fold_all;
    for (auto part : {&f.train, &f.stop, &f.select, &f.test}) {
      for (std::size_t i : *part) {
        REQUIRE(i < 103);
        CHECK(fold_all.insert(i).second);  // no index in two roles
      }
    }
    CHECK(fold_all.size() == 103);  // every index plays exactly one role
    for (std::size_t i : f.test) test_seen[i] += 1;
    CHECK(f.train.size() >= f.stop.size());
    CHECK(!f.stop.empty());
    CHECK(!f.select.empty());
  }
  // test folds tile the data: each index held out exactly once
  for (int c : test_seen) CHECK(c == 1);

  CHECK_THROWS_AS(make_folds(10, 1, 0), DomainError);
  CHECK_THROWS_AS(make_folds(5, 4, 0), DegenerateDataError);
}

TEST_CASE("fold splitting is seed-deterministic") {
  const auto a = make_folds(50, 3, 7);
  const auto b = make_folds(50, 3, 7);
  const auto c = make_folds(50, 3, 8);
  CHECK(a[0].test == b[0].test);
  CHECK(a[1].train == b[1].train);
  CHECK(a[0].test != c[0].test);
}

TEST_CASE("config hash separates configs and ignores nothing it should") {
  TrainConfig a = tiny_config();
  TrainConfig b = a;
  CHECK(config_hash(a) == config_hash(b));
  b.learning_rate *= 2;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.k += 1;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.seed += 1;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.adjusted = !b.adjusted;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.warmup_epochs += 1;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.assign_lr_scale *= 2;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("normalizers use the training rows only") {
  std::vector<PatientRecord> recs(4);
  for (auto& r : recs) r.x.assign(2, 0.0);
  recs[0].x = {1.0, 10.0};
  recs[1].x = {3.0, 10.0};
  recs[2].x = {100.0, -50.0};
  recs[3].x = {-100.0, 50.0};
  recs[0].t = 2.0;
  recs[1].t = 8.0;
  recs[2].t = 100.0;
  recs[3].t = 0.5;
  const std::vector<std::size_t> train{0, 1};
  const Normalizers norm = compute_normalizers(recs, train);
  CHECK(norm.mean[0] == doctest::Approx(2.0));
  CHECK(norm.mean[1] == doctest::Approx(10.0));
  CHECK(norm.stddev[0] == doctest::Approx(1.0));
  CHECK(norm.stddev[1] == doctest::Approx(1.0));  // constant column stays 1
  CHECK(norm.time_scale == doctest::Approx(8.0));  // max t among train rows
}

TEST_CASE("propensity stage learns something and is deterministic") {
  const auto recs = tiny_cohort(600, 13);
  std::vector<std::size_t> train, stop;
  for (std::size_t i = 0; i < 500; ++i) train.push_back(i);
  for (std::size_t i = 500; i < 600; ++i) stop.push_back(i);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 40;
  const Normalizers norm = compute_normalizers(recs, train);

  double ce1 = 0, ce2 = 0;
  const Mlp w1 = train_propensity(recs, norm, train, stop, cfg, &ce1);
  const Mlp w2 = train_propensity(recs, norm, train, stop, cfg, &ce2);
  CHECK(ce1 == ce2);
  for (std::size_t li = 0; li < w1.layers.size(); ++li)
    for (std::size_t i = 0; i < w1.layers[li].w.size(); ++i)
      CHECK(w1.layers[li].w[i] == w2.layers[li].w[i]);
  CHECK(ce1 < std::log(2.0));  // beats the coin-flip baseline on held-out rows

  // single-class data cannot train a classifier
  auto degenerate = recs;
  for (auto& r : degenerate) r.a = 1;
  CHECK_THROWS_AS(train_propensity(degenerate, norm, train, stop, cfg, &ce1),
                  DegenerateDataError);
}

TEST_CASE("training runs deterministically and early stopping restores best") {
  const auto recs = tiny_cohort(400, 19);
  auto folds = make_folds(recs.size(), 4, 21);
  TrainConfig cfg = tiny_config();

  const FitResult f1 = fit_cnsc(recs, folds[0], cfg);
  const FitResult f2 = fit_cnsc(recs, folds[0], cfg);
  CHECK(f1.report.best_val == f2.report.best_val);
  CHECK(f1.report.val_trace == f2.report.val_trace);
  for (std::size_t i = 0; i < f1.model.latents.size(); ++i)
    CHECK(f1.model.latents[i] == f2.model.latents[i]);

  REQUIRE(!f1.report.val_trace.empty());
  CHECK(f1.report.val_trace.size() <= cfg.epochs);
  const double min_val =
      *std::min_element(f1.report.val_trace.begin(), f1.report.val_trace.end());
  CHECK(f1.report.best_val == doctest::Approx(min_val));
  CHECK(f1.report.val_trace[f1.report.best_epoch] ==
        doctest::Approx(f1.report.best_val));
  CHECK(std::isfinite(f1.report.test_nll));

  CHECK(f1.report.best_val <= f1.report.val_trace.back() + 1e-12);
}

TEST_CASE("stage one weights are frozen during stage two") {
  const auto recs = tiny_cohort(400, 23);
  auto folds = make_folds(recs.size(), 4, 25);
  TrainConfig cfg = tiny_config();
  const Normalizers norm = compute_normalizers(recs, folds[0].train);
  const Mlp w_net =
      train_propensity(recs, norm, folds[0].train, folds[0].stop, cfg);
  const FitResult fit = train_model(recs, w_net, norm, folds[0], cfg);
  REQUIRE(fit.model.propensity_net.layers.size() == w_net.layers.size());
  for (std::size_t li = 0; li < w_net.layers.size(); ++li)
    for (std::size_t i = 0; i < w_net.layers[li].w.size(); ++i)
      CHECK(fit.model.propensity_net.layers[li].w[i] == w_net.layers[li].w[i]);
}

TEST_CASE("assignment net stays at its initial weights through the warmup") {
  const auto recs = tiny_cohort(400, 37);
  auto folds = make_folds(recs.size(), 4, 39);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 6;
  cfg.warmup_epochs = 100;  // never leaves warmup
  const FitResult fit = fit_cnsc(recs, folds[0], cfg);

  SeededRng master(cfg.seed);
  SeededRng init_rng = master.derive(10);
  const CnscModel fresh = make_model(recs[0].x.size(), cfg.k, cfg.latent_dim,
                                     cfg.depth, cfg.width, init_rng);
  REQUIRE(fit.model.assign_net.layers.size() == fresh.assign_net.layers.size());
  for (std::size_t li = 0; li < fresh.assign_net.layers.size(); ++li)
    for (std::size_t i = 0; i < fresh.assign_net.layers[li].w.size(); ++i)
      CHECK(fit.model.assign_net.layers[li].w[i] ==
            fresh.assign_net.layers[li].w[i]);

  // the hazard side trained meanwhile
  bool hazard_moved = false;
  const auto& hl = fit.model.hazard_net.raw.layers.front().w;
  const auto& fl = fresh.hazard_net.raw.layers.front().w;
  for (std::size_t i = 0; i < hl.size() && !hazard_moved; ++i)
    hazard_moved = hl[i] != fl[i];
  CHECK(hazard_moved);

  // once past the warmup the assignment net moves too
  cfg.warmup_epochs = 2;
  const FitResult post = fit_cnsc(recs, folds[0], cfg);
  bool assign_moved = false;
  const auto& pl = post.model.assign_net.layers.front().w;
  for (std::size_t i = 0; i < pl.size() && !assign_moved; ++i)
    assign_moved = pl[i] != fresh.assign_net.layers.front().w[i];
  CHECK(assign_moved);
}

TEST_CASE("patience clock holds during warmup") {
  const auto recs = tiny_cohort(300, 41);
  auto folds = make_folds(recs.size(), 4, 43);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 10;
  cfg.warmup_epochs = 10;
  cfg.patience = 1;  // would cut immediately if the clock ran during warmup
  const FitResult fit = fit_cnsc(recs, folds[0], cfg);
  CHECK(fit.report.val_trace.size() == 10);
}

TEST_CASE("unadjusted training differs from adjusted on skewed cohorts") {
  const auto recs = tiny_cohort(400, 29);
  auto folds = make_folds(recs.size(), 4, 31);
  TrainConfig cfg = tiny_config();
  cfg.adjusted = true;
  const FitResult adj = fit_cnsc(recs, folds[0], cfg);
  cfg.adjusted = false;
  const FitResult unadj = fit_cnsc(recs, folds[0], cfg);
  bool any_diff = false;
  for (std::size_t i = 0; i < adj.model.latents.size() && !any_diff; ++i)
    any_diff = adj.model.latents[i] != unadj.model.latents[i];
  CHECK(any_diff);
}

TEST_CASE("search grid decodes every combination exactly once") {
  SearchGrid grid;
  const TrainConfig base = tiny_config();
  std::set<std::array<double, 4>> seen;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const TrainConfig c = grid.at(i, base);
    seen.insert({double(c.depth), double(c.latent_dim), c.learning_rate,
                 double(c.batch_size)});
    CHECK(std::find(grid.depths.begin(), grid.depths.end(), c.depth) !=
          grid.depths.end());
    CHECK(std::find(grid.latent_dims.begin(), grid.latent_dims.end(),
                    c.latent_dim) != grid.latent_dims.end());
    // untouched fields come from the base config
    CHECK(c.epochs == base.epochs);
    CHECK(c.k == base.k);
    CHECK(c.seed == base.seed);
  }
  CHECK(seen.size() == grid.size());
  CHECK(grid.size() ==
        grid.depths.size() * grid.latent_dims.size() *
            grid.learning_rates.size() * grid.batch_sizes.size());
}

TEST_CASE("random search returns the candidate with the best selection loss") {
  const auto recs = tiny_cohort(400, 37);
  auto folds = make_folds(recs.size(), 4, 39);
  TrainConfig base = tiny_config();
  base.epochs = 6;
  SearchGrid grid;
  grid.depths = {1};
  grid.latent_dims = {4, 8};
  grid.learning_rates = {1e-2, 1e-3};
  grid.batch_sizes = {100};
  const GridSearchResult res =
      random_grid_search(recs, folds[0], grid, base, 3, 99);
  REQUIRE(res.candidates.size() == 3);
  REQUIRE(res.select_nll.size() == 3);
  const double best =
      *std::min_element(res.select_nll.begin(), res.select_nll.end());
  CHECK(res.select_nll[res.best] == doctest::Approx(best));
  CHECK(res.fit.report.config.latent_dim == res.candidates[res.best].latent_dim);
  // candidates are distinct grid cells
  std::set<std::pair<double, double>> combos;
  for (const auto& c : res.candidates)
    combos.insert({double(c.latent_dim), c.learning_rate});
  CHECK(combos.size() == 3);
}

TEST_CASE("k sweep produces one entry per k with finite statistics") {
  const auto recs = tiny_cohort(420, 41);
  TrainConfig base = tiny_config();
  base.epochs = 5;
  base.batch_size = 128;
  const auto entries = sweep_k(recs, 1, 3, 3, base, false, SearchGrid{}, 0);
  REQUIRE(entries.size() == 3);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    CHECK(entries[i].k == i + 1);
    CHECK(entries[i].fold_nll.size() == 3);
    CHECK(std::isfinite(entries[i].mean_nll));
    CHECK(std::isfinite(entries[i].std_nll));
    CHECK(entries[i].std_nll >= 0.0);
    double mean = 0;
    for (double v : entries[i].fold_nll) mean += v;
    mean /= 3.0;
    CHECK(entries[i].mean_nll == doctest::Approx(mean));
  }
}
