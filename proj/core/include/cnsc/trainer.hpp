#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cnsc/model.hpp"
#include "cnsc/objective.hpp"
#include "cnsc/record.hpp"

namespace cnsc {

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 250;
  double learning_rate = 1e-3;
  std::size_t depth = 2;
  std::size_t width = 50;
  std::size_t latent_dim = 25;
  std::size_t k = 3;
  std::size_t patience = 10;  // validation rounds without improvement
  // Joint training collapses the mixture onto one subgroup before the hazard
  // curves separate. Freezing the assignment net for the first epochs and
  // then updating it on a slower clock keeps the subgroups apart.
  std::size_t warmup_epochs = 80;   // assignment net frozen before this
  double assign_lr_scale = 0.05;    // assignment lr = learning_rate * this
  std::uint64_t seed = 0;
  bool adjusted = true;  // truncated IPW weights; false = unit weights
  int threads = 1;
};

/// Stable hash of every field that changes what a run computes (threads and
/// similar execution knobs excluded). Stored in checkpoints.
std::uint64_t config_hash(const TrainConfig& c);

/// Progress lines on stderr from training loops (off by default).
void set_training_log(bool on);

/// One cross-validation fold: the held-out test fold plus the development
/// split into train / early-stop / model-selection indices.
struct FoldSplit {
  std::vector<std::size_t> train, stop, select, test;
};

/// 5-fold style splitting: shuffles 0..n-1, carves `folds` test folds, and
/// splits each development set 80/10/10 in shuffled order.
std::vector<FoldSplit> make_folds(std::size_t n, std::size_t folds,
                                  std::uint64_t seed);

struct TrainReport {
  TrainConfig config;
  std::vector<double> val_trace;  // early-stop split loss per epoch
  std::size_t best_epoch = 0;     // index into val_trace
  double best_val = 0.0;
  double test_nll = 0.0;  // unweighted factual NLL on the test fold
  double propensity_val_ce = 0.0;
  double wall_seconds = 0.0;
};

/// Mean/std per covariate and max observed time, from the training indices.
/// Near-constant columns keep std 1 so z-scoring stays finite.
Normalizers compute_normalizers(std::span<const PatientRecord> records,
                                std::span<const std::size_t> idx);

/// Stage 1: fit the propensity net by cross-entropy with early stopping on
/// the `stop` split. Throws DegenerateDataError when the training split has
/// a single treatment class.
Mlp train_propensity(std::span<const PatientRecord> records,
                     const Normalizers& norm,
                     std::span<const std::size_t> train,
                     std::span<const std::size_t> stop,
                     const TrainConfig& cfg, double* best_ce = nullptr);

struct FitResult {
  CnscModel model;
  TrainReport report;
};

/// Stage 2: train assignment net, hazard net, and latents by Adam on the
/// weighted likelihood, with per-epoch early stopping and restore-best.
/// The propensity net inside `w_net` is copied and never mutated.
FitResult train_model(std::span<const PatientRecord> records, const Mlp& w_net,
                      const Normalizers& norm, const FoldSplit& split,
                      const TrainConfig& cfg);

/// Both stages back to back on one split.
FitResult fit_cnsc(std::span<const PatientRecord> records,
                   const FoldSplit& split, const TrainConfig& cfg);

/// Hyperparameter grid; width stays fixed at 50.
struct SearchGrid {
  std::vector<std::size_t> depths{1, 2, 3};
  std::vector<std::size_t> latent_dims{25, 50, 100};
  std::vector<double> learning_rates{1e-3, 1e-4};
  std::vector<std::size_t> batch_sizes{250, 500};

  std::size_t size() const {
    return depths.size() * latent_dims.size() * learning_rates.size() *
           batch_sizes.size();
  }
  TrainConfig at(std::size_t i, const TrainConfig& base) const;
};

struct GridSearchResult {
  std::vector<TrainConfig> candidates;
  std::vector<double> select_nll;  // factual NLL on the selection split
  std::size_t best = 0;
  FitResult fit;  // the winning run, not retrained
};

/// Samples `n_iter` configs uniformly (without replacement when the grid is
/// large enough), trains each, and keeps the best selection-split NLL.
GridSearchResult random_grid_search(std::span<const PatientRecord> records,
                                    const FoldSplit& split,
                                    const SearchGrid& grid,
                                    const TrainConfig& base,
                                    std::size_t n_iter, std::uint64_t seed);

struct KSweepEntry {
  std::size_t k = 0;
  std::vector<double> fold_nll;  // test NLL per fold
  double mean_nll = 0.0;
  double std_nll = 0.0;
};

/// Cross-validated test NLL per subgroup count. With `tune` set, each
/// (K, fold) cell runs its own random grid search; otherwise the base config
/// is used as-is (faster, same protocol otherwise).
std::vector<KSweepEntry> sweep_k(std::span<const PatientRecord> records,
                                 std::size_t k_lo, std::size_t k_hi,
                                 std::size_t folds, const TrainConfig& base,
                                 bool tune, const SearchGrid& grid,
                                 std::size_t n_iter);

}  // namespace cnsc
