// cnsc command line: generate cohorts, train/tune mixture models, sweep K,
// evaluate against ground truth, and rank covariates by permutation
// importance.  Every command drops its artifacts plus a manifest with content
// hashes into --out, named {command}-{seed}-{confighash8}.{ext}.
#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cnsc/data.hpp"
#include "cnsc/errors.hpp"
#include "cnsc/eval.hpp"
#include "cnsc/hash.hpp"
#include "cnsc/io.hpp"
#include "cnsc/model.hpp"
#include "cnsc/rng.hpp"
#include "cnsc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso8601() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string file_hash(const std::string& path) {
  const std::string bytes = cnsc::read_text_file(path);
  return cnsc::hex16(cnsc::fnv1a64(bytes));
}

struct Artifact {
  std::string path;
};

json artifact_list(const std::vector<Artifact>& arts) {
  json a = json::array();
  for (const auto& art : arts)
    a.push_back({{"path", art.path}, {"hash", file_hash(art.path)}});
  return a;
}

void write_manifest(const std::string& out_dir, const std::string& base,
                    const std::string& command, std::uint64_t seed,
                    const std::string& config_path, const json& resolved,
                    const std::vector<Artifact>& inputs,
                    const std::vector<Artifact>& outputs) {
  json m;
  m["command"] = command;
  m["config_path"] = config_path.empty() ? json(nullptr) : json(config_path);
  m["config"] = resolved;
  m["seed"] = seed;
  m["inputs"] = artifact_list(inputs);
  m["outputs"] = artifact_list(outputs);
  m["timestamp"] = now_iso8601();
  cnsc::write_text_file(out_dir + "/" + base + ".manifest.json",
                        m.dump(2) + "\n");
}

// Values from --config files act as defaults; explicit flags win.  Unknown
// keys are an error so typos do not silently fall back to defaults.
class ConfigBinding {
 public:
  explicit ConfigBinding(CLI::App* cmd) : cmd_(cmd) {}

  template <typename T>
  void bind(const std::string& key, const std::string& flag, T* target) {
    entries_.push_back({key, flag, [target](const json& v) {
                          *target = v.get<T>();
                        }});
  }

  void apply(const std::string& config_path) const {
    if (config_path.empty()) return;
    json j;
    try {
      j = json::parse(cnsc::read_text_file(config_path));
    } catch (const json::exception& e) {
      throw cnsc::UserError("config " + config_path + ": " + e.what());
    }
    if (!j.is_object())
      throw cnsc::UserError("config " + config_path + ": expected an object");
    for (const auto& [key, value] : j.items()) {
      const auto it =
          std::find_if(entries_.begin(), entries_.end(),
                       [&](const Entry& e) { return e.key == key; });
      if (it == entries_.end())
        throw cnsc::UserError("config " + config_path + ": unknown key '" +
                              key + "'");
      if (cmd_->count(it->flag) == 0) {
        try {
          it->assign(value);
        } catch (const json::exception& e) {
          throw cnsc::UserError("config " + config_path + ": key '" + key +
                                "': " + e.what());
        }
      }
    }
  }

 private:
  struct Entry {
    std::string key, flag;
    std::function<void(const json&)> assign;
  };
  CLI::App* cmd_;
  std::vector<Entry> entries_;
};

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw cnsc::IoError("cannot create output dir " + out);
}

std::string hash8_of(const json& resolved) {
  return cnsc::hex8(cnsc::fnv1a64(resolved.dump()));
}

cnsc::TrainConfig base_train_config(std::size_t epochs, std::size_t batch,
                                    double lr, std::size_t depth,
                                    std::size_t width, std::size_t latent,
                                    std::size_t k, std::size_t patience,
                                    std::size_t warmup, double assign_scale,
                                    std::uint64_t seed, bool adjusted,
                                    std::size_t threads) {
  cnsc::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.learning_rate = lr;
  cfg.depth = depth;
  cfg.width = width;
  cfg.latent_dim = latent;
  cfg.k = k;
  cfg.patience = patience;
  cfg.warmup_epochs = warmup;
  cfg.assign_lr_scale = assign_scale;
  cfg.seed = seed;
  cfg.adjusted = adjusted;
  cfg.threads = threads;
  return cfg;
}

json train_config_json(const cnsc::TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},       {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"depth", cfg.depth},         {"width", cfg.width},
          {"latent_dim", cfg.latent_dim},
          {"k", cfg.k},                 {"patience", cfg.patience},
          {"warmup_epochs", cfg.warmup_epochs},
          {"assign_lr_scale", cfg.assign_lr_scale},
          {"seed", cfg.seed},           {"adjusted", cfg.adjusted}};
}

// 80/10/10 split of a bare cohort for the train command; no held-out test
// fold (that is what evaluate on a fresh cohort is for).
cnsc::FoldSplit self_split(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw cnsc::DegenerateDataError("need at least 10 rows to train");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  cnsc::SeededRng rng(cnsc::SeededRng(seed).derive(70).seed());
  rng.shuffle(idx);
  const std::size_t n_stop = std::max<std::size_t>(1, n / 10);
  const std::size_t n_sel = std::max<std::size_t>(1, n / 10);
  cnsc::FoldSplit split;
  split.stop.assign(idx.begin(), idx.begin() + n_stop);
  split.select.assign(idx.begin() + n_stop, idx.begin() + n_stop + n_sel);
  split.train.assign(idx.begin() + n_stop + n_sel, idx.end());
  return split;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"causal neural survival clustering pipeline"};
  app.require_subcommand(1);

  // ---- generate ----------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "sample a synthetic cohort");
  std::string gen_config, gen_scenario = "randomised", gen_out = ".";
  std::uint64_t gen_seed = 0;
  std::size_t gen_n = 30000, gen_k = 3;
  bool gen_labels = false;
  gen->add_option("--config", gen_config, "JSON config; flags override");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--scenario", gen_scenario, "randomised|observational");
  gen->add_option("--n", gen_n, "cohort size");
  gen->add_option("--k", gen_k, "number of latent subgroups");
  gen->add_flag("--emit-labels", gen_labels, "append true subgroup column z");
  gen->add_option("--out", gen_out, "output directory");
  ConfigBinding gen_bind(gen);
  gen_bind.bind("seed", "--seed", &gen_seed);
  gen_bind.bind("scenario", "--scenario", &gen_scenario);
  gen_bind.bind("n", "--n", &gen_n);
  gen_bind.bind("k", "--k", &gen_k);
  gen_bind.bind("emit_labels", "--emit-labels", &gen_labels);

  // ---- train --------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "fit the mixture model on a cohort");
  std::string tr_cohort, tr_config, tr_out = ".";
  std::uint64_t tr_seed = 0;
  std::size_t tr_epochs = 1000, tr_batch = 250, tr_depth = 2, tr_width = 50,
              tr_latent = 25, tr_k = 3, tr_patience = 10, tr_warmup = 80,
              tr_threads = 1, tr_tune = 0;
  double tr_lr = 1e-3, tr_assign_scale = 0.05;
  bool tr_unadjusted = false, tr_verbose = false;
  tr->add_option("cohort", tr_cohort, "cohort CSV")->required();
  tr->add_option("--config", tr_config, "JSON config; flags override");
  tr->add_option("--seed", tr_seed, "training seed");
  tr->add_option("--k", tr_k, "number of subgroups");
  tr->add_option("--epochs", tr_epochs, "max epochs");
  tr->add_option("--batch-size", tr_batch, "minibatch size");
  tr->add_option("--learning-rate", tr_lr, "Adam learning rate");
  tr->add_option("--depth", tr_depth, "hidden layers per network");
  tr->add_option("--width", tr_width, "hidden width");
  tr->add_option("--latent-dim", tr_latent, "subgroup representation size");
  tr->add_option("--patience", tr_patience, "early-stop patience (epochs)");
  tr->add_option("--warmup-epochs", tr_warmup,
                 "epochs before the assignment net starts to update");
  tr->add_option("--assign-lr-scale", tr_assign_scale,
                 "assignment-net learning-rate multiplier");
  tr->add_option("--threads", tr_threads, "worker threads");
  tr->add_option("--tune", tr_tune, "random-search iterations (0 = off)");
  tr->add_flag("--unadjusted", tr_unadjusted, "unit weights (skip propensity)");
  tr->add_flag("--verbose", tr_verbose, "log per-epoch validation loss");
  tr->add_option("--out", tr_out, "output directory");
  ConfigBinding tr_bind(tr);
  tr_bind.bind("seed", "--seed", &tr_seed);
  tr_bind.bind("k", "--k", &tr_k);
  tr_bind.bind("epochs", "--epochs", &tr_epochs);
  tr_bind.bind("batch_size", "--batch-size", &tr_batch);
  tr_bind.bind("learning_rate", "--learning-rate", &tr_lr);
  tr_bind.bind("depth", "--depth", &tr_depth);
  tr_bind.bind("width", "--width", &tr_width);
  tr_bind.bind("latent_dim", "--latent-dim", &tr_latent);
  tr_bind.bind("patience", "--patience", &tr_patience);
  tr_bind.bind("warmup_epochs", "--warmup-epochs", &tr_warmup);
  tr_bind.bind("assign_lr_scale", "--assign-lr-scale", &tr_assign_scale);
  tr_bind.bind("threads", "--threads", &tr_threads);
  tr_bind.bind("tune", "--tune", &tr_tune);
  tr_bind.bind("unadjusted", "--unadjusted", &tr_unadjusted);

  // ---- sweep-k -------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep-k", "cross-validated NLL over a K range");
  std::string sw_cohort, sw_config, sw_out = ".";
  std::uint64_t sw_seed = 0;
  std::size_t sw_klo = 1, sw_khi = 6, sw_folds = 5, sw_epochs = 1000,
              sw_batch = 250, sw_depth = 2, sw_width = 50, sw_latent = 25,
              sw_patience = 10, sw_warmup = 80, sw_threads = 1, sw_tune = 0;
  double sw_lr = 1e-3, sw_assign_scale = 0.05;
  bool sw_unadjusted = false, sw_verbose = false;
  sw->add_option("cohort", sw_cohort, "cohort CSV")->required();
  sw->add_option("--config", sw_config, "JSON config; flags override");
  sw->add_option("--seed", sw_seed, "sweep seed");
  sw->add_option("--k-lo", sw_klo, "smallest K");
  sw->add_option("--k-hi", sw_khi, "largest K");
  sw->add_option("--folds", sw_folds, "cross-validation folds");
  sw->add_option("--epochs", sw_epochs, "max epochs");
  sw->add_option("--batch-size", sw_batch, "minibatch size");
  sw->add_option("--learning-rate", sw_lr, "Adam learning rate");
  sw->add_option("--depth", sw_depth, "hidden layers per network");
  sw->add_option("--width", sw_width, "hidden width");
  sw->add_option("--latent-dim", sw_latent, "subgroup representation size");
  sw->add_option("--patience", sw_patience, "early-stop patience (epochs)");
  sw->add_option("--warmup-epochs", sw_warmup,
                 "epochs before the assignment net starts to update");
  sw->add_option("--assign-lr-scale", sw_assign_scale,
                 "assignment-net learning-rate multiplier");
  sw->add_option("--threads", sw_threads, "worker threads");
  sw->add_option("--tune", sw_tune, "random-search iterations per K (0 = off)");
  sw->add_flag("--unadjusted", sw_unadjusted, "unit weights");
  sw->add_flag("--verbose", sw_verbose, "log per-epoch validation loss");
  sw->add_option("--out", sw_out, "output directory");
  ConfigBinding sw_bind(sw);
  sw_bind.bind("seed", "--seed", &sw_seed);
  sw_bind.bind("k_lo", "--k-lo", &sw_klo);
  sw_bind.bind("k_hi", "--k-hi", &sw_khi);
  sw_bind.bind("folds", "--folds", &sw_folds);
  sw_bind.bind("epochs", "--epochs", &sw_epochs);
  sw_bind.bind("batch_size", "--batch-size", &sw_batch);
  sw_bind.bind("learning_rate", "--learning-rate", &sw_lr);
  sw_bind.bind("depth", "--depth", &sw_depth);
  sw_bind.bind("width", "--width", &sw_width);
  sw_bind.bind("latent_dim", "--latent-dim", &sw_latent);
  sw_bind.bind("patience", "--patience", &sw_patience);
  sw_bind.bind("warmup_epochs", "--warmup-epochs", &sw_warmup);
  sw_bind.bind("assign_lr_scale", "--assign-lr-scale", &sw_assign_scale);
  sw_bind.bind("threads", "--threads", &sw_threads);
  sw_bind.bind("tune", "--tune", &sw_tune);
  sw_bind.bind("unadjusted", "--unadjusted", &sw_unadjusted);

  // ---- evaluate --------------------------------------------------------
  auto* ev = app.add_subcommand("evaluate", "metric report for a checkpoint");
  std::string ev_ckpt, ev_cohort, ev_truth, ev_config, ev_out = ".";
  std::uint64_t ev_seed = 0;
  std::size_t ev_grid = 200, ev_mc = 100000, ev_nperm = 10, ev_threads = 1;
  bool ev_no_importance = false;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint JSON")->required();
  ev->add_option("--cohort", ev_cohort, "cohort CSV to score")->required();
  ev->add_option("--truth", ev_truth, "ground-truth JSON (optional)");
  ev->add_option("--config", ev_config, "JSON config; flags override");
  ev->add_option("--seed", ev_seed, "Monte Carlo seed");
  ev->add_option("--grid-points", ev_grid, "time grid resolution");
  ev->add_option("--mc-size", ev_mc, "Monte Carlo draws for true curves");
  ev->add_option("--n-perm", ev_nperm, "permutations per covariate");
  ev->add_option("--threads", ev_threads, "worker threads");
  ev->add_flag("--no-importance", ev_no_importance, "skip permutation table");
  ev->add_option("--out", ev_out, "output directory");
  ConfigBinding ev_bind(ev);
  ev_bind.bind("seed", "--seed", &ev_seed);
  ev_bind.bind("grid_points", "--grid-points", &ev_grid);
  ev_bind.bind("mc_size", "--mc-size", &ev_mc);
  ev_bind.bind("n_perm", "--n-perm", &ev_nperm);
  ev_bind.bind("threads", "--threads", &ev_threads);
  ev_bind.bind("no_importance", "--no-importance", &ev_no_importance);

  // ---- importance ---------------------------------------------------------
  auto* im = app.add_subcommand("importance",
                                "permutation importance per covariate");
  std::string im_ckpt, im_cohort, im_config, im_out = ".";
  std::uint64_t im_seed = 0;
  std::size_t im_nperm = 10;
  im->add_option("--checkpoint", im_ckpt, "model checkpoint JSON")->required();
  im->add_option("--cohort", im_cohort, "cohort CSV to score")->required();
  im->add_option("--config", im_config, "JSON config; flags override");
  im->add_option("--seed", im_seed, "permutation seed");
  im->add_option("--n-perm", im_nperm, "permutations per covariate");
  im->add_option("--out", im_out, "output directory");
  ConfigBinding im_bind(im);
  im_bind.bind("seed", "--seed", &im_seed);
  im_bind.bind("n_perm", "--n-perm", &im_nperm);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int rc = app.exit(e);
      return rc == 0 ? 0 : 2;
    }

    if (gen->parsed()) {
      gen_bind.apply(gen_config);
      cnsc::GeneratorConfig gc;
      gc.n = gen_n;
      gc.k = gen_k;
      gc.scenario = cnsc::parse_scenario(gen_scenario);
      gc.seed = gen_seed;
      json resolved = {{"n", gc.n},
                       {"k", gc.k},
                       {"scenario", cnsc::scenario_name(gc.scenario)},
                       {"seed", gc.seed},
                       {"emit_labels", gen_labels}};
      ensure_out_dir(gen_out);
      const std::string base =
          "generate-" + std::to_string(gen_seed) + "-" + hash8_of(resolved);
      auto [cohort, truth] = cnsc::generate(gc);
      const std::string csv_path = gen_out + "/" + base + ".csv";
      const std::string truth_path = gen_out + "/" + base + ".truth.json";
      cnsc::write_cohort_csv(csv_path, cohort,
                             gen_labels ? &truth.z : nullptr);
      cnsc::save_ground_truth(truth_path, truth);
      write_manifest(gen_out, base, "generate", gen_seed, gen_config, resolved,
                     {}, {{csv_path}, {truth_path}});
      std::printf("cohort: %s\nground truth: %s\n", csv_path.c_str(),
                  truth_path.c_str());
      return 0;
    }

    if (tr->parsed()) {
      tr_bind.apply(tr_config);
      cnsc::set_training_log(tr_verbose);
      cnsc::TrainConfig cfg = base_train_config(
          tr_epochs, tr_batch, tr_lr, tr_depth, tr_width, tr_latent, tr_k,
          tr_patience, tr_warmup, tr_assign_scale, tr_seed, !tr_unadjusted,
          tr_threads);
      json resolved = train_config_json(cfg);
      resolved["tune"] = tr_tune;
      resolved["cohort"] = tr_cohort;
      ensure_out_dir(tr_out);
      const std::string base =
          "train-" + std::to_string(tr_seed) + "-" + hash8_of(resolved);

      const std::vector<cnsc::PatientRecord> records =
          cnsc::read_cohort_csv(tr_cohort).records;
      const cnsc::FoldSplit split = self_split(records.size(), tr_seed);

      cnsc::FitResult fit;
      json tuning = json::array();
      if (tr_tune > 0) {
        cnsc::GridSearchResult gs = cnsc::random_grid_search(
            records, split, cnsc::SearchGrid{}, cfg, tr_tune, tr_seed);
        for (std::size_t c = 0; c < gs.candidates.size(); ++c) {
          json e = train_config_json(gs.candidates[c]);
          e["select_nll"] = gs.select_nll[c];
          e["winner"] = c == gs.best;
          tuning.push_back(std::move(e));
        }
        fit = std::move(gs.fit);
      } else {
        fit = cnsc::fit_cnsc(records, split, cfg);
      }

      const std::string ckpt_path = tr_out + "/" + base + ".ckpt.json";
      const std::string report_path = tr_out + "/" + base + ".report.json";
      cnsc::save_checkpoint(fit.model, ckpt_path);
      json report = json::parse(cnsc::train_report_json(fit.report));
      if (!tuning.empty()) report["tuning"] = tuning;
      cnsc::write_text_file(report_path, report.dump(2) + "\n");
      write_manifest(tr_out, base, "train", tr_seed, tr_config, resolved,
                     {{tr_cohort}}, {{ckpt_path}, {report_path}});
      std::printf("checkpoint: %s\nreport: %s\nbest_val=%.6f\n",
                  ckpt_path.c_str(), report_path.c_str(), fit.report.best_val);
      return 0;
    }

    if (sw->parsed()) {
      sw_bind.apply(sw_config);
      cnsc::set_training_log(sw_verbose);
      if (sw_khi < sw_klo) throw cnsc::UserError("--k-hi must be >= --k-lo");
      cnsc::TrainConfig cfg = base_train_config(
          sw_epochs, sw_batch, sw_lr, sw_depth, sw_width, sw_latent, sw_klo,
          sw_patience, sw_warmup, sw_assign_scale, sw_seed, !sw_unadjusted,
          sw_threads);
      json resolved = train_config_json(cfg);
      resolved.erase("k");
      resolved["k_lo"] = sw_klo;
      resolved["k_hi"] = sw_khi;
      resolved["folds"] = sw_folds;
      resolved["tune"] = sw_tune;
      resolved["cohort"] = sw_cohort;
      ensure_out_dir(sw_out);
      const std::string base =
          "sweep-k-" + std::to_string(sw_seed) + "-" + hash8_of(resolved);

      const std::vector<cnsc::PatientRecord> records =
          cnsc::read_cohort_csv(sw_cohort).records;
      const std::vector<cnsc::KSweepEntry> entries =
          cnsc::sweep_k(records, sw_klo, sw_khi, sw_folds, cfg, sw_tune > 0,
                        cnsc::SearchGrid{}, sw_tune);
      std::vector<double> means;
      for (const auto& e : entries) means.push_back(e.mean_nll);
      const std::size_t k_star = cnsc::elbow_select(means, sw_klo);

      const std::string csv_path = sw_out + "/" + base + ".csv";
      const std::string json_path = sw_out + "/" + base + ".json";
      cnsc::write_ksweep_csv(csv_path, entries);
      cnsc::write_text_file(json_path, cnsc::ksweep_json(entries, k_star));
      write_manifest(sw_out, base, "sweep-k", sw_seed, sw_config, resolved,
                     {{sw_cohort}}, {{csv_path}, {json_path}});
      std::printf("curve: %s\nK*=%zu\n", csv_path.c_str(), k_star);
      return 0;
    }

    if (ev->parsed()) {
      ev_bind.apply(ev_config);
      json resolved = {{"checkpoint", ev_ckpt},   {"cohort", ev_cohort},
                       {"truth", ev_truth},       {"seed", ev_seed},
                       {"grid_points", ev_grid},  {"mc_size", ev_mc},
                       {"n_perm", ev_nperm},      {"threads", ev_threads},
                       {"no_importance", ev_no_importance}};
      ensure_out_dir(ev_out);
      const std::string base =
          "evaluate-" + std::to_string(ev_seed) + "-" + hash8_of(resolved);

      const cnsc::CnscModel model = cnsc::load_checkpoint(ev_ckpt);
      const std::vector<cnsc::PatientRecord> records =
          cnsc::read_cohort_csv(ev_cohort).records;
      if (!records.empty() && records[0].x.size() != model.covariate_dim)
        throw cnsc::UserError(
            "checkpoint expects " + std::to_string(model.covariate_dim) +
            " covariates but cohort has " + std::to_string(records[0].x.size()));

      cnsc::GroundTruth truth;
      const bool have_truth = !ev_truth.empty();
      if (have_truth) {
        truth = cnsc::load_ground_truth(ev_truth);
        if (truth.z.size() != records.size())
          throw cnsc::UserError("ground truth covers " +
                                std::to_string(truth.z.size()) +
                                " patients, cohort has " +
                                std::to_string(records.size()));
      }

      cnsc::EvalOptions opt;
      opt.grid_points = ev_grid;
      opt.mc_size = ev_mc;
      opt.n_perm = ev_nperm;
      opt.seed = ev_seed;
      opt.importance = !ev_no_importance;
      opt.threads = ev_threads;
      const cnsc::MetricReport rep = cnsc::evaluate_model(
          model, records, have_truth ? &truth : nullptr, opt);

      const std::string report_path = ev_out + "/" + base + ".json";
      cnsc::write_text_file(report_path, cnsc::metric_report_json(rep));

      // Treatment-effect curves per subgroup, estimated columns reordered to
      // the matched true group when truth is available.
      const std::vector<double> grid =
          cnsc::evaluation_grid(records, ev_grid);
      std::vector<cnsc::EffectCurve> est(model.k);
      for (std::size_t g = 0; g < model.k; ++g)
        est[g] = cnsc::model_gate_curve(model, g, grid);
      std::vector<cnsc::EffectCurve> true_curves;
      if (have_truth && truth.k == model.k) {
        std::vector<cnsc::EffectCurve> aligned(model.k);
        for (std::size_t i = 0; i < model.k; ++i)
          aligned[rep.group_matching[i]] = est[i];
        est = std::move(aligned);
        cnsc::SeededRng seeds(ev_seed);
        true_curves.resize(truth.k);
        for (std::size_t g = 0; g < truth.k; ++g)
          true_curves[g] = {grid, cnsc::true_gate(truth, g, grid, ev_mc,
                                                  seeds.derive(1000 + g).seed())};
      }
      const std::string curves_path = ev_out + "/" + base + ".curves.csv";
      cnsc::write_effect_curves_csv(curves_path, est, true_curves);

      std::vector<Artifact> inputs{{ev_ckpt}, {ev_cohort}};
      if (have_truth) inputs.push_back({ev_truth});
      write_manifest(ev_out, base, "evaluate", ev_seed, ev_config, resolved,
                     inputs, {{report_path}, {curves_path}});
      std::printf("report: %s\ncurves: %s\n", report_path.c_str(),
                  curves_path.c_str());
      if (std::isfinite(rep.rand_index))
        std::printf("rand_index=%.4f\n", rep.rand_index);
      std::printf("test_nll=%.6f\n", rep.test_nll);
      return 0;
    }

    if (im->parsed()) {
      im_bind.apply(im_config);
      json resolved = {{"checkpoint", im_ckpt},
                       {"cohort", im_cohort},
                       {"seed", im_seed},
                       {"n_perm", im_nperm}};
      ensure_out_dir(im_out);
      const std::string base =
          "importance-" + std::to_string(im_seed) + "-" + hash8_of(resolved);

      const cnsc::CnscModel model = cnsc::load_checkpoint(im_ckpt);
      const std::vector<cnsc::PatientRecord> records =
          cnsc::read_cohort_csv(im_cohort).records;
      if (!records.empty() && records[0].x.size() != model.covariate_dim)
        throw cnsc::UserError(
            "checkpoint expects " + std::to_string(model.covariate_dim) +
            " covariates but cohort has " + std::to_string(records[0].x.size()));

      // Same per-covariate seed derivation as the full metric report, so the
      // two tables agree for a given --seed.
      cnsc::SeededRng seeds(im_seed);
      std::string csv = "covariate,delta_nll\n";
      for (std::size_t j = 0; j < model.covariate_dim; ++j) {
        const double d = cnsc::permutation_importance(
            model, records, j, im_nperm, seeds.derive(5000 + j).seed());
        char buf[64];
        std::snprintf(buf, sizeof buf, "x%zu,%.17g\n", j, d);
        csv += buf;
      }
      const std::string csv_path = im_out + "/" + base + ".csv";
      cnsc::write_text_file(csv_path, csv);
      write_manifest(im_out, base, "importance", im_seed, im_config, resolved,
                     {{im_ckpt}, {im_cohort}}, {{csv_path}});
      std::printf("importance: %s\n", csv_path.c_str());
      return 0;
    }

    return 0;
  } catch (const cnsc::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const cnsc::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {  // Shape/Domain/UserError too
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 3;
  }
}
