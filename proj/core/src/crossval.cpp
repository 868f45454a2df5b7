#include "hilearn/crossval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "hilearn/parallel.hpp"
#include "hilearn/rng.hpp"

namespace hilearn::cv {

using nlohmann::ordered_json;

std::vector<int> FoldAssignment::indices_in(int dataset, int fold) const {
  std::vector<int> out;
  const auto& f = fold_of[dataset];
  for (size_t i = 0; i < f.size(); ++i)
    if (f[i] == fold) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> FoldAssignment::indices_not_in(int dataset, int fold) const {
  std::vector<int> out;
  const auto& f = fold_of[dataset];
  for (size_t i = 0; i < f.size(); ++i)
    if (f[i] != fold) out.push_back(static_cast<int>(i));
  return out;
}

FoldAssignment kfold_split(const std::vector<int>& dataset_sizes, int K,
                           uint64_t seed) {
  if (K < 2) throw InputError("kfold_split: K must be >= 2");
  FoldAssignment fa;
  fa.K = K;
  Rng rng(derive_seed(seed, "kfold"));
  for (size_t d = 0; d < dataset_sizes.size(); ++d) {
    int n = dataset_sizes[d];
    if (n < K)
      throw InputError("kfold_split: dataset " + std::to_string(d) +
                       " has fewer samples than folds");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::vector<int> fold(n);
    // Chunked assignment keeps fold sizes within one of each other.
    int base = n / K, extra = n % K, at = 0;
    for (int k = 0; k < K; ++k) {
      int len = base + (k < extra ? 1 : 0);
      for (int j = 0; j < len; ++j) fold[idx[at + j]] = k;
      at += len;
    }
    fa.fold_of.push_back(std::move(fold));
  }
  return fa;
}

double coarse_prior(const DomainDataset& ad_dataset, int z) {
  ad_dataset.validate();
  if (ad_dataset.level != LabelLevel::kCoarse)
    throw InputError("coarse_prior: dataset must be coarse-level");
  int count = 0;
  for (int label : ad_dataset.labels) count += (label == z);
  return static_cast<double>(count) / ad_dataset.n();
}

namespace {

// log p(y | x, Y in g^-1(z)) computed stably from fine log-probs.
double renormalized_log_prob(const Eigen::RowVectorXd& log_probs,
                             const HierarchyMap& hier, int y, int z) {
  const std::vector<int>& pre = hier.preimage(z);
  double m = -std::numeric_limits<double>::infinity();
  for (int yy : pre) m = std::max(m, log_probs[yy]);
  double s = 0.0;
  for (int yy : pre) s += std::exp(log_probs[yy] - m);
  return log_probs[y] - (m + std::log(s));
}

}  // namespace

double correction_term(const DomainDataset& fold_fine_data,
                       const ModelBundle& bundle, const HierarchyMap& hierarchy,
                       int z) {
  fold_fine_data.validate();
  if (fold_fine_data.level != LabelLevel::kFine)
    throw InputError("correction_term: needs a fine-level dataset");
  MatrixXd lp = target_log_probs(bundle, fold_fine_data.inputs);
  double acc = 0.0;
  int count = 0;
  for (int i = 0; i < fold_fine_data.n(); ++i) {
    int y = fold_fine_data.labels[i];
    if (hierarchy.coarsen(y) != z) continue;
    acc -= renormalized_log_prob(lp.row(i), hierarchy, y, z);
    ++count;
  }
  if (count == 0)
    throw DegenerateConditionalError(
        "correction_term: no sample with coarse label " + std::to_string(z) +
        " in this fold");
  return acc / count;
}

double coarse_pushforward_risk(const DomainDataset& coarse_data,
                               const ModelBundle& bundle,
                               const HierarchyMap& hierarchy) {
  coarse_data.validate();
  if (coarse_data.level != LabelLevel::kCoarse)
    throw InputError("coarse_pushforward_risk: needs a coarse-level dataset");
  if (coarse_data.label_count != hierarchy.coarse_count())
    throw InputError("coarse_pushforward_risk: label space mismatch");
  MatrixXd lp = target_log_probs(bundle, coarse_data.inputs);
  double acc = 0.0;
  for (int i = 0; i < coarse_data.n(); ++i) {
    const std::vector<int>& pre = hierarchy.preimage(coarse_data.labels[i]);
    double m = -std::numeric_limits<double>::infinity();
    for (int y : pre) m = std::max(m, lp(i, y));
    double s = 0.0;
    for (int y : pre) s += std::exp(lp(i, y) - m);
    acc -= m + std::log(s);
  }
  return acc / coarse_data.n();
}

double fold_ood_estimate(const ModelBundle& bundle, CvMethod method,
                         const FoldInputs& inputs, const HierarchyMap& hierarchy,
                         std::vector<std::string>* warnings) {
  const DomainDataset& target_val = *inputs.target_val;
  const std::vector<DomainDataset>& ad_vals = *inputs.ad_vals;
  double fine_star = empirical_risk_fine(target_val, bundle);

  if (method == CvMethod::kMethodI) {
    double worst = fine_star;
    for (const DomainDataset& d : ad_vals)
      worst = std::max(worst, coarse_pushforward_risk(d, bundle, hierarchy));
    return worst;
  }

  std::vector<int> ambiguous = hierarchy.ambiguous_labels();
  std::vector<double> corrections(ambiguous.size(), 0.0);
  for (size_t zi = 0; zi < ambiguous.size(); ++zi) {
    try {
      corrections[zi] = correction_term(target_val, bundle, hierarchy, ambiguous[zi]);
    } catch (const DegenerateConditionalError&) {
      // Small folds can miss a stratum; falling back to the full target set
      // keeps the grid point comparable instead of dropping it.
      corrections[zi] =
          correction_term(*inputs.target_full, bundle, hierarchy, ambiguous[zi]);
      if (warnings)
        warnings->push_back("empty stratum for coarse label " +
                            std::to_string(ambiguous[zi]) +
                            " in a validation fold; correction taken from the "
                            "full target dataset");
    }
  }

  // The e* entry of the corrected max is the fine risk itself: coarse risk
  // plus same-data corrections telescopes back to it exactly.
  double worst = fine_star;
  for (size_t e = 0; e < ad_vals.size(); ++e) {
    double corrected = coarse_pushforward_risk(ad_vals[e], bundle, hierarchy);
    for (size_t zi = 0; zi < ambiguous.size(); ++zi)
      corrected += (*inputs.priors)(e, ambiguous[zi]) * corrections[zi];
    worst = std::max(worst, corrected);
  }
  return worst;
}

uint64_t point_train_seed(uint64_t base, const HyperPoint& p, uint64_t salt) {
  return derive_seed(base, "train-point",
                     mix64(static_cast<uint64_t>(p.t_threshold) ^
                           std::bit_cast<uint64_t>(p.lambda_after)),
                     salt);
}

CvCore run_cv_core(const std::vector<HyperPoint>& grid,
                   const DomainDataset& target,
                   const std::vector<DomainDataset>& ad_datasets,
                   const HierarchyMap& hierarchy, int K, uint64_t seed,
                   const CvTrainPlan& plan, int jobs, const TrainerFn& trainer) {
  if (grid.empty()) throw InputError("run_cv_core: empty hyperparameter grid");
  target.validate();

  TrainerFn train_fn = trainer;
  if (!train_fn)
    train_fn = [](const DomainDataset& tgt, const std::vector<DomainDataset>& ads,
                  const Architecture& arch, const TrainConfig& cfg) {
      return train(tgt, ads, arch, cfg);
    };

  std::vector<int> sizes{target.n()};
  for (const auto& d : ad_datasets) sizes.push_back(d.n());
  FoldAssignment folds = kfold_split(sizes, K, seed);

  // Empirical coarse priors from the full ad datasets (the Require line of
  // the selection algorithm), one row per ad domain.
  Eigen::MatrixXd priors(ad_datasets.size(), hierarchy.coarse_count());
  for (size_t e = 0; e < ad_datasets.size(); ++e)
    for (int z = 0; z < hierarchy.coarse_count(); ++z)
      priors(static_cast<int>(e), z) = coarse_prior(ad_datasets[e], z);

  CvCore core;
  core.grid = grid;
  core.K = K;
  for (const auto& d : ad_datasets) core.ad_domains.push_back(d.domain_id);
  core.evals.assign(grid.size(), std::vector<FoldEval>(K));

  struct Task {
    int g, k;
  };
  std::vector<Task> tasks;
  for (size_t g = 0; g < grid.size(); ++g)
    for (int k = 0; k < K; ++k) tasks.push_back({static_cast<int>(g), k});

  // Train/validation slices are shared across grid points; build them once.
  std::vector<DomainDataset> target_train(K), target_vals(K);
  std::vector<std::vector<DomainDataset>> ad_train(K), ad_vals(K);
  for (int k = 0; k < K; ++k) {
    target_train[k] = target.subset(folds.indices_not_in(0, k));
    target_vals[k] = target.subset(folds.indices_in(0, k));
    for (size_t e = 0; e < ad_datasets.size(); ++e) {
      ad_train[k].push_back(
          ad_datasets[e].subset(folds.indices_not_in(static_cast<int>(e) + 1, k)));
      ad_vals[k].push_back(
          ad_datasets[e].subset(folds.indices_in(static_cast<int>(e) + 1, k)));
    }
  }

  std::vector<std::vector<std::string>> task_warnings(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), jobs, [&](int ti) {
    const auto [g, k] = tasks[ti];
    TrainConfig cfg = plan.base;
    cfg.t_threshold = grid[g].t_threshold;
    cfg.lambda_after = grid[g].lambda_after;
    cfg.seed = point_train_seed(seed, grid[g], static_cast<uint64_t>(k));
    ModelBundle bundle = train_fn(target_train[k], ad_train[k], plan.arch, cfg);

    FoldEval ev;
    ev.fine_star = empirical_risk_fine(target_vals[k], bundle);
    for (const DomainDataset& d : ad_vals[k])
      ev.coarse_ad.push_back(coarse_pushforward_risk(d, bundle, hierarchy));

    std::vector<int> ambiguous = hierarchy.ambiguous_labels();
    std::vector<double> corrections(ambiguous.size(), 0.0);
    for (size_t zi = 0; zi < ambiguous.size(); ++zi) {
      try {
        corrections[zi] =
            correction_term(target_vals[k], bundle, hierarchy, ambiguous[zi]);
      } catch (const DegenerateConditionalError&) {
        corrections[zi] =
            correction_term(target, bundle, hierarchy, ambiguous[zi]);
        task_warnings[ti].push_back(
            "grid point " + std::to_string(g) + ", fold " + std::to_string(k) +
            ": empty stratum for coarse label " + std::to_string(ambiguous[zi]) +
            "; correction computed on the full target dataset");
      }
    }
    ev.corrected_ad = ev.coarse_ad;
    for (size_t e = 0; e < ev.corrected_ad.size(); ++e)
      for (size_t zi = 0; zi < ambiguous.size(); ++zi)
        ev.corrected_ad[e] +=
            priors(static_cast<int>(e), ambiguous[zi]) * corrections[zi];

    ev.method1 = ev.fine_star;
    for (double r : ev.coarse_ad) ev.method1 = std::max(ev.method1, r);
    ev.method2 = ev.fine_star;
    for (double r : ev.corrected_ad) ev.method2 = std::max(ev.method2, r);
    core.evals[g][k] = std::move(ev);
  });

  for (auto& w : task_warnings)
    core.warnings.insert(core.warnings.end(), w.begin(), w.end());
  return core;
}

namespace {

int argmin_first(const std::vector<double>& scores) {
  int best = 0;
  for (size_t i = 1; i < scores.size(); ++i)
    if (scores[i] < scores[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace

CvReport select_from_core(const CvCore& core, CvMethod method) {
  CvReport rep;
  rep.selector = method == CvMethod::kMethodI ? "CVI" : "CVII";
  rep.grid = core.grid;
  rep.risk_table = core.evals;
  rep.warnings = core.warnings;
  for (const auto& per_fold : core.evals) {
    double sum = 0.0;
    std::vector<double> fs;
    for (const FoldEval& ev : per_fold) {
      double v = method == CvMethod::kMethodI ? ev.method1 : ev.method2;
      fs.push_back(v);
      sum += v;
    }
    rep.fold_scores.push_back(std::move(fs));
    rep.scores.push_back(sum / core.K);
  }
  rep.selected = argmin_first(rep.scores);
  return rep;
}

CvReport select_trcv_from_core(const CvCore& core) {
  CvReport rep;
  rep.selector = "TrCV";
  rep.grid = core.grid;
  rep.risk_table = core.evals;
  rep.warnings = core.warnings;
  for (const auto& per_fold : core.evals) {
    double sum = 0.0;
    std::vector<double> fs;
    for (const FoldEval& ev : per_fold) {
      fs.push_back(ev.fine_star);
      sum += ev.fine_star;
    }
    rep.fold_scores.push_back(std::move(fs));
    rep.scores.push_back(sum / core.K);
  }
  rep.selected = argmin_first(rep.scores);
  return rep;
}

CvReport select_hyperparams(const std::vector<HyperPoint>& grid,
                            const DomainDataset& target,
                            const std::vector<DomainDataset>& ad_datasets,
                            const HierarchyMap& hierarchy, int K, CvMethod method,
                            uint64_t seed, const CvTrainPlan& plan, int jobs,
                            const TrainerFn& trainer) {
  CvCore core =
      run_cv_core(grid, target, ad_datasets, hierarchy, K, seed, plan, jobs, trainer);
  return select_from_core(core, method);
}

CvReport baseline_select(BaselineSelector kind,
                         const std::vector<HyperPoint>& grid,
                         const DomainDataset& target,
                         const std::vector<DomainDataset>& ad_datasets,
                         const HierarchyMap& hierarchy, int K, uint64_t seed,
                         const CvTrainPlan& plan, int jobs,
                         const DomainDataset* tdv_data, const TrainerFn& trainer) {
  if (grid.empty()) throw InputError("baseline_select: empty grid");
  TrainerFn train_fn = trainer;
  if (!train_fn)
    train_fn = [](const DomainDataset& tgt, const std::vector<DomainDataset>& ads,
                  const Architecture& arch, const TrainConfig& cfg) {
      return train(tgt, ads, arch, cfg);
    };

  if (kind == BaselineSelector::kTrCV) {
    CvCore core = run_cv_core(grid, target, ad_datasets, hierarchy, K, seed, plan,
                              jobs, train_fn);
    return select_trcv_from_core(core);
  }

  CvReport rep;
  rep.grid = grid;

  if (kind == BaselineSelector::kLODCV) {
    if (ad_datasets.size() < 2)
      throw InputError("LOD-CV needs at least two ad domains");
    rep.selector = "LODCV";
    const int E = static_cast<int>(ad_datasets.size());
    std::vector<std::vector<double>> held_scores(grid.size(),
                                                 std::vector<double>(E, 0.0));
    struct Task {
      int g, e;
    };
    std::vector<Task> tasks;
    for (size_t g = 0; g < grid.size(); ++g)
      for (int e = 0; e < E; ++e) tasks.push_back({static_cast<int>(g), e});
    parallel_for(static_cast<int>(tasks.size()), jobs, [&](int ti) {
      const auto [g, e] = tasks[ti];
      std::vector<DomainDataset> ads;
      for (int o = 0; o < E; ++o)
        if (o != e) ads.push_back(ad_datasets[o]);
      TrainConfig cfg = plan.base;
      cfg.t_threshold = grid[g].t_threshold;
      cfg.lambda_after = grid[g].lambda_after;
      cfg.seed = point_train_seed(seed, grid[g], 0x10dc + static_cast<uint64_t>(e));
      ModelBundle bundle = train_fn(target, ads, plan.arch, cfg);
      // Held-out validation uses the plain coarse risk, the usual
      // leave-one-domain-out convention.
      held_scores[g][e] = coarse_pushforward_risk(ad_datasets[e], bundle, hierarchy);
    });
    for (size_t g = 0; g < grid.size(); ++g) {
      double mean =
          std::accumulate(held_scores[g].begin(), held_scores[g].end(), 0.0) / E;
      rep.fold_scores.push_back(held_scores[g]);
      rep.scores.push_back(mean);
    }
    rep.selected = argmin_first(rep.scores);
    return rep;
  }

  // TDV: oracle selection on a held-out test-domain sample. Scores are error
  // rates so that the selected point is still the argmin.
  if (tdv_data == nullptr)
    throw InputError("TDV needs a held-out test-domain fine dataset");
  tdv_data->validate();
  rep.selector = "TDV";
  rep.oracle_selection = true;
  std::vector<double> errs(grid.size(), 0.0);
  parallel_for(static_cast<int>(grid.size()), jobs, [&](int g) {
    TrainConfig cfg = plan.base;
    cfg.t_threshold = grid[g].t_threshold;
    cfg.lambda_after = grid[g].lambda_after;
    cfg.seed = point_train_seed(seed, grid[g], 0x7d5);
    ModelBundle bundle = train_fn(target, ad_datasets, plan.arch, cfg);
    MatrixXd lp = target_log_probs(bundle, tdv_data->inputs);
    int hits = 0;
    for (int i = 0; i < tdv_data->n(); ++i)
      hits += (predict_label(lp.row(i)) == tdv_data->labels[i]);
    errs[g] = 1.0 - static_cast<double>(hits) / tdv_data->n();
  });
  rep.scores = errs;
  for (double e : errs) rep.fold_scores.push_back({e});
  rep.selected = argmin_first(rep.scores);
  return rep;
}

ordered_json CvReport::to_json() const {
  ordered_json grid_json = ordered_json::array();
  for (const HyperPoint& p : grid)
    grid_json.push_back({{"t", p.t_threshold}, {"lambda_after", p.lambda_after}});
  ordered_json table = ordered_json::array();
  for (const auto& per_fold : risk_table) {
    ordered_json folds = ordered_json::array();
    for (const FoldEval& ev : per_fold) {
      folds.push_back({{"fine_star", ev.fine_star},
                       {"coarse_ad", ev.coarse_ad},
                       {"corrected_ad", ev.corrected_ad},
                       {"method1", ev.method1},
                       {"method2", ev.method2}});
    }
    table.push_back(std::move(folds));
  }
  return ordered_json{{"selector", selector},
                      {"grid", std::move(grid_json)},
                      {"scores", scores},
                      {"fold_scores", fold_scores},
                      {"selected", selected},
                      {"selected_point",
                       {{"t", grid.at(selected).t_threshold},
                        {"lambda_after", grid.at(selected).lambda_after}}},
                      {"oracle_selection", oracle_selection},
                      {"risk_table", std::move(table)},
                      {"warnings", warnings}};
}

}  // namespace hilearn::cv
