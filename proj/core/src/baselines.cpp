#include "hilearn/baselines.hpp"

#include "hilearn/rng.hpp"

namespace hilearn::baselines {

ModelBundle train_erm(const DomainDataset& target, const Architecture& arch,
                      const TrainConfig& config) {
  TrainConfig cfg = config;
  cfg.t_threshold = 0;
  cfg.lambda_after = 0.0;
  cfg.freeze_phi = false;
  return train(target, {}, arch, cfg);
}

DomainDataset pool_as_fine_task(const std::vector<DomainDataset>& ad_datasets) {
  if (ad_datasets.empty())
    throw InputError("pool_as_fine_task: needs at least one ad dataset");
  int total = 0;
  const int dim = ad_datasets.front().dim();
  const int zc = ad_datasets.front().label_count;
  for (const DomainDataset& d : ad_datasets) {
    d.validate();
    if (d.level != LabelLevel::kCoarse)
      throw InputError("pool_as_fine_task: ad datasets must be coarse-level");
    if (d.dim() != dim || d.label_count != zc)
      throw InputError("pool_as_fine_task: inconsistent ad datasets");
    total += d.n();
  }
  DomainDataset pooled;
  pooled.domain_id = "pooled_ad";
  pooled.level = LabelLevel::kFine;  // treated as a |Z|-class target task
  pooled.label_count = zc;
  pooled.inputs.resize(total, dim);
  pooled.labels.reserve(total);
  int at = 0;
  for (const DomainDataset& d : ad_datasets) {
    pooled.inputs.middleRows(at, d.n()) = d.inputs;
    pooled.labels.insert(pooled.labels.end(), d.labels.begin(), d.labels.end());
    at += d.n();
  }
  return pooled;
}

namespace {

ModelBundle transfer_train(const DomainDataset& target,
                           const std::vector<DomainDataset>& ad_datasets,
                           const Architecture& arch, const TrainConfig& config,
                           bool freeze_phi_phase2) {
  if (ad_datasets.empty())
    throw InputError("transfer baselines need auxiliary coarse data");

  DomainDataset pooled = pool_as_fine_task(ad_datasets);

  // Phase 1: same feature map with a |Z|-class classification head.
  Architecture pre = arch;
  pre.y_count = pooled.label_count;
  TrainConfig cfg1 = config;
  cfg1.t_threshold = 0;
  cfg1.lambda_after = 0.0;
  cfg1.freeze_phi = false;
  cfg1.seed = derive_seed(config.seed, "pretrain");
  ModelBundle pretrained = train(pooled, {}, pre, cfg1);

  // Phase 2: carry over the feature map, fresh heads for the target space.
  ModelBundle bundle = init_bundle(arch, derive_seed(config.seed, "head-init"));
  for (int i = 0; i < arch.phi_param_count(); ++i)
    bundle.params.set_matrix(i, pretrained.params.matrix(i));

  TrainConfig cfg2 = config;
  cfg2.t_threshold = 0;
  cfg2.lambda_after = 0.0;
  cfg2.freeze_phi = freeze_phi_phase2;
  cfg2.seed = derive_seed(config.seed, "retrain");
  return train_from(std::move(bundle), target, {}, cfg2);
}

}  // namespace

ModelBundle train_finetune(const DomainDataset& target,
                           const std::vector<DomainDataset>& ad_datasets,
                           const Architecture& arch, const TrainConfig& config) {
  return transfer_train(target, ad_datasets, arch, config, false);
}

ModelBundle train_frozen(const DomainDataset& target,
                         const std::vector<DomainDataset>& ad_datasets,
                         const Architecture& arch, const TrainConfig& config) {
  return transfer_train(target, ad_datasets, arch, config, true);
}

}  // namespace hilearn::baselines
