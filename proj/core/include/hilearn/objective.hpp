#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hilearn/dataset.hpp"
#include "hilearn/models.hpp"

namespace hilearn {

enum class BatchMode { kFull, kMinibatch };

struct TrainConfig {
  double learning_rate = 1e-3;
  double l2_coef = 0.0;
  int max_epoch = 1;
  int t_threshold = 0;       // lambda = 1 while epoch < t, lambda_after from then on
  double lambda_after = 0.0;
  BatchMode batch_mode = BatchMode::kFull;
  int minibatch_count = 1;   // equal parts per dataset in minibatch mode
  uint64_t seed = 0;
  bool freeze_phi = false;   // frozen-feature phase: only heads get updates
  // Off-spec stability knob, not part of the training objective in the source
  // method: adds this weight times the coarse-head empirical risk. Default 0.
  double aux_coarse_weight = 0.0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw InputError("TrainConfig: learning_rate <= 0");
    if (max_epoch < 1) throw InputError("TrainConfig: max_epoch < 1");
    if (lambda_after < 0.0) throw InputError("TrainConfig: lambda_after < 0");
    if (t_threshold < 0) throw InputError("TrainConfig: t_threshold < 0");
    if (batch_mode == BatchMode::kMinibatch && minibatch_count < 1)
      throw InputError("TrainConfig: minibatch_count < 1");
  }
};

using LogProbFn = std::function<VectorXd(const RowVectorXd&)>;

// Mean negative log-likelihood of the dataset labels under `log_probs`.
double empirical_risk(const DomainDataset& dataset, const LogProbFn& log_probs);
// Bundle-based risks: fine labels under the target head, coarse labels under
// the coarse head.
double empirical_risk_fine(const DomainDataset& dataset, const ModelBundle& bundle);
double empirical_risk_coarse_head(const DomainDataset& dataset,
                                  const ModelBundle& bundle);

// Sum over coarse domains of the squared gradient norm of the coarse-head
// empirical risk w.r.t. the coarse-head parameters, at the current bundle.
double irm_penalty(const std::vector<DomainDataset>& ad_datasets,
                   const ModelBundle& bundle);

// empirical_risk_fine(target) + lambda * irm_penalty(ad_datasets).
double total_objective(const DomainDataset& target,
                       const std::vector<DomainDataset>& ad_datasets,
                       const ModelBundle& bundle, double lambda);

// 1 while epoch < t_threshold, lambda_after from epoch == t_threshold on.
double lambda_schedule(int epoch, const TrainConfig& config);

// Adam on total_objective + l2_coef * ||params||^2, lambda following the
// schedule per epoch. Deterministic per seed. When `init` is given the run
// warm-starts from it instead of seeded initialization.
ModelBundle train(const DomainDataset& target,
                  const std::vector<DomainDataset>& ad_datasets,
                  const Architecture& arch, const TrainConfig& config);
ModelBundle train_from(ModelBundle init, const DomainDataset& target,
                       const std::vector<DomainDataset>& ad_datasets,
                       const TrainConfig& config);

// Gradient of total_objective w.r.t. all bundle parameters (tape path, used
// by trainers and by the finite-difference correctness checks).
ad::ParamVector objective_gradient(const DomainDataset& target,
                                   const std::vector<DomainDataset>& ad_datasets,
                                   const ModelBundle& bundle, double lambda);

}  // namespace hilearn
