#pragma once

#include "hilearn/hierarchy.hpp"
#include "hilearn/objective.hpp"

namespace hilearn::baselines {

// Plain single-domain empirical risk minimization: the invariant trainer with
// the penalty disabled and no auxiliary data.
ModelBundle train_erm(const DomainDataset& target, const Architecture& arch,
                      const TrainConfig& config);

// Two-phase transfer baselines. Phase 1 trains the feature map with a
// |Z|-class head by ERM on the pooled coarse data; phase 2 swaps in a fresh
// |Y|-class head and retrains on the target — all parameters for fine-tune,
// heads only for frozen-feature. The optimizer restarts between phases.
ModelBundle train_finetune(const DomainDataset& target,
                           const std::vector<DomainDataset>& ad_datasets,
                           const Architecture& arch, const TrainConfig& config);
ModelBundle train_frozen(const DomainDataset& target,
                         const std::vector<DomainDataset>& ad_datasets,
                         const Architecture& arch, const TrainConfig& config);

// Pooled ad domains relabeled as a fine classification task over Z.
DomainDataset pool_as_fine_task(const std::vector<DomainDataset>& ad_datasets);

}  // namespace hilearn::baselines
