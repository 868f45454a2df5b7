#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilearn/dataset.hpp"
#include "hilearn/hierarchy.hpp"
#include "hilearn/objective.hpp"

namespace hilearn::cv {

struct HyperPoint {
  int t_threshold = 0;
  double lambda_after = 0.0;
  bool operator==(const HyperPoint&) const = default;
};

// K-fold estimators of the o.o.d. risk from coarse validation data:
// Method I substitutes the coarse risk directly, Method II adds the
// ambiguous-label correction term.
enum class CvMethod { kMethodI, kMethodII };

enum class BaselineSelector { kTrCV, kLODCV, kTDV };

struct FoldAssignment {
  int K = 0;
  // fold id per sample, one vector per dataset (target first, then ad).
  std::vector<std::vector<int>> fold_of;

  std::vector<int> indices_in(int dataset, int fold) const;
  std::vector<int> indices_not_in(int dataset, int fold) const;
};

// Uniform random partition into K near-equal folds, seeded. Every dataset
// must have at least K samples.
FoldAssignment kfold_split(const std::vector<int>& dataset_sizes, int K,
                           uint64_t seed);

// Empirical fraction of coarse label z in the dataset.
double coarse_prior(const DomainDataset& ad_dataset, int z);

// Mean renormalized NLL over the samples of `fold_fine_data` whose coarse
// label is z: the correction term C(z) of the corrected CV estimate.
double correction_term(const DomainDataset& fold_fine_data,
                       const ModelBundle& bundle, const HierarchyMap& hierarchy,
                       int z);

// Coarse risk of the target head pushed forward through g:
// -log sum_{y in g^-1(z)} p_theta(y | Phi(x)), averaged over the dataset.
double coarse_pushforward_risk(const DomainDataset& coarse_data,
                               const ModelBundle& bundle,
                               const HierarchyMap& hierarchy);

// Everything fold_ood_estimate needs for one validation fold.
struct FoldInputs {
  const DomainDataset* target_val = nullptr;            // fine fold of e*
  const std::vector<DomainDataset>* ad_vals = nullptr;   // coarse folds
  const DomainDataset* target_full = nullptr;            // degenerate-fold fallback
  const Eigen::MatrixXd* priors = nullptr;               // |E_ad| x |Z|, full-data
};

double fold_ood_estimate(const ModelBundle& bundle, CvMethod method,
                         const FoldInputs& inputs, const HierarchyMap& hierarchy,
                         std::vector<std::string>* warnings = nullptr);

struct CvTrainPlan {
  Architecture arch;
  TrainConfig base;  // t_threshold / lambda_after overwritten per grid point
};

using TrainerFn = std::function<ModelBundle(
    const DomainDataset& target, const std::vector<DomainDataset>& ads,
    const Architecture& arch, const TrainConfig& cfg)>;

// Per-(grid point, fold) validation risks from one shared set of trainings.
struct FoldEval {
  double fine_star = 0.0;
  std::vector<double> coarse_ad;
  std::vector<double> corrected_ad;
  double method1 = 0.0;
  double method2 = 0.0;
  double test_accuracy = 0.0;  // only filled by TDV selection
};

struct CvCore {
  std::vector<HyperPoint> grid;
  int K = 0;
  std::vector<std::string> ad_domains;
  std::vector<std::vector<FoldEval>> evals;  // [grid][fold]
  std::vector<std::string> warnings;
};

CvCore run_cv_core(const std::vector<HyperPoint>& grid,
                   const DomainDataset& target,
                   const std::vector<DomainDataset>& ad_datasets,
                   const HierarchyMap& hierarchy, int K, uint64_t seed,
                   const CvTrainPlan& plan, int jobs = 1,
                   const TrainerFn& trainer = {});

struct CvReport {
  std::string selector;  // "CVI", "CVII", "TrCV", "LODCV", "TDV"
  std::vector<HyperPoint> grid;
  std::vector<double> scores;                 // one per grid point
  std::vector<std::vector<double>> fold_scores;  // [grid][fold or held-out]
  std::vector<std::vector<FoldEval>> risk_table; // per-fold per-domain risks
  int selected = -1;
  bool oracle_selection = false;
  std::vector<std::string> warnings;

  const HyperPoint& selected_point() const { return grid.at(selected); }
  nlohmann::ordered_json to_json() const;
};

// Assembles a report from shared fold evaluations (Methods I / II and Tr-CV
// reuse the same per-fold models).
CvReport select_from_core(const CvCore& core, CvMethod method);
CvReport select_trcv_from_core(const CvCore& core);

// Algorithm-1 selection. Ties break to the first point in grid order.
CvReport select_hyperparams(const std::vector<HyperPoint>& grid,
                            const DomainDataset& target,
                            const std::vector<DomainDataset>& ad_datasets,
                            const HierarchyMap& hierarchy, int K, CvMethod method,
                            uint64_t seed, const CvTrainPlan& plan, int jobs = 1,
                            const TrainerFn& trainer = {});

// Baseline selectors. LOD-CV needs at least two ad domains; TDV additionally
// receives a held-out test-domain fine dataset and is flagged as oracle
// selection (not deployable).
CvReport baseline_select(BaselineSelector kind,
                         const std::vector<HyperPoint>& grid,
                         const DomainDataset& target,
                         const std::vector<DomainDataset>& ad_datasets,
                         const HierarchyMap& hierarchy, int K, uint64_t seed,
                         const CvTrainPlan& plan, int jobs = 1,
                         const DomainDataset* tdv_data = nullptr,
                         const TrainerFn& trainer = {});

// Deterministic seed for a training run keyed by the hyperparameter value,
// so duplicate grid points train identically and tie exactly.
uint64_t point_train_seed(uint64_t base, const HyperPoint& p, uint64_t salt);

}  // namespace hilearn::cv
