#include <doctest.h>

#include <cmath>

#include "hilearn/baselines.hpp"
#include "hilearn/datagen.hpp"
#include "hilearn/rng.hpp"

using namespace hilearn;
using namespace hilearn::baselines;

namespace {

// Two separable clusters in the first coordinate, three fine labels with the
// middle class split off by sign of the second coordinate.
DomainDataset toy_fine(Rng& rng, int n) {
  DomainDataset d;
  d.domain_id = "toy";
  d.level = LabelLevel::kFine;
  d.label_count = 3;
  d.inputs.resize(n, 2);
  d.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    int y = i % 3;
    d.labels[i] = y;
    double base = y == 0 ? -3.0 : (y == 1 ? 0.0 : 3.0);
    d.inputs(i, 0) = base + rng.normal(0.0, 0.4);
    d.inputs(i, 1) = rng.normal(0.0, 0.4);
  }
  return d;
}

}  // namespace

TEST_CASE("ERM equals the invariant trainer with the penalty switched off") {
  Rng rng(1);
  DomainDataset target = toy_fine(rng, 30);
  HierarchyMap g(3, 2, {0, 1, 1});
  std::vector<DomainDataset> ads = {
      data::coarsen_dataset(toy_fine(rng, 24), g)};
  Architecture arch{2, {5}, 3, 3, 2, false};
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.l2_coef = 0.01;
  cfg.max_epoch = 40;
  cfg.seed = 11;

  ModelBundle erm = train_erm(target, arch, cfg);

  TrainConfig zero = cfg;
  zero.t_threshold = 0;
  zero.lambda_after = 0.0;
  ModelBundle with_ads = train(target, ads, arch, zero);
  CHECK((erm.params.values - with_ads.params.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ERM fits a separable toy task") {
  Rng rng(2);
  DomainDataset target = toy_fine(rng, 90);
  Architecture arch{2, {8}, 4, 3, 2, false};
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.max_epoch = 500;
  cfg.seed = 3;
  ModelBundle b = train_erm(target, arch, cfg);
  CHECK(empirical_risk_fine(target, b) < 0.05);
}

TEST_CASE("pretraining reaches a sub-coin coarse risk on balanced pooled data") {
  Rng rng(4);
  HierarchyMap g(3, 2, {0, 1, 1});
  std::vector<DomainDataset> ads = {data::coarsen_dataset(toy_fine(rng, 60), g),
                                    data::coarsen_dataset(toy_fine(rng, 60), g)};
  DomainDataset pooled = pool_as_fine_task(ads);
  CHECK(pooled.n() == 120);
  CHECK(pooled.label_count == 2);

  Architecture pre{2, {8}, 4, 2, 2, false};
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.max_epoch = 300;
  cfg.seed = 5;
  ModelBundle b = train(pooled, {}, pre, cfg);
  CHECK(empirical_risk_fine(pooled, b) < std::log(2.0));
}

TEST_CASE("frozen-feature phase 2 never touches the feature map") {
  Rng rng(6);
  DomainDataset target = toy_fine(rng, 45);
  HierarchyMap g(3, 2, {0, 1, 1});
  std::vector<DomainDataset> ads = {data::coarsen_dataset(toy_fine(rng, 30), g)};
  Architecture arch{2, {6}, 3, 3, 2, true};
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.l2_coef = 0.001;
  cfg.max_epoch = 60;
  cfg.seed = 21;

  ModelBundle fe = train_frozen(target, ads, arch, cfg);

  // Reproduce phase 1 and compare the feature-map block bit for bit.
  DomainDataset pooled = pool_as_fine_task(ads);
  Architecture pre = arch;
  pre.y_count = 2;
  TrainConfig cfg1 = cfg;
  cfg1.seed = derive_seed(cfg.seed, "pretrain");
  ModelBundle pretrained = train(pooled, {}, pre, cfg1);
  for (int l = 0; l < arch.phi_param_count(); ++l) {
    CHECK((fe.params.matrix(l) - pretrained.params.matrix(l)).cwiseAbs().maxCoeff() ==
          0.0);
  }

  // Fine-tune should move the feature map.
  ModelBundle ft = train_finetune(target, ads, arch, cfg);
  double moved = 0.0;
  for (int l = 0; l < arch.phi_param_count(); ++l)
    moved += (ft.params.matrix(l) - pretrained.params.matrix(l)).cwiseAbs().sum();
  CHECK(moved > 0.0);
}

TEST_CASE("head gradient norm shrinks over the frozen phase on separable features") {
  Rng rng(7);
  DomainDataset target = toy_fine(rng, 60);
  HierarchyMap g(3, 2, {0, 1, 1});
  std::vector<DomainDataset> ads = {data::coarsen_dataset(toy_fine(rng, 45), g)};
  Architecture arch{2, {8}, 4, 3, 2, true};
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.max_epoch = 400;
  cfg.seed = 8;

  ModelBundle fe = train_frozen(target, ads, arch, cfg);

  // Rebuild the phase-2 starting point: pretrained features, fresh heads.
  DomainDataset pooled = pool_as_fine_task(ads);
  Architecture pre = arch;
  pre.y_count = 2;
  TrainConfig cfg1 = cfg;
  cfg1.seed = derive_seed(cfg.seed, "pretrain");
  ModelBundle pretrained = train(pooled, {}, pre, cfg1);
  ModelBundle start = init_bundle(arch, derive_seed(cfg.seed, "head-init"));
  for (int l = 0; l < arch.phi_param_count(); ++l)
    start.params.set_matrix(l, pretrained.params.matrix(l));

  auto head_grad_norm = [&](const ModelBundle& b) {
    ad::ParamVector grad = objective_gradient(target, {}, b, 0.0);
    int ti = b.target_head_index();
    double s = 0.0;
    for (int l = ti; l < ti + 2; ++l) {
      MatrixXd m = grad.matrix(l);
      s += m.squaredNorm();
    }
    return std::sqrt(s);
  };
  CHECK(head_grad_norm(fe) < head_grad_norm(start));
  CHECK(empirical_risk_fine(target, fe) < empirical_risk_fine(target, start));
}

TEST_CASE("fine-tune on the target's own coarsening approaches ERM quality") {
  Rng rng(9);
  DomainDataset target = toy_fine(rng, 90);
  HierarchyMap g(3, 2, {0, 1, 1});
  std::vector<DomainDataset> ads = {data::coarsen_dataset(target, g)};
  Architecture arch{2, {8}, 4, 3, 2, true};
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.max_epoch = 500;
  cfg.seed = 10;

  ModelBundle ft = train_finetune(target, ads, arch, cfg);
  ModelBundle erm = train_erm(target, arch, cfg);
  double rft = empirical_risk_fine(target, ft);
  double rerm = empirical_risk_fine(target, erm);
  CHECK(rft < rerm + 0.05);
}

TEST_CASE("transfer baselines require auxiliary data") {
  Rng rng(12);
  DomainDataset target = toy_fine(rng, 12);
  Architecture arch{2, {4}, 2, 3, 2, false};
  TrainConfig cfg;
  cfg.max_epoch = 1;
  CHECK_THROWS_AS(train_finetune(target, {}, arch, cfg), InputError);
  CHECK_THROWS_AS(train_frozen(target, {}, arch, cfg), InputError);
}
