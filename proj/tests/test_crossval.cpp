#include <doctest.h>

#include <cmath>
#include <set>

#include "hilearn/crossval.hpp"
#include "hilearn/datagen.hpp"
#include "hilearn/rng.hpp"

using namespace hilearn;
using namespace hilearn::cv;

namespace {

DomainDataset fine_ds(const MatrixXd& X, std::vector<int> labels, int y_count) {
  DomainDataset d;
  d.domain_id = "t";
  d.level = LabelLevel::kFine;
  d.inputs = X;
  d.labels = std::move(labels);
  d.label_count = y_count;
  return d;
}

DomainDataset random_fine(Rng& rng, int n, int y_count, const std::string& id) {
  DomainDataset d;
  d.domain_id = id;
  d.level = LabelLevel::kFine;
  d.label_count = y_count;
  d.inputs.resize(n, 2);
  d.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    d.inputs(i, 0) = rng.uniform(-2, 2);
    d.inputs(i, 1) = rng.uniform(-2, 2);
    d.labels[i] = rng.uniform_int(y_count);
  }
  return d;
}

// Random surjective table with |Z| >= 2.
HierarchyMap random_hierarchy(Rng& rng, int y_count) {
  int zc = 2 + (y_count > 2 ? rng.uniform_int(y_count - 2) : 0);
  std::vector<int> table(y_count);
  for (int i = 0; i < zc; ++i) table[i] = i;
  for (int i = zc; i < y_count; ++i) table[i] = rng.uniform_int(zc);
  rng.shuffle(table);
  return HierarchyMap(y_count, zc, table);
}

double fine_risk_direct(const DomainDataset& d, const ModelBundle& b) {
  MatrixXd lp = target_log_probs(b, d.inputs);
  double acc = 0.0;
  for (int i = 0; i < d.n(); ++i) acc -= lp(i, d.labels[i]);
  return acc / d.n();
}

}  // namespace

TEST_CASE("kfold_split produces balanced, seeded, exhaustive folds") {
  FoldAssignment fa = kfold_split({10}, 10, 3);
  for (int k = 0; k < 10; ++k) CHECK(fa.indices_in(0, k).size() == 1);

  FoldAssignment fb = kfold_split({10}, 2, 3);
  CHECK(fb.indices_in(0, 0).size() == 5);
  CHECK(fb.indices_in(0, 1).size() == 5);

  FoldAssignment fc = kfold_split({10, 25}, 2, 9);
  FoldAssignment fd = kfold_split({10, 25}, 2, 9);
  CHECK(fc.fold_of == fd.fold_of);
  FoldAssignment fe = kfold_split({10, 25}, 2, 10);
  CHECK(fc.fold_of != fe.fold_of);

  // every index appears exactly once across folds
  std::set<int> seen;
  for (int k = 0; k < 2; ++k)
    for (int i : fc.indices_in(1, k)) CHECK(seen.insert(i).second);
  CHECK(seen.size() == 25);

  CHECK_THROWS_AS(kfold_split({5}, 6, 0), InputError);
  CHECK_THROWS_AS(kfold_split({5}, 1, 0), InputError);
}

TEST_CASE("coarse_prior is the empirical fraction") {
  MatrixXd X = MatrixXd::Zero(10, 1);
  DomainDataset d;
  d.domain_id = "a";
  d.level = LabelLevel::kCoarse;
  d.inputs = X;
  d.label_count = 2;
  d.labels = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  CHECK(coarse_prior(d, 1) == 1.0);
  d.labels = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  CHECK(coarse_prior(d, 0) == 0.5);
  d.labels = {0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
  CHECK(coarse_prior(d, 0) == doctest::Approx(0.3));
}

TEST_CASE("correction term: singleton stratum contributes exactly zero") {
  HierarchyMap g(3, 2, {0, 1, 1});
  Architecture arch{1, {}, 1, 3, 2, false};
  ModelBundle b = init_bundle(arch, 9);
  MatrixXd X(3, 1);
  X << 0.1, -0.5, 2.0;
  DomainDataset d = fine_ds(X, {0, 0, 0}, 3);
  CHECK(correction_term(d, b, g, 0) == 0.0);
}

TEST_CASE("correction term: hand-built renormalized probabilities 0.6 and 0.4") {
  HierarchyMap g(3, 2, {0, 1, 1});
  Architecture arch{1, {}, 1, 3, 2, false};
  ModelBundle b;
  b.arch = arch;
  b.params = ad::ParamVector::zeros(arch.param_shapes());
  b.params.set_matrix(0, MatrixXd::Constant(1, 1, 1.0));  // h = x
  MatrixXd wt(1, 3);
  wt << 0.0, std::log(1.5), 0.0;
  b.params.set_matrix(b.target_head_index(), wt);

  MatrixXd X(2, 1);
  X << 1.0, -1.0;  // renormalized p(y=1 | z=1) = 0.6 and 0.4
  DomainDataset d = fine_ds(X, {1, 1}, 3);
  double expected = -(std::log(0.6) + std::log(0.4)) / 2.0;
  CHECK(correction_term(d, b, g, 1) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.713558).epsilon(1e-6));
}

TEST_CASE("correction term: uniform predictor over a 2-preimage stratum is ln 2") {
  HierarchyMap g(3, 2, {0, 1, 1});
  Architecture arch{2, {}, 1, 3, 2, false};
  ModelBundle b;
  b.arch = arch;
  b.params = ad::ParamVector::zeros(arch.param_shapes());
  DomainDataset d = fine_ds(MatrixXd::Random(4, 2), {1, 2, 1, 2}, 3);
  CHECK(correction_term(d, b, g, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(correction_term(d, b, g, 0), DegenerateConditionalError);
}

TEST_CASE("empirical identity: coarse risk + prior-weighted corrections = fine risk") {
  // Master unit test of the whole module, exercised across random bundles,
  // datasets and hierarchies. Priors and corrections come from the same
  // sample, so the strata recombine into the plain mean exactly.
  Rng rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    int y_count = 2 + rng.uniform_int(5);
    HierarchyMap g = random_hierarchy(rng, y_count);
    Architecture arch{2, {3}, 2, y_count, g.coarse_count(), false};
    ModelBundle b = init_bundle(arch, 1000 + trial);
    DomainDataset fine = random_fine(rng, 3 + rng.uniform_int(40), y_count, "d");
    DomainDataset coarse = data::coarsen_dataset(fine, g);

    double lhs = coarse_pushforward_risk(coarse, b, g);
    for (int z : g.ambiguous_labels()) {
      double prior = coarse_prior(coarse, z);
      if (prior == 0.0) continue;
      lhs += prior * correction_term(fine, b, g, z);
    }
    double rhs = empirical_risk_fine(fine, b);
    CHECK(std::fabs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("fold estimate: bijective hierarchy collapses both methods") {
  HierarchyMap g(3, 3, {0, 1, 2});
  Architecture arch{2, {3}, 2, 3, 3, false};
  ModelBundle b = init_bundle(arch, 5);
  Rng rng(6);
  DomainDataset target = random_fine(rng, 12, 3, "t");
  std::vector<DomainDataset> ads = {
      data::coarsen_dataset(random_fine(rng, 10, 3, "a"), g)};
  Eigen::MatrixXd priors(1, 3);
  for (int z = 0; z < 3; ++z) priors(0, z) = coarse_prior(ads[0], z);
  FoldInputs in{&target, &ads, &target, &priors};
  double m1 = fold_ood_estimate(b, CvMethod::kMethodI, in, g);
  double m2 = fold_ood_estimate(b, CvMethod::kMethodII, in, g);
  CHECK(m1 == doctest::Approx(m2).epsilon(1e-12));
}

TEST_CASE("fold estimate: with no ad domains both methods return the fine risk") {
  HierarchyMap g(3, 2, {0, 1, 1});
  Architecture arch{2, {3}, 2, 3, 2, false};
  ModelBundle b = init_bundle(arch, 7);
  Rng rng(8);
  DomainDataset target = random_fine(rng, 9, 3, "t");
  std::vector<DomainDataset> ads;
  Eigen::MatrixXd priors(0, 2);
  FoldInputs in{&target, &ads, &target, &priors};
  double fine = fine_risk_direct(target, b);
  CHECK(fold_ood_estimate(b, CvMethod::kMethodI, in, g) == doctest::Approx(fine));
  CHECK(fold_ood_estimate(b, CvMethod::kMethodII, in, g) == doctest::Approx(fine));
}

TEST_CASE("fold estimate: corrected ad entry reproduces the fine risk on shared data") {
  // The ad domain is the coarsening of the target fold itself, so the
  // corrected entry must reproduce the directly computed fine risk.
  HierarchyMap g(3, 2, {0, 1, 1});
  Architecture arch{2, {4}, 2, 3, 2, false};
  ModelBundle b = init_bundle(arch, 17);
  Rng rng(18);
  DomainDataset target = random_fine(rng, 10, 3, "t");
  std::vector<DomainDataset> ads = {data::coarsen_dataset(target, g)};
  Eigen::MatrixXd priors(1, 2);
  priors(0, 0) = coarse_prior(ads[0], 0);
  priors(0, 1) = coarse_prior(ads[0], 1);
  FoldInputs in{&target, &ads, &target, &priors};
  double fine = fine_risk_direct(target, b);
  CHECK(fold_ood_estimate(b, CvMethod::kMethodII, in, g) ==
        doctest::Approx(fine).epsilon(1e-12));
}

TEST_CASE("method II dominates method I when corrections are non-negative") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    int y_count = 3 + rng.uniform_int(3);
    HierarchyMap g = random_hierarchy(rng, y_count);
    Architecture arch{2, {3}, 2, y_count, g.coarse_count(), false};
    ModelBundle b = init_bundle(arch, 300 + trial);
    DomainDataset target = random_fine(rng, 15, y_count, "t");
    std::vector<DomainDataset> ads;
    Eigen::MatrixXd priors(2, g.coarse_count());
    for (int e = 0; e < 2; ++e) {
      ads.push_back(data::coarsen_dataset(
          random_fine(rng, 12, y_count, "a" + std::to_string(e)), g));
      for (int z = 0; z < g.coarse_count(); ++z)
        priors(e, z) = coarse_prior(ads[e], z);
    }
    FoldInputs in{&target, &ads, &target, &priors};
    CHECK(fold_ood_estimate(b, CvMethod::kMethodII, in, g) >=
          fold_ood_estimate(b, CvMethod::kMethodI, in, g) - 1e-12);
  }
}

namespace {

// Stub trainer: puts lambda_after into the target-head bias of class 1 so
// validation risks vary deterministically with the grid point.
TrainerFn stub_trainer() {
  return [](const DomainDataset&, const std::vector<DomainDataset>&,
            const Architecture& arch, const TrainConfig& cfg) {
    ModelBundle b;
    b.arch = arch;
    b.params = ad::ParamVector::zeros(arch.param_shapes());
    MatrixXd bias = MatrixXd::Zero(1, arch.y_count);
    bias(0, 1) = cfg.lambda_after;
    b.params.set_matrix(b.target_head_index() + 1, bias);
    return b;
  };
}

}  // namespace

TEST_CASE("select_hyperparams: singleton grid, duplicate ties, grid permutation") {
  HierarchyMap g(3, 2, {0, 1, 1});
  Rng rng(50);
  DomainDataset target = random_fine(rng, 30, 3, "t");
  for (int& y : target.labels) y = 1;  // class-1 bias helps: risk decreasing
  std::vector<DomainDataset> ads = {
      data::coarsen_dataset(random_fine(rng, 20, 3, "a"), g)};
  CvTrainPlan plan;
  plan.arch = Architecture{2, {3}, 2, 3, 2, false};
  plan.base.max_epoch = 1;

  CvReport one = select_hyperparams({{0, 2.0}}, target, ads, g, 3,
                                    CvMethod::kMethodI, 11, plan, 1, stub_trainer());
  CHECK(one.selected == 0);

  CvReport dup = select_hyperparams({{0, 2.0}, {0, 2.0}, {0, 2.0}}, target, ads, g,
                                    3, CvMethod::kMethodI, 11, plan, 1,
                                    stub_trainer());
  CHECK(dup.selected == 0);
  CHECK(dup.scores[0] == dup.scores[1]);  // identical points tie exactly

  std::vector<HyperPoint> grid = {{0, 0.0}, {0, 1.0}, {0, 3.0}};
  CvReport fwd = select_hyperparams(grid, target, ads, g, 3, CvMethod::kMethodII,
                                    11, plan, 1, stub_trainer());
  std::vector<HyperPoint> rev(grid.rbegin(), grid.rend());
  CvReport bwd = select_hyperparams(rev, target, ads, g, 3, CvMethod::kMethodII,
                                    11, plan, 1, stub_trainer());
  CHECK(fwd.selected_point() == bwd.selected_point());
}

TEST_CASE("cv reports are byte-identical across reruns with one seed") {
  HierarchyMap g(3, 2, {0, 1, 1});
  Rng rng(60);
  DomainDataset target = random_fine(rng, 24, 3, "t");
  std::vector<DomainDataset> ads = {
      data::coarsen_dataset(random_fine(rng, 18, 3, "a"), g)};
  CvTrainPlan plan;
  plan.arch = Architecture{2, {3}, 1, 3, 2, false};
  plan.base.learning_rate = 0.05;
  plan.base.max_epoch = 5;
  std::vector<HyperPoint> grid = {{0, 0.0}, {2, 10.0}};

  CvReport a = select_hyperparams(grid, target, ads, g, 3, CvMethod::kMethodII, 4,
                                  plan, 2);
  CvReport b = select_hyperparams(grid, target, ads, g, 3, CvMethod::kMethodII, 4,
                                  plan, 2);
  CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("baseline selectors: LODCV arithmetic and input checks, TDV oracle") {
  HierarchyMap g(3, 2, {0, 1, 1});
  Rng rng(70);
  DomainDataset target = random_fine(rng, 20, 3, "t");
  std::vector<DomainDataset> ads = {
      data::coarsen_dataset(random_fine(rng, 15, 3, "a0"), g),
      data::coarsen_dataset(random_fine(rng, 15, 3, "a1"), g)};
  CvTrainPlan plan;
  plan.arch = Architecture{2, {3}, 2, 3, 2, false};
  plan.base.max_epoch = 1;

  CHECK_THROWS_AS(baseline_select(BaselineSelector::kLODCV, {{0, 1.0}}, target,
                                  {ads[0]}, g, 3, 1, plan, 1),
                  InputError);

  CvReport lod = baseline_select(BaselineSelector::kLODCV, {{0, 1.0}}, target, ads,
                                 g, 3, 1, plan, 1, nullptr, stub_trainer());
  ModelBundle stub = stub_trainer()(target, ads, plan.arch, TrainConfig{});
  TrainConfig cfg1;
  cfg1.lambda_after = 1.0;
  ModelBundle stub1 = stub_trainer()(target, ads, plan.arch, cfg1);
  double expect = (coarse_pushforward_risk(ads[0], stub1, g) +
                   coarse_pushforward_risk(ads[1], stub1, g)) /
                  2.0;
  CHECK(lod.scores[0] == doctest::Approx(expect).epsilon(1e-12));

  // TDV selects the grid point with the best held-out test-domain accuracy.
  DomainDataset tdv = random_fine(rng, 16, 3, "test");
  for (int& y : tdv.labels) y = 1;
  CvReport sel = baseline_select(BaselineSelector::kTDV, {{0, 0.0}, {0, 5.0}},
                                 target, ads, g, 3, 1, plan, 1, &tdv,
                                 stub_trainer());
  CHECK(sel.oracle_selection);
  CHECK(sel.selected == 1);  // bias 5 on class 1 predicts the tdv labels
  CHECK(sel.scores[1] == doctest::Approx(0.0));
  CHECK_THROWS_AS(baseline_select(BaselineSelector::kTDV, {{0, 0.0}}, target, ads,
                                  g, 3, 1, plan, 1, nullptr),
                  InputError);
}
