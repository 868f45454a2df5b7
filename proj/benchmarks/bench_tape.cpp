#include <benchmark/benchmark.h>

#include "hilearn/datagen.hpp"
#include "hilearn/objective.hpp"

using namespace hilearn;

namespace {

struct Syn1Fixture {
  DomainDataset target;
  std::vector<DomainDataset> ads;
  Architecture arch{2, {20, 20}, 1, 3, 2, false};
  ModelBundle bundle;

  Syn1Fixture() {
    target = data::gen_syn1(50.0, 2000, 1);
    HierarchyMap g = data::syn1_hierarchy();
    for (double e : {-100.0, -50.0, 0.0, 50.0, 100.0})
      ads.push_back(data::coarsen_dataset(data::gen_syn1(e, 1000, 2), g));
    bundle = init_bundle(arch, 3);
  }
};

const Syn1Fixture& fixture() {
  static Syn1Fixture f;
  return f;
}

}  // namespace

static void ObjectiveValue(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    double v = total_objective(f.target, f.ads, f.bundle, 100.0);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(ObjectiveValue)->Unit(benchmark::kMillisecond);

static void ObjectiveGradient(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    ad::ParamVector g = objective_gradient(f.target, f.ads, f.bundle, 100.0);
    benchmark::DoNotOptimize(g.values.data());
  }
}
BENCHMARK(ObjectiveGradient)->Unit(benchmark::kMillisecond);

static void TrainEpochs(benchmark::State& state) {
  const auto& f = fixture();
  TrainConfig cfg;
  cfg.learning_rate = 0.0115;
  cfg.l2_coef = 0.01;
  cfg.max_epoch = static_cast<int>(state.range(0));
  cfg.t_threshold = 0;
  cfg.lambda_after = 100.0;
  cfg.seed = 5;
  for (auto _ : state) {
    ModelBundle b = train(f.target, f.ads, f.arch, cfg);
    benchmark::DoNotOptimize(b.params.values.data());
  }
}
BENCHMARK(TrainEpochs)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);
