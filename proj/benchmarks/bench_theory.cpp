#include <benchmark/benchmark.h>

#include "hilearn/theory.hpp"

using namespace hilearn;
using namespace hilearn::theory;

static void RandomInstanceGeneration(benchmark::State& state) {
  Rng rng(7);
  for (auto _ : state) {
    Instance inst = random_instance_satisfying_a(rng);
    benchmark::DoNotOptimize(inst.family.reference.pmf.data());
  }
}
BENCHMARK(RandomInstanceGeneration)->Unit(benchmark::kMicrosecond);

static void ArgminInclusionVerification(benchmark::State& state) {
  Rng rng(8);
  Instance inst = random_instance_satisfying_a(rng);
  HierarchyMap g = inst.hierarchy();
  for (auto _ : state) {
    InclusionResult res = verify_argmin_inclusion(
        inst.family, inst.projections, CvCriterion::kMethodII, g, inst.epsilon);
    benchmark::DoNotOptimize(res.verdict);
  }
}
BENCHMARK(ArgminInclusionVerification)->Unit(benchmark::kMicrosecond);

static void WorstCaseRisk(benchmark::State& state) {
  Rng rng(9);
  Instance inst = random_instance_satisfying_a(rng);
  Projection proj{true, true};
  ConditionalTable p = exact_conditional(inst.family.reference, proj);
  for (auto _ : state) {
    double r = r_ood_exact(inst.family, proj, p);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(WorstCaseRisk)->Unit(benchmark::kMicrosecond);
