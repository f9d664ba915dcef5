// Generates a small network, samples it, learns structure and bin counts and
// compares the result with the truth.

#include <cstdio>

#include "dbngomea/datagen.hpp"
#include "dbngomea/metrics.hpp"
#include "dbngomea/postopt.hpp"
#include "dbngomea/sogomea.hpp"

using namespace dbngomea;

int main() {
  Rng gen(7);
  const auto truth = random_network(6, DistributionKind::equal_width, gen);
  const auto raw = sample(truth, 3200, gen);
  const auto data = normalize(raw);

  GenomeLayout layout(data.meta);
  DensityEvaluator eval(data, layout);
  LearnerConfig config;
  config.budget.max_seconds = 5.0;
  Rng rng(11);
  const auto result = run(config, eval, rng);
  const auto model = eval.model_of(result.best.genotype);

  std::printf("evaluations %llu, fitness %.3f\n", static_cast<unsigned long long>(result.evaluations),
              result.best.fitness());
  std::printf("true edges:");
  for (auto [a, b] : truth.dag.edges()) std::printf(" %zu->%zu", a, b);
  std::printf("\nlearned:   ");
  for (auto [a, b] : model.dag.edges()) std::printf(" %zu->%zu", a, b);
  const auto s = structure_score(model.dag, truth.dag);
  std::printf("\naccuracy %.3f sensitivity %.3f\n", s.accuracy(), s.sensitivity());

  PostOptConfig pc;
  const auto po = optimize_boundaries(model, data, pc, rng);
  std::printf("boundary optimization: %.3f -> %.3f\n", po.fitness_before, po.fitness_after);
}
