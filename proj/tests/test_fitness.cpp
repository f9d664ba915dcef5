#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <numeric>

#include "dbngomea/fitness.hpp"
#include "support.hpp"

using namespace dbngomea;
using Catch::Approx;

namespace {

NormalizedDataset grid_column(std::size_t n) {
  NormalizedDataset d;
  d.meta = testing::continuous_meta(1);
  d.columns = {std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) d.columns[0][i] = (i + 0.5) / n;
  d.n = n;
  d.normalization = {{0.0, 1.0}};
  return d;
}

NormalizedDataset mixed_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RawDataset raw;
  raw.meta = testing::continuous_meta(4);
  raw.meta.push_back(testing::discrete_var("d", 3));
  raw.columns.assign(5, std::vector<double>(n));
  for (std::size_t s = 0; s < n; ++s) {
    const double a = unit(rng);
    raw.columns[0][s] = a;
    raw.columns[1][s] = a * a + 0.1 * unit(rng);
    raw.columns[2][s] = unit(rng);
    raw.columns[3][s] = std::sin(3 * a) + 0.2 * unit(rng);
    raw.columns[4][s] = a < 0.3 ? 0 : (a < 0.7 ? 1 : 2);
  }
  return normalize(raw);
}

}  // namespace

TEST_CASE("uniform data under two equal-width bins has zero log-density", "[fitness]") {
  const auto d = grid_column(200);
  GenomeLayout layout(d.meta, 2, 2);
  EvaluatorOptions opts;
  opts.score.smoothing = false;
  DensityEvaluator eval(d, layout, opts);
  const auto b = eval.evaluate(layout.empty_genotype());
  CHECK(b.log_likelihood() == Approx(0.0).margin(1e-9));
}

TEST_CASE("complexity term counts joint parent configurations", "[fitness]") {
  CHECK(complexity_term(1, 5, 200) == Approx(4 * std::log(100.0)));
  CHECK(complexity_term(12, 5, 200) == Approx(12 * 4 * std::log(100.0)));

  const auto d = testing::chain_data(3, 200, 4);
  GenomeLayout layout(d.meta);
  DensityEvaluator eval(d, layout);
  auto g = layout.empty_genotype();
  g.bins = {3, 4, 5};
  g.edges[pair_index(0, 2, 3)] = 1;
  g.edges[pair_index(1, 2, 3)] = 1;
  const auto b = eval.evaluate(g);
  CHECK(b.penalty[2] == Approx(12 * 4 * std::log(100.0)));
  CHECK(b.penalty[0] == Approx(2 * std::log(100.0)));
  CHECK(b.total() == Approx(b.log_likelihood() - b.complexity()));
}

TEST_CASE("empty graph on discrete data has a closed form", "[fitness]") {
  Rng rng(9);
  NormalizedDataset d;
  d.meta = {testing::discrete_var("a", 2), testing::discrete_var("b", 4)};
  d.n = 100;
  d.columns.assign(2, std::vector<double>(100));
  d.normalization.assign(2, {0.0, 1.0});
  std::uniform_int_distribution<int> two(0, 1);
  std::uniform_int_distribution<int> four(0, 3);
  for (std::size_t s = 0; s < 100; ++s) {
    d.columns[0][s] = two(rng);
    d.columns[1][s] = four(rng);
  }
  GenomeLayout layout(d.meta);
  DensityEvaluator eval(d, layout);
  double expected = 0.0;
  for (std::size_t v = 0; v < 2; ++v) {
    const int card = d.meta[v].cardinality;
    std::vector<double> counts(static_cast<std::size_t>(card), 0.0);
    for (double x : d.columns[v]) counts[static_cast<std::size_t>(x)] += 1;
    for (double c : counts) expected += c * std::log((c + 1) / (100.0 + card));
    expected -= (card - 1) * std::log(50.0);
  }
  CHECK(eval.evaluate(layout.empty_genotype()).total() == Approx(expected).epsilon(1e-12));
}

TEST_CASE("an independent parent lowers fitness by exactly the penalty increase", "[fitness]") {
  NormalizedDataset d;
  d.meta = {testing::discrete_var("a", 2), testing::discrete_var("b", 3)};
  d.normalization.assign(2, {0.0, 1.0});
  d.columns.assign(2, {});
  for (int rep = 0; rep < 10; ++rep) {
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 3; ++b) {
        d.columns[0].push_back(a);
        d.columns[1].push_back(b);
      }
    }
  }
  d.n = d.columns[0].size();
  GenomeLayout layout(d.meta);
  EvaluatorOptions opts;
  opts.score.smoothing = false;
  DensityEvaluator eval(d, layout, opts);
  auto g = layout.empty_genotype();
  const auto before = eval.evaluate(g);
  g.edges[0] = 1;
  const auto after = eval.evaluate(g);
  CHECK(after.log_likelihood() == Approx(before.log_likelihood()).epsilon(1e-12));
  const double increase = after.complexity() - before.complexity();
  CHECK(increase == Approx(2 * std::log(d.n / 2.0)));
  CHECK(before.total() - after.total() == Approx(increase).epsilon(1e-12));
}

TEST_CASE("evaluate agrees with a reference implementation on every 3-node structure", "[fitness][oracle]") {
  const auto d = testing::chain_data(3, 500, 12);
  GenomeLayout layout(d.meta, 2, 2);
  DensityEvaluator eval(d, layout);
  const auto structures = testing::acyclic_edge_genes(3);
  CHECK(structures.size() == 25);
  for (const auto& e : structures) {
    Genotype g = layout.empty_genotype();
    g.edges = e;
    const auto parents = testing::parents_from_children(testing::children_of_genes(e, 3));
    CHECK(eval.evaluate(g).total() == Approx(testing::reference_fitness(d, parents, {2, 2, 2})).epsilon(1e-10));
  }
}

TEST_CASE("evaluate agrees with the reference on random mixed genotypes", "[fitness][oracle]") {
  const auto d = mixed_data(300, 3);
  GenomeLayout layout(d.meta, 2, 6);
  DensityEvaluator eval(d, layout);
  Rng rng(17);
  for (int t = 0; t < 300; ++t) {
    const auto g = repair_cycles(layout.random_genotype(rng), layout);
    std::vector<int> k(5);
    for (std::size_t v = 0; v < 4; ++v) k[v] = g.bins[v];
    k[4] = 3;
    const auto parents = testing::parents_from_children(testing::children_of_genes(g.edges, 5));
    REQUIRE(eval.evaluate(g).total() == Approx(testing::reference_fitness(d, parents, k)).epsilon(1e-10));
  }
}

TEST_CASE("partial evaluation matches full evaluation after single-gene changes", "[fitness][property]") {
  const auto d = mixed_data(250, 8);
  GenomeLayout layout(d.meta, 2, 8);
  EvaluatorOptions ef;
  ef.policy = Discretization::equal_frequency;
  for (const auto& opts : {EvaluatorOptions{}, ef}) {
    DensityEvaluator eval(d, layout, opts);
    Rng rng(99);
    auto g = repair_cycles(layout.random_genotype(rng), layout);
    auto cache = eval.make_cache(g);
    std::uniform_int_distribution<std::size_t> pick(0, layout.n_genes() - 1);
    for (int t = 0; t < 6000; ++t) {
      const auto gene = pick(rng);
      auto next = g;
      const int alphabet = layout.alphabet_size(gene);
      const int current = layout.symbol(gene, g.gene(gene));
      const int shift = std::uniform_int_distribution<int>(1, alphabet - 1)(rng);
      next.set_gene(gene, layout.value_of_symbol(gene, (current + shift) % alphabet));
      repair_cycles_in_place(next, layout);
      const auto changed = changed_genes(g, next);
      const auto& partial = eval.partial_evaluate(next, changed, cache);
      const auto full = eval.evaluate(next);
      for (std::size_t v = 0; v < 5; ++v) {
        REQUIRE(partial.log_density[v] == Approx(full.log_density[v]).margin(1e-9));
        REQUIRE(partial.penalty[v] == Approx(full.penalty[v]).margin(1e-9));
      }
      REQUIRE(partial.total() == Approx(full.total()).margin(1e-9));
      g = next;
    }
  }
}

TEST_CASE("partial evaluation rescores only the affected nodes", "[fitness]") {
  const auto d = testing::chain_data(4, 200, 5);
  GenomeLayout layout(d.meta);
  DensityEvaluator eval(d, layout);
  auto g = layout.empty_genotype(3);
  g.edges[pair_index(1, 2, 4)] = 1;
  g.edges[pair_index(1, 3, 4)] = 1;
  auto cache = eval.make_cache(g);

  eval.partial_evaluate(g, {}, cache);
  CHECK(cache.last_recomputed == 0);

  auto a = g;
  a.edges[pair_index(0, 2, 4)] = 1;
  const std::vector<std::size_t> ca{pair_index(0, 2, 4)};
  eval.partial_evaluate(a, ca, cache);
  CHECK(cache.last_recomputed == 1);
  CHECK(cache.breakdown.total() == Approx(eval.evaluate(a).total()));

  auto b = a;
  b.bins[1] = 6;
  const std::vector<std::size_t> cb{layout.gene_of_var(1)};
  eval.partial_evaluate(b, cb, cache);
  CHECK(cache.last_recomputed == 3);
  CHECK(cache.breakdown.total() == Approx(eval.evaluate(b).total()));
}

TEST_CASE("a stale cache is a contract violation", "[fitness]") {
  const auto d = testing::chain_data(3, 100, 5);
  GenomeLayout layout(d.meta);
  DensityEvaluator eval(d, layout);
  auto cache = eval.make_cache(layout.empty_genotype());
  auto g = layout.empty_genotype();
  g.edges[0] = 1;
  g.edges[1] = 1;
  const std::vector<std::size_t> only_first{0};
  CHECK_THROWS_AS(eval.partial_evaluate(g, only_first, cache), contract_violation);
  CHECK_THROWS_WITH(eval.partial_evaluate(g, only_first, cache), Catch::Matchers::ContainsSubstring("stale"));
}

TEST_CASE("fitness is invariant to affine rescaling of raw columns", "[fitness][property]") {
  Rng rng(31);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RawDataset raw;
  raw.meta = testing::continuous_meta(3);
  raw.columns.assign(3, std::vector<double>(200));
  for (std::size_t s = 0; s < 200; ++s) {
    raw.columns[0][s] = unit(rng);
    raw.columns[1][s] = raw.columns[0][s] + 0.3 * unit(rng);
    raw.columns[2][s] = unit(rng) * unit(rng);
  }
  RawDataset scaled = raw;
  for (std::size_t v = 0; v < 3; ++v) {
    for (auto& x : scaled.columns[v]) x = (3.0 + static_cast<double>(v)) * x - 17.5;
  }
  const auto a = normalize(raw);
  const auto b = normalize(scaled);
  GenomeLayout layout(a.meta, 2, 9);
  for (auto policy : {Discretization::equal_width, Discretization::equal_frequency}) {
    EvaluatorOptions opts;
    opts.policy = policy;
    DensityEvaluator ea(a, layout, opts);
    DensityEvaluator eb(b, layout, opts);
    for (int t = 0; t < 200; ++t) {
      const auto g = repair_cycles(layout.random_genotype(rng), layout);
      REQUIRE(ea.evaluate(g).total() == Approx(eb.evaluate(g).total()).margin(1e-9));
    }
  }
}

TEST_CASE("adding a parent never decreases the complexity penalty", "[fitness][property]") {
  const auto d = mixed_data(100, 2);
  GenomeLayout layout(d.meta, 2, 7);
  DensityEvaluator eval(d, layout);
  Rng rng(4);
  for (int t = 0; t < 2000; ++t) {
    auto g = repair_cycles(layout.random_genotype(rng), layout);
    const auto empty_gene = std::find(g.edges.begin(), g.edges.end(), 0);
    if (empty_gene == g.edges.end()) continue;
    auto h = g;
    h.edges[static_cast<std::size_t>(empty_gene - g.edges.begin())] = 1;
    if (!is_acyclic(h, layout)) continue;
    REQUIRE(eval.evaluate(h).complexity() >= eval.evaluate(g).complexity());
  }
}

TEST_CASE("equal-frequency bins need enough distinct values", "[fitness]") {
  NormalizedDataset d;
  d.meta = testing::continuous_meta(1);
  d.columns = {{0.0, 0.0, 0.5, 0.5, 1.0, 1.0}};
  d.n = 6;
  d.normalization = {{0.0, 1.0}};
  GenomeLayout layout(d.meta, 2, 5);
  EvaluatorOptions opts;
  opts.policy = Discretization::equal_frequency;
  DensityEvaluator eval(d, layout, opts);
  CHECK(eval.evaluate(layout.empty_genotype(3)).valid());
  const auto bad = eval.evaluate(layout.empty_genotype(5));
  CHECK_FALSE(bad.valid());
  CHECK(bad.total() == -std::numeric_limits<double>::infinity());
}

TEST_CASE("model_of and evaluate_model reproduce the genotype fitness", "[fitness]") {
  const auto d = mixed_data(300, 6);
  Rng rng(8);
  for (auto policy : {Discretization::equal_width, Discretization::equal_frequency}) {
    GenomeLayout layout(d.meta, 2, 9);
    EvaluatorOptions opts;
    opts.policy = policy;
    DensityEvaluator eval(d, layout, opts, &d);
    for (int t = 0; t < 50; ++t) {
      const auto g = repair_cycles(layout.random_genotype(rng), layout);
      const auto full = eval.evaluate(g);
      if (!full.valid()) continue;
      const auto model = eval.model_of(g);
      const auto direct = evaluate_model(model, d, {}, &d);
      REQUIRE(direct.total() == Approx(full.total()).epsilon(1e-10));
      REQUIRE(model_complexity(model, d.n) == Approx(full.complexity()).epsilon(1e-12));
      // the training set as its own reference set gives back the log-likelihood
      REQUIRE(full.reference_log_likelihood() == Approx(full.log_likelihood()).epsilon(1e-10));

      FittedModel fitted(model, d);
      double sum = 0.0;
      std::vector<double> row(d.n_vars());
      for (std::size_t s = 0; s < d.n; ++s) {
        for (std::size_t v = 0; v < d.n_vars(); ++v) row[v] = d.columns[v][s];
        sum += fitted.log_density(row);
      }
      REQUIRE(sum == Approx(full.log_likelihood()).epsilon(1e-10));
    }
  }
}

TEST_CASE("samples from a fitted model follow its bin probabilities", "[fitness]") {
  const auto d = testing::chain_data(2, 400, 3);
  GenomeLayout layout(d.meta, 2, 4);
  DensityEvaluator eval(d, layout);
  auto g = layout.empty_genotype(4);
  g.edges[0] = 1;
  const auto model = eval.model_of(g);
  FittedModel fitted(model, d);
  Rng rng(5);
  const std::size_t m = 40000;
  const auto draws = fitted.sample(m, rng);
  const auto bins = assign_bins(draws, model);
  std::vector<double> counts(4, 0.0);
  for (std::size_t s = 0; s < m; ++s) counts[bins.bins[0][s]] += 1;
  for (int b = 0; b < 4; ++b) {
    const double p = fitted.probability(0, {}, b);
    const double sd = std::sqrt(p * (1 - p) / m);
    CHECK(std::abs(counts[static_cast<std::size_t>(b)] / m - p) < 4 * sd);
  }
  for (std::size_t s = 0; s < m; ++s) {
    REQUIRE(draws.columns[0][s] >= 0.0);
    REQUIRE(draws.columns[0][s] <= 1.0);
  }
}
