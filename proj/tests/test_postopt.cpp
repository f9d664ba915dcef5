#include <catch2/catch_amalgamated.hpp>

#include "dbngomea/postopt.hpp"
#include "dbngomea/sogomea.hpp"
#include "support.hpp"

using namespace dbngomea;
using Catch::Approx;

namespace {

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

SolutionModel ew_model(Dag dag, std::vector<int> bins) {
  SolutionModel m;
  m.dag = std::move(dag);
  m.bins = bins;
  for (int k : bins) m.boundaries.push_back(equal_width(k, 2, 15));
  return m;
}

NormalizedDataset one_column(std::vector<double> x) {
  NormalizedDataset d;
  d.meta = testing::continuous_meta(1);
  d.n = x.size();
  d.columns = {std::move(x)};
  d.normalization = {{0.0, 1.0}};
  return d;
}

class WorseningOptimizer : public RealValuedOptimizer {
 public:
  RealValuedResult maximize(const RealValuedProblem& problem, std::span<const double>, std::uint64_t,
                            Rng&) override {
    RealValuedResult r;
    r.best = problem.lower;  // all cuts squeezed to the left
    r.best_value = problem.objective(r.best);
    r.evaluations = 1;
    return r;
  }
};

}  // namespace

TEST_CASE("decode_boundary takes the midpoint after rounding down", "[postopt]") {
  const std::vector<double> u{1.0, 2.0, 3.0};
  CHECK(decode_boundary(u, 0.3) == 1.5);
  CHECK(decode_boundary(u, 1.7) == 2.5);
  CHECK(decode_boundary(std::vector<double>{0.0, 1.0}, 0.0) == 0.5);

  bool clamped = false;
  CHECK(decode_boundary(u, 7.2, &clamped) == 2.5);
  CHECK(clamped);
  CHECK(decode_boundary(u, -0.5, &clamped) == 1.5);
  CHECK(clamped);
  decode_boundary(u, 1.0, &clamped);
  CHECK_FALSE(clamped);
  CHECK_THROWS(decode_boundary(std::vector<double>{1.0}, 0.0));
}

TEST_CASE("colliding indices shift to the nearest free position", "[postopt]") {
  using V = std::vector<std::size_t>;
  CHECK(repair_indices(V{2, 2, 2}, 5) == V{1, 2, 3});
  CHECK(repair_indices(V{0, 0}, 3) == V{0, 1});
  CHECK(repair_indices(V{5, 5}, 5) == V{4, 5});
  CHECK(repair_indices(V{4, 1, 3}, 5) == V{1, 3, 4});
  CHECK(repair_indices(V{9, 9}, 5) == V{4, 5});
  CHECK_THROWS(repair_indices(V{0, 1, 2}, 1));

  Rng rng(1);
  for (int t = 0; t < 10000; ++t) {
    const std::size_t max_index = 1 + rng() % 12;
    const std::size_t count = 1 + rng() % (max_index + 1);
    V idx(count);
    for (auto& i : idx) i = rng() % (max_index + 3);
    const auto r = repair_indices(idx, max_index);
    REQUIRE(r.size() == count);
    REQUIRE(r.back() <= max_index);
    for (std::size_t i = 1; i < r.size(); ++i) REQUIRE(r[i - 1] < r[i]);
  }
}

TEST_CASE("encoding reproduces the partition of the input boundaries", "[postopt]") {
  const auto d = testing::chain_data(3, 200, 2);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> bins{2 + static_cast<int>(rng() % 6), 2 + static_cast<int>(rng() % 6),
                          2 + static_cast<int>(rng() % 6)};
    const auto model = ew_model(Dag::from_edges(3, Edges{{0, 1}, {1, 2}}), bins);
    const BoundaryEncoding enc(model, d);
    REQUIRE(enc.dimension() == static_cast<std::size_t>(bins[0] + bins[1] + bins[2] - 3));
    const auto x = enc.encode(model);
    const auto back = enc.decode(model, x);
    REQUIRE(assign_bins(d, back).bins == assign_bins(d, model).bins);

    BoundaryObjective objective(model, d, enc);
    REQUIRE(objective(x) == Approx(evaluate_model(back, d).total()).epsilon(1e-12));
    // incremental rescoring agrees with a from-scratch evaluation
    const auto upper = enc.upper();
    for (int s = 0; s < 20; ++s) {
      std::vector<double> y(x.size());
      for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = std::uniform_real_distribution<double>(0.0, upper[i])(rng);
      }
      REQUIRE(objective(y) == Approx(evaluate_model(enc.decode(model, y), d).total()).epsilon(1e-12));
    }
  }
}

TEST_CASE("single variable with two bins reaches the best of all nine cuts", "[postopt][oracle]") {
  const auto d = one_column({0.0, 0.03, 0.05, 0.08, 0.1, 0.55, 0.8, 0.85, 0.9, 1.0});
  const auto model = ew_model(Dag(1), {2});
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < 10; ++i) {
    SolutionModel m = model;
    m.boundaries[0] = {(d.columns[0][i] + d.columns[0][i + 1]) / 2};
    best = std::max(best, evaluate_model(m, d).total());
  }
  Rng rng(4);
  const auto r = optimize_boundaries(model, d, PostOptConfig{}, rng);
  CHECK(r.fitness_after == Approx(best).epsilon(1e-12));
  CHECK(r.fitness_after == Approx(evaluate_model(r.model, d).total()).epsilon(1e-12));
}

TEST_CASE("tiny instances reach the exhaustive boundary optimum", "[postopt][oracle]") {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = testing::chain_data(2, 12, 100 + seed, 0.3);
    const auto model = ew_model(Dag::from_edges(2, Edges{{0, 1}}), {3, 3});
    const double optimum = testing::exhaustive_boundary_optimum(model, d);
    Rng rng(seed);
    const auto r = optimize_boundaries(model, d, PostOptConfig{}, rng);
    REQUIRE(r.fitness_after <= optimum + 1e-9);
    if (r.fitness_after >= optimum - 1e-9) ++hits;
  }
  CHECK(hits >= 8);
}

TEST_CASE("boundary optimization is elitist and keeps the complexity", "[postopt][property]") {
  Rng rng(5);
  for (int t = 0; t < 30; ++t) {
    const auto d = testing::chain_data(4, 300, 200 + static_cast<std::uint64_t>(t));
    GenomeLayout layout(d.meta, 2, 8);
    EvaluatorOptions opts;
    opts.policy = t % 2 ? Discretization::equal_frequency : Discretization::equal_width;
    DensityEvaluator eval(d, layout, opts);
    const auto g = repair_cycles(layout.random_genotype(rng), layout);
    const auto model = eval.model_of(g);
    PostOptConfig config;
    config.max_evaluations = 500;
    const auto r = optimize_boundaries(model, d, config, rng);
    REQUIRE(r.fitness_before == Approx(eval.evaluate(g).total()).epsilon(1e-12));
    REQUIRE(r.fitness_after >= r.fitness_before);
    REQUIRE(model_complexity(r.model, d.n) == model_complexity(model, d.n));
    REQUIRE(r.model.bins == model.bins);
    REQUIRE(r.model.dag.edges() == model.dag.edges());
    REQUIRE(r.evaluations <= 500);
    REQUIRE_NOTHROW(r.model.validate(d.meta));
  }
}

TEST_CASE("a worse optimizer result is discarded", "[postopt]") {
  const auto d = testing::chain_data(2, 200, 6);
  const auto model = ew_model(Dag::from_edges(2, Edges{{0, 1}}), {3, 3});
  WorseningOptimizer bad;
  Rng rng(7);
  const auto r = optimize_boundaries(model, d, PostOptConfig{}, rng, &bad);
  CHECK(r.model.boundaries == model.boundaries);
  CHECK(r.fitness_after == r.fitness_before);
}

TEST_CASE("zero budget returns the input model", "[postopt]") {
  const auto d = testing::chain_data(2, 200, 8);
  const auto model = ew_model(Dag::from_edges(2, Edges{{0, 1}}), {4, 3});
  PostOptConfig config;
  config.max_evaluations = 0;
  Rng rng(9);
  const auto r = optimize_boundaries(model, d, config, rng);
  CHECK(r.model.boundaries == model.boundaries);
  CHECK(r.evaluations == 0);
  CHECK(r.fitness_after == r.fitness_before);
}

TEST_CASE("too few distinct values for the bin count is rejected", "[postopt]") {
  const auto d = one_column({0.0, 0.0, 1.0, 1.0});
  const auto model = ew_model(Dag(1), {3});
  Rng rng(1);
  CHECK_THROWS(optimize_boundaries(model, d, PostOptConfig{}, rng));
}

TEST_CASE("Bayesian refinement of an isolated variable ignores the context", "[postopt]") {
  const auto d = testing::chain_data(3, 300, 10);
  const auto model = ew_model(Dag::from_edges(3, Edges{{0, 1}}), {3, 3, 3});
  const auto refined = refine_bayesian(model, d);
  REQUIRE_NOTHROW(refined.validate(d.meta));
  const std::vector<std::uint32_t> none(d.n, 0);
  CHECK(refined.boundaries[2] == bayesian_discretize(d.columns[2], none).boundaries);
  for (std::size_t v = 0; v < 3; ++v) {
    CHECK(refined.bins[v] == static_cast<int>(refined.boundaries[v].size()) + 1);
  }
  CHECK(refined.dag.edges() == model.dag.edges());
}
