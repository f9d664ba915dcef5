#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <numeric>

#include "dbngomea/bayesian_discretize.hpp"
#include "dbngomea/discretize.hpp"
#include "support.hpp"

using namespace dbngomea;
using Catch::Approx;

namespace {

RawDataset one_column(std::vector<double> col) {
  RawDataset r;
  r.meta = testing::continuous_meta(1);
  r.columns = {std::move(col)};
  return r;
}

// Direct transcription of the BD objective: gap-proportional cut prior,
// Dirichlet(1) bin distribution per context, uniform over distinct values
// inside an interval.
double bd_reference_score(const std::vector<double>& values, const std::vector<std::uint32_t>& ctx,
                          const std::vector<std::size_t>& cut_after, double rate) {
  auto u = values;
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  const double range = u.back() - u.front();
  double prior = 0.0;
  for (std::size_t j = 0; j + 1 < u.size(); ++j) {
    const double pi = 1.0 - std::exp(-rate * (u[j + 1] - u[j]) / range);
    const bool cut = std::find(cut_after.begin(), cut_after.end(), j) != cut_after.end();
    prior += std::log(cut ? pi : 1.0 - pi);
  }
  auto interval = [&](double x) {
    const auto j = static_cast<std::size_t>(std::lower_bound(u.begin(), u.end(), x) - u.begin());
    return static_cast<std::size_t>(std::lower_bound(cut_after.begin(), cut_after.end(), j) - cut_after.begin());
  };
  const std::size_t k = cut_after.size() + 1;
  std::vector<std::size_t> distinct_in(k, 0);
  for (std::size_t j = 0; j < u.size(); ++j) ++distinct_in[interval(u[j])];
  std::map<std::uint32_t, std::size_t> nc;
  std::map<std::pair<std::size_t, std::uint32_t>, std::size_t> nic;
  double like = 0.0;
  for (std::size_t s = 0; s < values.size(); ++s) {
    ++nc[ctx[s]];
    ++nic[{interval(values[s]), ctx[s]}];
    like -= std::log(static_cast<double>(distinct_in[interval(values[s])]));
  }
  for (auto [c, n] : nc) like += std::lgamma(static_cast<double>(k)) - std::lgamma(static_cast<double>(k + n));
  for (auto [key, n] : nic) like += std::lgamma(1.0 + n);
  return prior + like;
}

// Best score over every subset of cut positions with at most max_cuts cuts.
std::pair<double, std::vector<std::size_t>> bd_exhaustive(const std::vector<double>& values,
                                                          const std::vector<std::uint32_t>& ctx, std::size_t max_cuts,
                                                          double rate) {
  auto u = values;
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  const std::size_t gaps = u.size() - 1;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> arg;
  for (std::uint32_t mask = 0; mask < (1u << gaps); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) > max_cuts) continue;
    std::vector<std::size_t> cuts;
    for (std::size_t j = 0; j < gaps; ++j) {
      if (mask & (1u << j)) cuts.push_back(j);
    }
    const double s = bd_reference_score(values, ctx, cuts, rate);
    if (s > best) {
      best = s;
      arg = cuts;
    }
  }
  return {best, arg};
}

}  // namespace

TEST_CASE("normalize maps columns affinely onto [0,1]", "[discretize]") {
  auto a = normalize(one_column({2, 4, 6}));
  CHECK(a.columns[0] == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(a.normalization[0] == std::make_pair(2.0, 6.0));
  CHECK(a.meta[0].raw_range == std::make_pair(2.0, 6.0));
  auto b = normalize(one_column({0.0, 0.3, 1.0}));
  CHECK(b.columns[0] == std::vector<double>{0.0, 0.3, 1.0});
  auto c = normalize(one_column({-1, 0, 3}));
  CHECK(c.columns[0][1] == Approx(0.25).margin(1e-15));
  CHECK_THROWS_WITH(normalize(one_column({5, 5, 5})), Catch::Matchers::ContainsSubstring("degenerate column"));
}

TEST_CASE("discrete columns pass through and are checked", "[discretize]") {
  RawDataset r;
  r.meta = {testing::discrete_var("d", 3)};
  r.columns = {{0, 2, 1}};
  CHECK(normalize(r).columns[0] == std::vector<double>{0, 2, 1});
  r.columns = {{0, 3, 1}};
  CHECK_THROWS(normalize(r));
}

TEST_CASE("apply_normalization reuses the training map and clamps", "[discretize]") {
  const auto train = normalize(one_column({1, 3}));
  const auto test = apply_normalization(one_column({0, 2, 5}), train);
  CHECK(test.columns[0] == std::vector<double>{0.0, 0.5, 1.0});
}

TEST_CASE("equal width boundaries", "[discretize]") {
  CHECK(equal_width(2) == std::vector<double>{0.5});
  CHECK(equal_width(4) == std::vector<double>{0.25, 0.5, 0.75});
  CHECK_THROWS_AS(equal_width(1), std::out_of_range);
  CHECK_THROWS_AS(equal_width(16), std::out_of_range);
  CHECK_NOTHROW(equal_width(15));
}

TEST_CASE("equal frequency boundaries", "[discretize]") {
  const std::vector<double> v{0.6, 0.1, 0.4, 0.2, 0.5, 0.3};
  const auto b = equal_frequency(v, 3);
  REQUIRE(b.size() == 2);
  CHECK(b[0] == Approx(0.25));
  CHECK(b[1] == Approx(0.45));
  CHECK_THROWS_WITH(equal_frequency(std::vector<double>{0.3, 0.3, 0.3, 0.3}, 2),
                    Catch::Matchers::ContainsSubstring("insufficient distinct values"));

  const std::vector<double> w{0.05, 0.15, 0.25, 0.35, 0.45};
  const auto all = equal_frequency(w, 5);
  REQUIRE(all.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(all[i] == Approx((w[i] + w[i + 1]) / 2));
}

TEST_CASE("equal frequency never splits ties", "[discretize][property]") {
  Rng rng(5);
  std::uniform_int_distribution<int> level(0, 9);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> v(200);
    for (auto& x : v) x = level(rng) / 9.0;
    const int k = 2 + t % 8;
    const auto b = equal_frequency(v, k);
    REQUIRE(b.size() == static_cast<std::size_t>(k - 1));
    for (std::size_t i = 0; i < b.size(); ++i) {
      REQUIRE((b[i] > 0.0 && b[i] < 1.0));
      if (i) REQUIRE(b[i] > b[i - 1]);
      for (double x : v) REQUIRE(x != b[i]);
    }
  }
}

TEST_CASE("equal frequency occupancies differ by at most one on distinct data", "[discretize][property]") {
  Rng rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> v(30 + t % 97);
    for (auto& x : v) x = unit(rng);
    const int k = 2 + t % 14;
    const auto b = equal_frequency(v, k);
    std::vector<std::size_t> occ(static_cast<std::size_t>(k), 0);
    for (double x : v) ++occ[static_cast<std::size_t>(bin_of(x, b))];
    const auto [lo, hi] = std::minmax_element(occ.begin(), occ.end());
    REQUIRE(*hi - *lo <= 1);
  }
}

TEST_CASE("equal width on a uniform grid gives equal counts", "[discretize][property]") {
  std::vector<double> grid(1000);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = (i + 0.5) / grid.size();
  for (int k = 2; k <= 15; ++k) {
    const auto bins = assign_column(grid, equal_width(k));
    std::vector<std::size_t> occ(static_cast<std::size_t>(k), 0);
    for (auto b : bins) ++occ[b];
    const auto [lo, hi] = std::minmax_element(occ.begin(), occ.end());
    CHECK(*hi - *lo <= 1);
  }
}

TEST_CASE("assign_bins uses half-open intervals with a closed last bin", "[discretize]") {
  const std::vector<double> b{0.25, 0.45};
  CHECK(bin_of(0.0, b) == 0);
  CHECK(bin_of(1.0, b) == 2);
  CHECK(bin_of(0.3, b) == 1);
  CHECK(bin_of(0.25, b) == 1);

  NormalizedDataset d;
  d.meta = {testing::continuous_meta(1)[0], testing::discrete_var("d", 2)};
  d.columns = {{0.1, 0.9, 0.5}, {1, 0, 1}};
  d.n = 3;
  SolutionModel m{Dag(2), {3, 2}, {{0.2, 0.6}, {}}};
  const auto a = assign_bins(d, m);
  CHECK(a.bins[0] == std::vector<std::uint8_t>{0, 2, 1});
  CHECK(a.bins[1] == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(std::accumulate(a.widths[0].begin(), a.widths[0].end(), 0.0) == Approx(1.0).margin(1e-9));
}

TEST_CASE("Bayesian discretization puts one cut in the gap between clusters", "[discretize][bd]") {
  std::vector<double> v;
  for (int i = 0; i < 6; ++i) v.push_back(0.02 * i);
  for (int i = 0; i < 6; ++i) v.push_back(0.9 + 0.02 * i);
  std::vector<std::uint32_t> ctx(v.size(), 0);
  // context separates the clusters
  for (std::size_t i = 6; i < v.size(); ++i) ctx[i] = 1;
  const auto r = bayesian_discretize(v, ctx);
  REQUIRE(r.boundaries.size() == 1);
  CHECK(r.boundaries[0] > 0.1);
  CHECK(r.boundaries[0] < 0.9);
  const auto [best, arg] = bd_exhaustive(v, ctx, 11, 4.0);
  CHECK(r.score == Approx(best).epsilon(1e-9));
}

TEST_CASE("Bayesian discretization prefers one bin for structureless data", "[discretize][bd]") {
  std::vector<double> v;
  for (int i = 0; i < 12; ++i) v.push_back(i / 11.0);
  std::vector<std::uint32_t> ctx(v.size(), 0);
  const auto r = bayesian_discretize(v, ctx);
  const auto [best, arg] = bd_exhaustive(v, ctx, 11, 4.0);
  CHECK(r.cut_after == arg);
  CHECK(r.boundaries.empty());
  CHECK(r.score == Approx(best).epsilon(1e-9));
}

TEST_CASE("Bayesian discretization matches exhaustive search on small instances", "[discretize][bd][property]") {
  Rng rng(77);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> ctx_dist(0, 2);
  for (int t = 0; t < 60; ++t) {
    const std::size_t m = 4 + t % 9;  // up to 12 distinct values
    std::vector<double> u(m);
    for (auto& x : u) x = unit(rng);
    std::vector<double> v;
    std::vector<std::uint32_t> ctx;
    for (std::size_t s = 0; s < 3 * m; ++s) {
      v.push_back(u[s % m]);
      const auto c = ctx_dist(rng);
      ctx.push_back(u[s % m] < 0.5 ? c : (c + 1) % 3);
    }
    BayesianDiscretizationOptions opts;
    opts.bin_max = 3;
    const auto r = bayesian_discretize(v, ctx, opts);
    const auto [best, arg] = bd_exhaustive(v, ctx, 2, opts.boundary_rate);
    REQUIRE(r.score == Approx(best).epsilon(1e-9));
    REQUIRE(r.boundaries.size() <= 2);
    BayesianDiscretizer bd(v, ctx, opts);
    REQUIRE(bd.score(r.cut_after) == Approx(bd_reference_score(v, ctx, r.cut_after, opts.boundary_rate)).epsilon(1e-9));
    for (std::size_t i = 0; i < r.boundaries.size(); ++i) {
      REQUIRE((r.boundaries[i] > 0.0 && r.boundaries[i] < 1.0));
      if (i) REQUIRE(r.boundaries[i] > r.boundaries[i - 1]);
    }
  }
}

TEST_CASE("Bayesian discretization errors", "[discretize][bd]") {
  std::vector<double> flat(10, 0.5);
  std::vector<std::uint32_t> ctx(10, 0);
  CHECK_THROWS_WITH(bayesian_discretize(flat, ctx), Catch::Matchers::ContainsSubstring("insufficient distinct values"));

  std::vector<double> v(400);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i / 399.0;
  std::vector<std::uint32_t> c(v.size(), 0);
  BayesianDiscretizationOptions tiny;
  tiny.memory_cap_bytes = 1024;
  CHECK_THROWS_AS(bayesian_discretize(v, c, tiny), bd_memory_exceeded);
  CHECK_THROWS_WITH(bayesian_discretize(v, c, tiny), "BD memory exceeded");
}
