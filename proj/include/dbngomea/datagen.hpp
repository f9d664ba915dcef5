#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbngomea/discretize.hpp"
#include "dbngomea/model.hpp"

namespace dbngomea {

inline constexpr std::size_t kMaxParents = 6;
inline constexpr double kEdgeFraction = 0.4;
inline constexpr double kDiscreteFraction = 0.1;
inline constexpr int kMinLevels = 2;
inline constexpr int kMaxLevels = 6;

enum class DistributionKind : std::uint8_t { equal_width, equal_frequency, random };

/// Generative network: every variable has a finite number of levels drawn
/// from a CPT given its parents' levels. A continuous variable emits a
/// uniform draw from its level's interval; a discrete one emits the level.
struct GroundTruthNetwork {
  Dag dag;
  std::vector<VariableMeta> meta;
  std::vector<int> levels;
  /// cpts[v][config] is the level distribution of v for the mixed-radix parent
  /// configuration (parents ascending, first parent most significant).
  std::vector<std::vector<std::vector<double>>> cpts;
  /// Interior cut points per continuous variable; level l covers
  /// [cut[l-1], cut[l]) with 0 and 1 as outer ends. Empty for discrete.
  std::vector<std::vector<double>> cuts;

  std::size_t n_vars() const { return meta.size(); }

  std::size_t config_of(std::size_t v, std::span<const int> level_of) const {
    std::size_t c = 0;
    for (auto p : dag.parents(v)) c = c * static_cast<std::size_t>(levels[p]) + static_cast<std::size_t>(level_of[p]);
    return c;
  }

  int level_of_value(std::size_t v, double x) const {
    if (meta[v].is_discrete()) return static_cast<int>(x);
    return bin_of(x, cuts[v]);
  }

  double interval_width(std::size_t v, int level) const {
    const auto& c = cuts[v];
    const double lo = level == 0 ? 0.0 : c[static_cast<std::size_t>(level - 1)];
    const double hi = level == static_cast<int>(c.size()) ? 1.0 : c[static_cast<std::size_t>(level)];
    return hi - lo;
  }

  /// Exact log-density of one raw sample (one value per variable).
  double log_density(std::span<const double> row) const {
    std::vector<int> lv(n_vars());
    for (std::size_t v = 0; v < n_vars(); ++v) lv[v] = level_of_value(v, row[v]);
    double lp = 0.0;
    for (std::size_t v = 0; v < n_vars(); ++v) {
      lp += std::log(cpts[v][config_of(v, lv)][static_cast<std::size_t>(lv[v])]);
      if (meta[v].is_continuous()) lp -= std::log(interval_width(v, lv[v]));
    }
    return lp;
  }

  /// Throws if a structural or probabilistic invariant is broken.
  void validate() const {
    const std::size_t n = n_vars();
    if (dag.n_nodes() != n || levels.size() != n || cpts.size() != n || cuts.size() != n) {
      throw std::invalid_argument("GroundTruthNetwork: size mismatch");
    }
    if (dag.edge_count() > static_cast<std::size_t>(std::floor(kEdgeFraction * edge_gene_count(n)))) {
      throw std::invalid_argument("GroundTruthNetwork: too many edges");
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (dag.parents(v).size() > kMaxParents) throw std::invalid_argument("GroundTruthNetwork: too many parents");
      std::size_t rows = 1;
      for (auto p : dag.parents(v)) rows *= static_cast<std::size_t>(levels[p]);
      if (cpts[v].size() != rows) throw std::invalid_argument("GroundTruthNetwork: CPT row count");
      for (const auto& row : cpts[v]) {
        if (row.size() != static_cast<std::size_t>(levels[v])) throw std::invalid_argument("GroundTruthNetwork: CPT width");
        if (std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) > 1e-9) {
          throw std::invalid_argument("GroundTruthNetwork: CPT row does not sum to 1");
        }
      }
      if (meta[v].is_discrete()) {
        if (meta[v].cardinality != levels[v] || !cuts[v].empty()) {
          throw std::invalid_argument("GroundTruthNetwork: discrete variable mis-specified");
        }
        continue;
      }
      const auto& c = cuts[v];
      if (c.size() != static_cast<std::size_t>(levels[v] - 1)) throw std::invalid_argument("GroundTruthNetwork: cut count");
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (!(c[i] > 0.0 && c[i] < 1.0) || (i > 0 && !(c[i] > c[i - 1]))) {
          throw std::invalid_argument("GroundTruthNetwork: cuts must increase inside (0,1)");
        }
      }
    }
  }
};

namespace detail {

inline std::vector<double> dirichlet_row(int k, Rng& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<double> row(static_cast<std::size_t>(k));
  double sum = 0.0;
  do {
    sum = 0.0;
    for (auto& x : row) sum += (x = g(rng));
  } while (!(sum > 0.0));
  for (auto& x : row) x /= sum;
  return row;
}

inline std::vector<double> sorted_uniform_cuts(std::size_t count, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    std::vector<double> c(count);
    for (auto& x : c) x = unit(rng);
    std::sort(c.begin(), c.end());
    bool ok = true;
    for (std::size_t i = 0; i < count; ++i) {
      if (!(c[i] > 0.0) || (i > 0 && !(c[i] > c[i - 1]))) ok = false;
    }
    if (ok) return c;
  }
}

}  // namespace detail

/// Random ground-truth network. Discrete variables are ceil(10%) of all (at
/// least one); every variable has 2..6 levels; edges follow a random
/// topological order with at most 6 parents and at most 40% of all pairs.
inline GroundTruthNetwork random_network(std::size_t n_vars, DistributionKind kind, Rng& rng) {
  if (n_vars < 2) throw std::invalid_argument("random_network: need at least 2 variables");
  GroundTruthNetwork net;
  const auto n_discrete =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(kDiscreteFraction * static_cast<double>(n_vars) - 1e-12)));

  std::vector<std::size_t> ids(n_vars);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<char> discrete(n_vars, 0);
  for (std::size_t i = 0; i < n_discrete; ++i) discrete[ids[i]] = 1;

  std::uniform_int_distribution<int> level_dist(kMinLevels, kMaxLevels);
  net.levels.resize(n_vars);
  net.meta.resize(n_vars);
  for (std::size_t v = 0; v < n_vars; ++v) {
    net.levels[v] = level_dist(rng);
    auto& m = net.meta[v];
    m.name = "X" + std::to_string(v);
    if (discrete[v]) {
      m.kind = VariableKind::discrete;
      m.cardinality = net.levels[v];
    } else {
      m.kind = VariableKind::continuous;
      m.raw_range = {0.0, 1.0};
    }
  }

  // structure
  std::vector<std::size_t> order(n_vars);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto cap = static_cast<std::size_t>(std::floor(kEdgeFraction * static_cast<double>(edge_gene_count(n_vars))));
  const std::size_t lo = std::min(n_vars - 1, cap);
  const std::size_t target = std::uniform_int_distribution<std::size_t>(lo, cap)(rng);
  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  for (std::size_t a = 0; a < n_vars; ++a) {
    for (std::size_t b = a + 1; b < n_vars; ++b) candidates.emplace_back(order[a], order[b]);
  }
  std::shuffle(candidates.begin(), candidates.end(), rng);
  std::vector<std::size_t> n_parents(n_vars, 0);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& [from, to] : candidates) {
    if (edges.size() >= target) break;
    if (n_parents[to] >= kMaxParents) continue;
    ++n_parents[to];
    edges.emplace_back(from, to);
  }
  net.dag = Dag::from_edges(n_vars, edges);

  // parameters
  net.cpts.resize(n_vars);
  net.cuts.resize(n_vars);
  for (std::size_t v = 0; v < n_vars; ++v) {
    std::size_t rows = 1;
    for (auto p : net.dag.parents(v)) rows *= static_cast<std::size_t>(net.levels[p]);
    const int k = net.levels[v];
    for (std::size_t r = 0; r < rows; ++r) {
      if (kind == DistributionKind::equal_frequency) {
        net.cpts[v].emplace_back(static_cast<std::size_t>(k), 1.0 / k);
      } else {
        net.cpts[v].push_back(detail::dirichlet_row(k, rng));
      }
    }
    if (discrete[v]) continue;
    if (kind == DistributionKind::equal_width) {
      for (int i = 1; i < k; ++i) net.cuts[v].push_back(static_cast<double>(i) / k);
    } else {
      net.cuts[v] = detail::sorted_uniform_cuts(static_cast<std::size_t>(k - 1), rng);
    }
  }
  net.validate();
  return net;
}

/// Ancestral sampling of n rows.
inline RawDataset sample(const GroundTruthNetwork& net, std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sample: need at least one row");
  RawDataset out;
  out.meta = net.meta;
  out.columns.assign(net.n_vars(), std::vector<double>(n));
  const auto order = net.dag.topological_order();
  std::vector<int> lv(net.n_vars());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (auto v : order) {
      const auto& row = net.cpts[v][net.config_of(v, lv)];
      std::discrete_distribution<int> pick(row.begin(), row.end());
      lv[v] = pick(rng);
      if (net.meta[v].is_discrete()) {
        out.columns[v][s] = lv[v];
        continue;
      }
      const auto& c = net.cuts[v];
      const double lo = lv[v] == 0 ? 0.0 : c[static_cast<std::size_t>(lv[v] - 1)];
      const double hi = lv[v] == static_cast<int>(c.size()) ? 1.0 : c[static_cast<std::size_t>(lv[v])];
      out.columns[v][s] = std::min(lo + (hi - lo) * unit(rng), std::nextafter(hi, lo));
    }
  }
  return out;
}

/// Simulated prior belief: part of the true edges plus wrong ones, and a
/// coarse discretization with random boundaries in normalized space.
struct ExpertNetwork {
  Dag dag;
  std::vector<int> bins;  // continuous: 2..4; discrete: cardinality
  std::vector<std::vector<double>> boundaries;

  SolutionModel model() const { return SolutionModel{dag, bins, boundaries}; }
};

/// Keeps floor(E/2) true edges and adds floor(E/2) edges between pairs that
/// are not adjacent in the truth, rejecting additions that close a cycle.
/// The whole expert is redrawn if an attempt runs out of candidates.
inline ExpertNetwork make_expert(const GroundTruthNetwork& net, Rng& rng, int attempts = 16) {
  const std::size_t n = net.n_vars();
  const auto true_edges = net.dag.edges();
  if (true_edges.size() < 2) throw std::invalid_argument("make_expert: ground truth needs at least 2 edges");
  const std::size_t half = true_edges.size() / 2;

  for (int attempt = 0; attempt < attempts; ++attempt) {
    auto kept = true_edges;
    std::shuffle(kept.begin(), kept.end(), rng);
    kept.resize(half);

    std::vector<std::pair<std::size_t, std::size_t>> wrong;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (a != b && !net.dag.adjacent(a, b)) wrong.emplace_back(a, b);
      }
    }
    std::shuffle(wrong.begin(), wrong.end(), rng);

    Adjacency children(n);
    for (const auto& [a, b] : kept) children[a].push_back(b);
    std::size_t added = 0;
    for (const auto& [a, b] : wrong) {
      if (added == half) break;
      if (std::find(children[b].begin(), children[b].end(), a) != children[b].end()) continue;
      children[a].push_back(b);
      if (!is_acyclic(children)) {
        children[a].pop_back();
        continue;
      }
      ++added;
    }
    if (added < half) continue;
    for (auto& c : children) std::sort(c.begin(), c.end());

    ExpertNetwork ex;
    ex.dag = Dag::from_children(children);
    ex.bins.resize(n);
    ex.boundaries.resize(n);
    std::uniform_int_distribution<int> bins(2, 4);
    for (std::size_t v = 0; v < n; ++v) {
      if (net.meta[v].is_discrete()) {
        ex.bins[v] = net.meta[v].cardinality;
        continue;
      }
      ex.bins[v] = bins(rng);
      ex.boundaries[v] = detail::sorted_uniform_cuts(static_cast<std::size_t>(ex.bins[v] - 1), rng);
    }
    return ex;
  }
  throw std::runtime_error("make_expert: no acyclic completion found");
}

}  // namespace dbngomea
