#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dbngomea/discretize.hpp"
#include "dbngomea/fitness.hpp"
#include "dbngomea/model.hpp"

namespace testing {

using namespace dbngomea;

inline std::vector<VariableMeta> continuous_meta(std::size_t n) {
  std::vector<VariableMeta> meta(n);
  for (std::size_t v = 0; v < n; ++v) {
    meta[v].name = "v" + std::to_string(v);
    meta[v].kind = VariableKind::continuous;
    meta[v].raw_range = {0.0, 1.0};
  }
  return meta;
}

inline VariableMeta discrete_var(const std::string& name, int card) {
  VariableMeta m;
  m.name = name;
  m.kind = VariableKind::discrete;
  m.cardinality = card;
  return m;
}

/// n rows; column 0 uniform, each later column a noisy function of the
/// previous one, so there is structure to find.
inline NormalizedDataset chain_data(std::size_t n_vars, std::size_t n, std::uint64_t seed, double noise = 0.15) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RawDataset raw;
  raw.meta = continuous_meta(n_vars);
  raw.columns.assign(n_vars, std::vector<double>(n));
  for (std::size_t s = 0; s < n; ++s) {
    raw.columns[0][s] = unit(rng);
    for (std::size_t v = 1; v < n_vars; ++v) {
      double x = raw.columns[v - 1][s] + noise * (unit(rng) - 0.5);
      x = x - std::floor(x);
      raw.columns[v][s] = x;
    }
  }
  return normalize(raw);
}

/// Independent EW bin index: floor(x * k), last bin closed at 1.
inline int ew_bin(double x, int k) { return std::min(static_cast<int>(std::floor(x * k)), k - 1); }

/// Reference fitness with equal-width bins: smoothed conditional bin
/// frequencies divided by the bin width, minus q (k - 1) log(n / 2).
inline double reference_fitness(const NormalizedDataset& d, const std::vector<std::vector<std::size_t>>& parents,
                                const std::vector<int>& k, bool smoothing = true) {
  const std::size_t n = d.n;
  double ll = 0.0;
  double pen = 0.0;
  auto bin = [&](std::size_t v, std::size_t s) {
    return d.meta[v].is_discrete() ? static_cast<int>(d.columns[v][s]) : ew_bin(d.columns[v][s], k[v]);
  };
  for (std::size_t v = 0; v < d.n_vars(); ++v) {
    std::map<std::vector<int>, std::vector<double>> table;
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<int> key;
      for (auto p : parents[v]) key.push_back(bin(p, s));
      auto& row = table[key];
      row.resize(static_cast<std::size_t>(k[v]), 0.0);
      row[static_cast<std::size_t>(bin(v, s))] += 1.0;
    }
    const double a = smoothing ? 1.0 : 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<int> key;
      for (auto p : parents[v]) key.push_back(bin(p, s));
      const auto& row = table[key];
      double total = 0.0;
      for (double c : row) total += c;
      const double p = (row[static_cast<std::size_t>(bin(v, s))] + a) / (total + a * k[v]);
      ll += std::log(p);
      if (d.meta[v].is_continuous()) ll -= std::log(1.0 / k[v]);
    }
    double q = 1.0;
    for (auto p : parents[v]) q *= k[p];
    pen += q * (k[v] - 1) * std::log(static_cast<double>(n) / 2.0);
  }
  return ll - pen;
}

/// DFS-based acyclicity check, independent of the library's Kahn version.
inline bool acyclic_dfs(const std::vector<std::vector<std::size_t>>& children) {
  const std::size_t n = children.size();
  std::vector<int> state(n, 0);
  std::function<bool(std::size_t)> visit = [&](std::size_t v) {
    state[v] = 1;
    for (auto c : children[v]) {
      if (state[c] == 1) return false;
      if (state[c] == 0 && !visit(c)) return false;
    }
    state[v] = 2;
    return true;
  };
  for (std::size_t v = 0; v < n; ++v) {
    if (state[v] == 0 && !visit(v)) return false;
  }
  return true;
}

/// Children lists of the edge genes of g (trit semantics), independent of decode().
inline std::vector<std::vector<std::size_t>> children_of_genes(const std::vector<std::uint8_t>& edges, std::size_t n) {
  std::vector<std::vector<std::size_t>> ch(n);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++idx) {
      if (edges[idx] == 1) ch[i].push_back(j);
      if (edges[idx] == 2) ch[j].push_back(i);
    }
  }
  return ch;
}

inline std::vector<std::vector<std::size_t>> parents_from_children(const std::vector<std::vector<std::size_t>>& ch) {
  std::vector<std::vector<std::size_t>> pa(ch.size());
  for (std::size_t v = 0; v < ch.size(); ++v) {
    for (auto c : ch[v]) pa[c].push_back(v);
  }
  for (auto& p : pa) std::sort(p.begin(), p.end());
  return pa;
}

/// All acyclic edge-gene vectors over n nodes.
inline std::vector<std::vector<std::uint8_t>> acyclic_edge_genes(std::size_t n) {
  const std::size_t L = n * (n - 1) / 2;
  std::size_t total = 1;
  for (std::size_t i = 0; i < L; ++i) total *= 3;
  std::vector<std::vector<std::uint8_t>> out;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<std::uint8_t> e(L);
    std::size_t c = code;
    for (std::size_t i = 0; i < L; ++i) {
      e[i] = static_cast<std::uint8_t>(c % 3);
      c /= 3;
    }
    if (acyclic_dfs(children_of_genes(e, n))) out.push_back(std::move(e));
  }
  return out;
}

// Best fitness over every placement of the cut points at midpoints of
// consecutive distinct values.
inline double exhaustive_boundary_optimum(const SolutionModel& model, const NormalizedDataset& data) {
  std::vector<std::vector<std::vector<double>>> options(data.n_vars());
  for (std::size_t v = 0; v < data.n_vars(); ++v) {
    if (!data.meta[v].is_continuous()) {
      options[v] = {model.boundaries[v]};
      continue;
    }
    auto u = data.columns[v];
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    const auto cuts = static_cast<std::size_t>(model.bins[v] - 1);
    std::vector<bool> pick(u.size() - 1, false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(cuts), true);
    do {
      std::vector<double> b;
      for (std::size_t i = 0; i < pick.size(); ++i) {
        if (pick[i]) b.push_back((u[i] + u[i + 1]) / 2);
      }
      options[v].push_back(b);
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> choice(data.n_vars(), 0);
  while (true) {
    SolutionModel m = model;
    for (std::size_t v = 0; v < data.n_vars(); ++v) m.boundaries[v] = options[v][choice[v]];
    best = std::max(best, evaluate_model(m, data).total());
    std::size_t v = 0;
    while (v < choice.size() && ++choice[v] == options[v].size()) choice[v++] = 0;
    if (v == choice.size()) break;
  }
  return best;
}

}  // namespace testing
