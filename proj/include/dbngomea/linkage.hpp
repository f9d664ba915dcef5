#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "dbngomea/common.hpp"

namespace dbngomea {

/// Family of subsets over genotype positions, leaves first, then merges in
/// the order they were formed. The root (all positions) is excluded.
struct LinkageTree {
  std::vector<std::vector<std::size_t>> elements;
};

struct LinkageOptions {
  bool normalized_mutual_information = false;
};

/// Pairwise mutual information between gene positions. `symbols[s][i]` is
/// the 0-based symbol of gene i in solution s; `alphabet[i]` its alphabet size.
inline std::vector<std::vector<double>> mutual_information(const std::vector<std::vector<std::uint8_t>>& symbols,
                                                           const std::vector<int>& alphabet,
                                                           bool normalized = false) {
  const std::size_t L = alphabet.size();
  const std::size_t P = symbols.size();
  std::vector<std::vector<double>> mi(L, std::vector<double>(L, 0.0));
  if (P == 0) return mi;
  const double inv = 1.0 / static_cast<double>(P);
  std::vector<double> entropy(L, 0.0);
  std::vector<std::uint32_t> counts;
  for (std::size_t i = 0; i < L; ++i) {
    counts.assign(static_cast<std::size_t>(alphabet[i]), 0);
    for (const auto& row : symbols) ++counts[row[i]];
    for (auto c : counts) {
      if (c) entropy[i] -= c * inv * std::log(c * inv);
    }
  }
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = i + 1; j < L; ++j) {
      const auto ai = static_cast<std::size_t>(alphabet[i]);
      const auto aj = static_cast<std::size_t>(alphabet[j]);
      counts.assign(ai * aj, 0);
      for (const auto& row : symbols) ++counts[row[i] * aj + row[j]];
      double joint = 0.0;
      for (auto c : counts) {
        if (c) joint -= c * inv * std::log(c * inv);
      }
      double value = std::max(0.0, entropy[i] + entropy[j] - joint);
      if (normalized) value = joint > 0.0 ? value / joint : 0.0;
      mi[i][j] = mi[j][i] = value;
    }
  }
  return mi;
}

/// UPGMA agglomeration over mutual information. Ties are broken by a random
/// initial ordering of the clusters.
inline LinkageTree learn_linkage_tree(const std::vector<std::vector<std::uint8_t>>& symbols,
                                      const std::vector<int>& alphabet, Rng& rng, LinkageOptions options = {}) {
  const std::size_t L = alphabet.size();
  LinkageTree tree;
  if (L == 0) return tree;
  if (L == 1) {
    tree.elements.push_back({0});
    return tree;
  }
  const auto mi = mutual_information(symbols, alphabet, options.normalized_mutual_information);

  std::vector<std::size_t> order(L);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  // active clusters in random order with their similarity matrix
  std::vector<std::vector<std::size_t>> members;
  for (auto g : order) {
    members.push_back({g});
    tree.elements.push_back({g});
  }
  std::vector<std::vector<double>> sim(L, std::vector<double>(L, 0.0));
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = 0; b < L; ++b) sim[a][b] = mi[order[a]][order[b]];
  }

  while (members.size() > 1) {
    std::size_t best_a = 0;
    std::size_t best_b = 1;
    double best = -1.0;
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        if (sim[a][b] > best) {
          best = sim[a][b];
          best_a = a;
          best_b = b;
        }
      }
    }
    std::vector<std::size_t> merged = members[best_a];
    merged.insert(merged.end(), members[best_b].begin(), members[best_b].end());
    std::sort(merged.begin(), merged.end());

    const double wa = static_cast<double>(members[best_a].size());
    const double wb = static_cast<double>(members[best_b].size());
    for (std::size_t c = 0; c < members.size(); ++c) {
      if (c == best_a || c == best_b) continue;
      sim[best_a][c] = sim[c][best_a] = (wa * sim[best_a][c] + wb * sim[best_b][c]) / (wa + wb);
    }
    members[best_a] = merged;
    // drop best_b by moving the last cluster into its slot
    const std::size_t last = members.size() - 1;
    if (best_b != last) {
      members[best_b] = std::move(members[last]);
      for (std::size_t c = 0; c < members.size(); ++c) {
        sim[best_b][c] = sim[last][c];
        sim[c][best_b] = sim[c][last];
      }
      sim[best_b][best_b] = 0.0;
    }
    members.pop_back();
    if (members.size() > 1) tree.elements.push_back(std::move(merged));
  }
  return tree;
}

}  // namespace dbngomea
