#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dbngomea/datagen.hpp"
#include "dbngomea/fitness.hpp"

namespace dbngomea {

/// Undirected edge confusion counts over all variable pairs.
struct StructureScore {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  double accuracy() const { return total() ? static_cast<double>(tp + tn) / static_cast<double>(total()) : 1.0; }
  /// 1 when the truth has no edges.
  double sensitivity() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0; }
};

inline StructureScore structure_score(const Dag& candidate, const Dag& truth) {
  if (candidate.n_nodes() != truth.n_nodes()) throw std::invalid_argument("structure_score: node count mismatch");
  StructureScore s;
  const std::size_t n = truth.n_nodes();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const bool c = candidate.adjacent(a, b);
      const bool t = truth.adjacent(a, b);
      if (c && t) ++s.tp;
      else if (!c && !t) ++s.tn;
      else if (c) ++s.fp;
      else ++s.fn;
    }
  }
  return s;
}

struct KlEstimate {
  double value = 0.0;           // clamped at 0
  double raw = 0.0;             // unclamped mean
  double standard_error = 0.0;
};

/// Monte-Carlo KL(truth || candidate) over raw test samples drawn from the
/// truth. The candidate lives in the normalized space of `training`; its
/// density is mapped back to raw units with the Jacobian of the normalization.
inline KlEstimate kl_to_truth(const FittedModel& candidate, const GroundTruthNetwork& truth, const RawDataset& test,
                              const NormalizedDataset& training) {
  const std::size_t n = test.n_samples();
  if (n == 0) throw std::invalid_argument("kl_to_truth: empty test set");
  const auto normalized = apply_normalization(test, training);
  double log_jacobian = 0.0;
  for (std::size_t v = 0; v < training.n_vars(); ++v) {
    if (!training.meta[v].is_continuous()) continue;
    const auto [lo, hi] = training.normalization[v];
    log_jacobian += std::log(hi - lo);
  }
  std::vector<double> raw_row(test.n_vars());
  std::vector<double> norm_row(test.n_vars());
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t v = 0; v < test.n_vars(); ++v) {
      raw_row[v] = test.columns[v][s];
      norm_row[v] = normalized.columns[v][s];
    }
    const double d = truth.log_density(raw_row) - (candidate.log_density(norm_row) - log_jacobian);
    sum += d;
    sum_sq += d * d;
  }
  KlEstimate k;
  k.raw = sum / static_cast<double>(n);
  const double var = n > 1 ? std::max(0.0, (sum_sq - sum * k.raw) / static_cast<double>(n - 1)) : 0.0;
  k.standard_error = std::sqrt(var / static_cast<double>(n));
  k.value = std::max(0.0, k.raw);
  return k;
}

}  // namespace dbngomea
