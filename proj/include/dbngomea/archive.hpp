#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "dbngomea/model.hpp"

namespace dbngomea {

inline constexpr std::size_t kArchiveCapacity = 10000;
inline constexpr std::size_t kObjectiveCount = 3;

/// Log-likelihood (maximized), complexity and KL to the expert (minimized),
/// plus a constraint violation where 0 means feasible.
struct ObjectiveVector {
  double ll = 0.0;
  double complexity = 0.0;
  double kl_expert = 0.0;
  double constraint = 0.0;

  /// All objectives in minimization form.
  std::array<double, kObjectiveCount> minimized() const { return {-ll, complexity, kl_expert}; }
  bool feasible() const { return constraint <= 0.0; }

  friend bool operator==(const ObjectiveVector&, const ObjectiveVector&) = default;
};

/// Not worse in any objective and better in at least one.
inline bool pareto_dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
  const auto x = a.minimized();
  const auto y = b.minimized();
  bool better = false;
  for (std::size_t i = 0; i < kObjectiveCount; ++i) {
    if (x[i] > y[i]) return false;
    if (x[i] < y[i]) better = true;
  }
  return better;
}

/// Feasible beats infeasible, lower violation beats higher, and equal
/// violation falls back to Pareto dominance.
inline bool constraint_dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
  if (a.constraint < b.constraint) return true;
  if (a.constraint > b.constraint) return false;
  return pareto_dominates(a, b);
}

struct ArchiveEntry {
  Genotype genotype;
  ObjectiveVector objectives;
};

/// Bounded set of mutually non-dominated solutions.
class ElitistArchive {
 public:
  explicit ElitistArchive(std::size_t capacity = kArchiveCapacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("ElitistArchive: capacity must be positive");
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const std::vector<ArchiveEntry>& entries() const { return entries_; }

  /// True if some entry constraint-dominates `o`.
  bool dominated(const ObjectiveVector& o) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const ArchiveEntry& e) { return constraint_dominates(e.objectives, o); });
  }

  /// Inserts unless dominated by or identical to an existing entry. Entries
  /// dominated by the newcomer are removed; at capacity the newcomer replaces
  /// its nearest neighbour in normalized objective space.
  bool insert(ArchiveEntry entry) {
    for (const auto& e : entries_) {
      if (e.objectives == entry.objectives || constraint_dominates(e.objectives, entry.objectives)) return false;
    }
    std::erase_if(entries_, [&](const ArchiveEntry& e) { return constraint_dominates(entry.objectives, e.objectives); });
    if (entries_.size() < capacity_) {
      entries_.push_back(std::move(entry));
      return true;
    }
    entries_[nearest(entry.objectives)] = std::move(entry);
    return true;
  }

 private:
  std::size_t nearest(const ObjectiveVector& o) const {
    std::array<double, kObjectiveCount> lo;
    std::array<double, kObjectiveCount> hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    auto widen = [&](const ObjectiveVector& v) {
      const auto m = v.minimized();
      for (std::size_t i = 0; i < kObjectiveCount; ++i) {
        if (!std::isfinite(m[i])) continue;
        lo[i] = std::min(lo[i], m[i]);
        hi[i] = std::max(hi[i], m[i]);
      }
    };
    widen(o);
    for (const auto& e : entries_) widen(e.objectives);
    const auto target = o.minimized();
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const auto m = entries_[k].objectives.minimized();
      double d = 0.0;
      for (std::size_t i = 0; i < kObjectiveCount; ++i) {
        const double span = hi[i] > lo[i] ? hi[i] - lo[i] : 1.0;
        const double diff = (m[i] - target[i]) / span;
        d += std::isfinite(diff) ? diff * diff : 1.0;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  }

  std::size_t capacity_;
  std::vector<ArchiveEntry> entries_;
};

}  // namespace dbngomea
