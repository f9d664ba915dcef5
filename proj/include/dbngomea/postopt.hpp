#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "dbngomea/bayesian_discretize.hpp"
#include "dbngomea/fitness.hpp"

namespace dbngomea {

/// Boundary at the midpoint between u[floor(param)] and its successor. The
/// index is clamped to [0, |u| - 2]; `clamped` reports whether that happened.
inline double decode_boundary(std::span<const double> u, double param, bool* clamped = nullptr) {
  if (u.size() < 2) throw std::invalid_argument("decode_boundary: need at least 2 distinct values");
  const double max_index = static_cast<double>(u.size() - 2);
  const double f = std::floor(param);
  const double idx = std::clamp(std::isfinite(f) ? f : 0.0, 0.0, max_index);
  if (clamped) *clamped = idx != f;
  const auto i = static_cast<std::size_t>(idx);
  return (u[i] + u[i + 1]) / 2.0;
}

/// Makes indices strictly increasing within [0, max_index]: sort, then move
/// each collision to the nearest unused index (lower one on ties).
inline std::vector<std::size_t> repair_indices(std::vector<std::size_t> idx, std::size_t max_index) {
  if (idx.size() > max_index + 1) throw std::invalid_argument("repair_indices: more indices than positions");
  std::sort(idx.begin(), idx.end());
  std::vector<char> used(max_index + 1, 0);
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) {
    i = std::min(i, max_index);
    if (!used[i]) {
      used[i] = 1;
      out.push_back(i);
      continue;
    }
    for (std::size_t d = 1;; ++d) {
      if (i >= d && !used[i - d]) {
        used[i - d] = 1;
        out.push_back(i - d);
        break;
      }
      if (i + d <= max_index && !used[i + d]) {
        used[i + d] = 1;
        out.push_back(i + d);
        break;
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Real-valued boundary parameters of a model with fixed structure and bin
/// counts. Parameters are concatenated per continuous variable, one per
/// boundary, each an index into that variable's sorted distinct values.
class BoundaryEncoding {
 public:
  BoundaryEncoding(const SolutionModel& model, const NormalizedDataset& data) {
    for (std::size_t v = 0; v < data.n_vars(); ++v) {
      if (!data.meta[v].is_continuous() || model.bins[v] < 2) continue;
      Group g;
      g.var = v;
      g.u = distinct_sorted(data.columns[v]);
      if (g.u.size() < static_cast<std::size_t>(model.bins[v])) {
        throw std::invalid_argument("postopt: variable '" + data.meta[v].name + "' has fewer distinct values than bins");
      }
      g.offset = dim_;
      g.count = static_cast<std::size_t>(model.bins[v] - 1);
      dim_ += g.count;
      groups_.push_back(std::move(g));
    }
  }

  struct Group {
    std::size_t var = 0;
    std::vector<double> u;
    std::size_t offset = 0;
    std::size_t count = 0;
  };

  std::size_t dimension() const { return dim_; }
  const std::vector<Group>& groups() const { return groups_; }

  /// Parameter positions grouped per variable.
  std::vector<std::vector<std::size_t>> parameter_groups() const {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& g : groups_) {
      std::vector<std::size_t> idx(g.count);
      std::iota(idx.begin(), idx.end(), g.offset);
      out.push_back(std::move(idx));
    }
    return out;
  }

  std::vector<double> lower() const { return std::vector<double>(dim_, 0.0); }
  std::vector<double> upper() const {
    std::vector<double> out(dim_);
    for (const auto& g : groups_) {
      std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(g.offset), g.count, static_cast<double>(g.u.size() - 1));
    }
    return out;
  }

  /// Repaired integer indices of one group. Counts clamped parameters.
  std::vector<std::size_t> indices(const Group& g, std::span<const double> x, std::size_t* clamped = nullptr) const {
    const std::size_t max_index = g.u.size() - 2;
    std::vector<std::size_t> idx(g.count);
    for (std::size_t b = 0; b < g.count; ++b) {
      const double f = std::floor(x[g.offset + b]);
      const double c = std::clamp(std::isfinite(f) ? f : 0.0, 0.0, static_cast<double>(max_index));
      if (clamped && c != f) ++*clamped;
      idx[b] = static_cast<std::size_t>(c);
    }
    return repair_indices(std::move(idx), max_index);
  }

  std::vector<double> boundaries(const Group& g, std::span<const double> x, std::size_t* clamped = nullptr) const {
    std::vector<double> out;
    for (auto i : indices(g, x, clamped)) out.push_back((g.u[i] + g.u[i + 1]) / 2.0);
    return out;
  }

  SolutionModel decode(const SolutionModel& base, std::span<const double> x, std::size_t* clamped = nullptr) const {
    SolutionModel m = base;
    for (const auto& g : groups_) m.boundaries[g.var] = boundaries(g, x, clamped);
    return m;
  }

  /// Parameters reproducing the data partition of `model`'s boundaries.
  std::vector<double> encode(const SolutionModel& model) const {
    std::vector<double> x(dim_);
    for (const auto& g : groups_) {
      const auto& bd = model.boundaries[g.var];
      std::vector<std::size_t> idx;
      for (double b : bd) {
        const auto pos = static_cast<std::size_t>(std::lower_bound(g.u.begin(), g.u.end(), b) - g.u.begin());
        idx.push_back(std::clamp<std::size_t>(pos, 1, g.u.size() - 1) - 1);
      }
      idx = repair_indices(std::move(idx), g.u.size() - 2);
      for (std::size_t b = 0; b < g.count; ++b) x[g.offset + b] = static_cast<double>(idx[b]) + 0.5;
    }
    return x;
  }

 private:
  std::vector<Group> groups_;
  std::size_t dim_ = 0;
};

/// Fitness of boundary parameter vectors. Only nodes whose own or parent
/// boundaries changed since the previous call are rescored.
class BoundaryObjective {
 public:
  BoundaryObjective(const SolutionModel& model, const NormalizedDataset& data, const BoundaryEncoding& encoding,
                    ScoreOptions options = {})
      : model_(model), data_(data), encoding_(encoding), options_(options) {
    const std::size_t n_vars = data.n_vars();
    bins_.resize(n_vars);
    log_widths_.resize(n_vars);
    boundaries_ = model.boundaries;
    scores_.resize(n_vars);
    children_ = model.dag.children();
    for (std::size_t v = 0; v < n_vars; ++v) rebin(v);
    for (std::size_t v = 0; v < n_vars; ++v) rescore(v);
  }

  std::uint64_t evaluations() const { return evaluations_; }
  std::size_t clamped() const { return clamped_; }

  double operator()(std::span<const double> x) {
    ++evaluations_;
    std::vector<char> dirty(data_.n_vars(), 0);
    for (const auto& g : encoding_.groups()) {
      auto bd = encoding_.boundaries(g, x, &clamped_);
      if (bd == boundaries_[g.var]) continue;
      boundaries_[g.var] = std::move(bd);
      rebin(g.var);
      dirty[g.var] = 1;
      for (auto c : children_[g.var]) dirty[c] = 1;
    }
    double total = 0.0;
    for (std::size_t v = 0; v < data_.n_vars(); ++v) {
      if (dirty[v]) rescore(v);
      total += scores_[v].log_density - scores_[v].penalty;
    }
    return total;
  }

 private:
  void rebin(std::size_t v) {
    if (data_.meta[v].is_discrete()) {
      bins_[v].assign(data_.columns[v].begin(), data_.columns[v].end());
      return;
    }
    bins_[v] = assign_column(data_.columns[v], boundaries_[v]);
    log_widths_[v].clear();
    for (double w : bin_widths(boundaries_[v])) log_widths_[v].push_back(std::log(w));
  }

  BinnedColumn column(std::size_t v) const {
    BinnedColumn c;
    c.train = bins_[v];
    c.bins = model_.bins[v];
    c.log_widths = log_widths_[v];
    return c;
  }

  void rescore(std::size_t v) {
    const auto child = column(v);
    std::vector<BinnedColumn> parents;
    for (auto p : model_.dag.parents(v)) parents.push_back(column(p));
    std::vector<const BinnedColumn*> ptrs;
    for (const auto& p : parents) ptrs.push_back(&p);
    scores_[v] = score_node(child, ptrs, options_);
  }

  const SolutionModel& model_;
  const NormalizedDataset& data_;
  const BoundaryEncoding& encoding_;
  ScoreOptions options_;
  std::vector<std::vector<std::uint8_t>> bins_;
  std::vector<std::vector<double>> log_widths_;
  std::vector<std::vector<double>> boundaries_;
  std::vector<NodeScore> scores_;
  Adjacency children_;
  std::uint64_t evaluations_ = 0;
  std::size_t clamped_ = 0;
};

// ---------------------------------------------------------------------------
// Real-valued optimization

struct RealValuedProblem {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::vector<std::size_t>> groups;  // linked parameter subsets
  std::function<double(std::span<const double>)> objective;  // maximized
};

struct RealValuedResult {
  std::vector<double> best;
  double best_value = -std::numeric_limits<double>::infinity();
  std::uint64_t evaluations = 0;
  std::vector<double> trajectory;  // best value after every improvement
};

class RealValuedOptimizer {
 public:
  virtual ~RealValuedOptimizer() = default;
  /// Maximizes `problem.objective` starting from `initial` within
  /// `max_evaluations` calls.
  virtual RealValuedResult maximize(const RealValuedProblem& problem, std::span<const double> initial,
                                    std::uint64_t max_evaluations, Rng& rng) = 0;
};

/// Population-based optimizer with per-group mixing. Each member, group by
/// group, receives a donor's group values plus Gaussian noise and keeps the
/// change unless it is worse. After every generation the elite is polished by
/// a coordinate pattern search.
class GroupedMixingOptimizer : public RealValuedOptimizer {
 public:
  explicit GroupedMixingOptimizer(std::size_t population_size = 12, double noise = 0.1)
      : population_size_(std::max<std::size_t>(population_size, 2)), noise_(noise) {}

  RealValuedResult maximize(const RealValuedProblem& problem, std::span<const double> initial,
                            std::uint64_t max_evaluations, Rng& rng) override {
    const std::size_t dim = problem.lower.size();
    RealValuedResult result;
    result.best.assign(initial.begin(), initial.end());
    if (max_evaluations == 0) return result;
    auto eval = [&](const std::vector<double>& x) {
      ++result.evaluations;
      const double f = problem.objective(x);
      if (f > result.best_value) {
        result.best_value = f;
        result.best = x;
        result.trajectory.push_back(f);
      }
      return f;
    };
    auto out_of_budget = [&] { return result.evaluations >= max_evaluations; };

    std::vector<std::vector<double>> pop;
    std::vector<double> fit;
    pop.emplace_back(initial.begin(), initial.end());
    fit.push_back(eval(pop.back()));
    while (pop.size() < population_size_ && !out_of_budget()) {
      std::vector<double> x(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        x[d] = std::uniform_real_distribution<double>(problem.lower[d], problem.upper[d])(rng);
      }
      fit.push_back(eval(x));
      pop.push_back(std::move(x));
    }
    if (dim == 0) return result;

    std::vector<std::size_t> group_order(problem.groups.size());
    std::iota(group_order.begin(), group_order.end(), 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
    while (!out_of_budget()) {
      for (std::size_t i = 0; i < pop.size() && !out_of_budget(); ++i) {
        std::shuffle(group_order.begin(), group_order.end(), rng);
        for (auto gi : group_order) {
          if (out_of_budget()) break;
          const auto& donor = pop[pick(rng)];
          auto trial = pop[i];
          for (auto d : problem.groups[gi]) {
            const double span = problem.upper[d] - problem.lower[d];
            trial[d] = std::clamp(donor[d] + noise_ * span * gauss(rng), problem.lower[d], problem.upper[d]);
          }
          const double f = eval(trial);
          if (f >= fit[i]) {
            pop[i] = std::move(trial);
            fit[i] = f;
          }
        }
      }
      polish(problem, result, eval, out_of_budget);
    }
    return result;
  }

 private:
  template <class Eval, class Stop>
  static void polish(const RealValuedProblem& problem, RealValuedResult& result, Eval& eval, Stop& out_of_budget) {
    std::vector<double> x = result.best;
    double fx = result.best_value;
    for (std::size_t d = 0; d < x.size(); ++d) {
      for (double step = 1.0; step < problem.upper[d] - problem.lower[d]; step *= 2.0) {
        bool moved = false;
        for (double dir : {-1.0, 1.0}) {
          if (out_of_budget()) return;
          auto trial = x;
          trial[d] = std::clamp(x[d] + dir * step, problem.lower[d], problem.upper[d]);
          if (trial[d] == x[d]) continue;
          const double f = eval(trial);
          if (f > fx) {
            x = std::move(trial);
            fx = f;
            moved = true;
            break;
          }
        }
        if (moved) step = 0.5;  // restart from unit steps around the new point
      }
    }
  }

  std::size_t population_size_;
  double noise_;
};

struct PostOptConfig {
  std::uint64_t max_evaluations = 2000;
  ScoreOptions score;
};

struct PostOptResult {
  SolutionModel model;
  double fitness_before = 0.0;
  double fitness_after = 0.0;
  std::uint64_t evaluations = 0;
  std::size_t clamped_parameters = 0;
  std::vector<double> trajectory;
};

/// Optimizes boundary placement of a model with fixed structure and bin
/// counts. The result is never worse than the input.
inline PostOptResult optimize_boundaries(const SolutionModel& model, const NormalizedDataset& data,
                                         const PostOptConfig& config, Rng& rng,
                                         RealValuedOptimizer* optimizer = nullptr) {
  model.validate(data.meta);
  PostOptResult out;
  out.model = model;
  out.fitness_before = evaluate_model(model, data, config.score).total();
  out.fitness_after = out.fitness_before;
  const BoundaryEncoding encoding(model, data);
  if (config.max_evaluations == 0 || encoding.dimension() == 0) return out;

  BoundaryObjective objective(model, data, encoding, config.score);
  RealValuedProblem problem;
  problem.lower = encoding.lower();
  problem.upper = encoding.upper();
  problem.groups = encoding.parameter_groups();
  problem.objective = [&](std::span<const double> x) { return objective(x); };

  GroupedMixingOptimizer fallback;
  RealValuedOptimizer& opt = optimizer ? *optimizer : fallback;
  const auto start = encoding.encode(model);
  auto result = opt.maximize(problem, start, config.max_evaluations, rng);
  out.evaluations = result.evaluations;
  out.trajectory = std::move(result.trajectory);
  out.clamped_parameters = objective.clamped();
  if (result.evaluations == 0) return out;

  auto candidate = encoding.decode(model, result.best);
  const double f = evaluate_model(candidate, data, config.score).total();
  if (f > out.fitness_before) {
    out.model = std::move(candidate);
    out.fitness_after = f;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bayesian refinement

/// Joint configuration id of `vars` per sample under `model`'s binning of data.
inline std::vector<std::uint32_t> context_ids(const NormalizedDataset& data, const SolutionModel& model,
                                              std::span<const std::size_t> vars) {
  const auto assignment = assign_bins(data, model);
  std::map<std::vector<std::uint8_t>, std::uint32_t> ids;
  std::vector<std::uint32_t> out(data.n);
  std::vector<std::uint8_t> key(vars.size());
  for (std::size_t s = 0; s < data.n; ++s) {
    for (std::size_t i = 0; i < vars.size(); ++i) key[i] = assignment.bins[vars[i]][s];
    auto [it, inserted] = ids.try_emplace(key, static_cast<std::uint32_t>(ids.size()));
    out[s] = it->second;
  }
  return out;
}

/// Replaces each continuous variable's boundaries, in topological order, by
/// the Bayesian discretization given its Markov blanket under the current
/// model. Bin counts follow the discretizer (possibly 1).
inline SolutionModel refine_bayesian(const SolutionModel& model, const NormalizedDataset& data,
                                     const BayesianDiscretizationOptions& options = {}) {
  model.validate(data.meta);
  SolutionModel m = model;
  for (auto v : m.dag.topological_order()) {
    if (!data.meta[v].is_continuous()) continue;
    const auto mb = m.dag.markov_blanket(v);
    const auto ctx = context_ids(data, m, mb);
    const auto bd = bayesian_discretize(data.columns[v], ctx, options);
    m.boundaries[v] = bd.boundaries;
    m.bins[v] = static_cast<int>(bd.boundaries.size()) + 1;
  }
  return m;
}

}  // namespace dbngomea
