#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "dbngomea/fitness.hpp"
#include "dbngomea/linkage.hpp"
#include "dbngomea/model.hpp"

namespace dbngomea {

struct Solution {
  Genotype genotype;
  ContingencyCache cache;

  double fitness() const { return cache.breakdown.total(); }
};

inline Solution make_solution(Genotype g, const DensityEvaluator& eval) {
  repair_cycles_in_place(g, eval.layout());
  Solution s;
  s.cache = eval.make_cache(g);
  s.genotype = std::move(g);
  return s;
}

/// Evaluation and wall-clock limits. Unset fields are unlimited.
struct Budget {
  std::optional<std::uint64_t> max_evaluations;
  std::optional<double> max_seconds;
};

class BudgetTracker {
 public:
  using Clock = std::chrono::steady_clock;

  BudgetTracker(Budget budget, const std::uint64_t* evaluation_counter)
      : budget_(budget), evaluations_(evaluation_counter), start_(Clock::now()) {}

  double elapsed() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }

  bool exhausted() const {
    if (budget_.max_evaluations && *evaluations_ >= *budget_.max_evaluations) return true;
    if (budget_.max_seconds && elapsed() >= *budget_.max_seconds) return true;
    return false;
  }

 private:
  Budget budget_;
  const std::uint64_t* evaluations_;
  Clock::time_point start_;
};

/// Shared state handed to the variation operators.
struct SearchContext {
  SearchContext(const DensityEvaluator& e, Rng& r) : evaluator(e), rng(r) {}

  const DensityEvaluator& evaluator;
  Rng& rng;
  std::uint64_t evaluations = 0;
  std::optional<BudgetTracker> budget;
  std::function<void(const Solution&)> on_improvement;

  bool exhausted() const { return budget && budget->exhausted(); }

  // Evaluates `trial` (derived from `base`) by partial evaluation. Returns
  // false if nothing changed, in which case no evaluation is spent.
  bool evaluate_from(const Solution& base, Solution& trial) {
    const auto changed = changed_genes(base.genotype, trial.genotype);
    if (changed.empty()) return false;
    evaluator.partial_evaluate(trial.genotype, changed, trial.cache);
    ++evaluations;
    return true;
  }
};

/// Symbols of every gene of every solution, for linkage learning.
inline std::vector<std::vector<std::uint8_t>> gene_symbols(const std::vector<Solution>& pop,
                                                           const GenomeLayout& layout) {
  std::vector<std::vector<std::uint8_t>> out(pop.size(), std::vector<std::uint8_t>(layout.n_genes()));
  for (std::size_t s = 0; s < pop.size(); ++s) {
    for (std::size_t i = 0; i < layout.n_genes(); ++i) {
      out[s][i] = static_cast<std::uint8_t>(layout.symbol(i, pop[s].genotype.gene(i)));
    }
  }
  return out;
}

inline std::vector<int> gene_alphabets(const GenomeLayout& layout) {
  std::vector<int> a(layout.n_genes());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = layout.alphabet_size(i);
  return a;
}

inline LinkageTree learn_linkage_tree(const std::vector<Solution>& pop, const GenomeLayout& layout, Rng& rng,
                                      LinkageOptions options = {}) {
  return learn_linkage_tree(gene_symbols(pop, layout), gene_alphabets(layout), rng, options);
}

/// Gene-pool optimal mixing. Each FOS element, in random order, is copied
/// from a random donor; cycles are repaired and the change is reverted only
/// if fitness becomes strictly worse.
inline Solution gom(const Solution& target, const LinkageTree& tree, const std::vector<Solution>& donors,
                    SearchContext& ctx, std::size_t self_index = static_cast<std::size_t>(-1)) {
  Solution current = target;
  if (donors.size() < 2 && self_index < donors.size()) return current;
  if (donors.empty()) return current;
  std::vector<std::size_t> order(tree.elements.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), ctx.rng);
  std::uniform_int_distribution<std::size_t> pick(0, donors.size() - 1);
  const auto& layout = ctx.evaluator.layout();
  for (auto e : order) {
    if (ctx.exhausted()) break;
    const auto& element = tree.elements[e];
    std::size_t d = pick(ctx.rng);
    while (d == self_index) d = pick(ctx.rng);
    const auto& donor = donors[d].genotype;
    bool differs = false;
    bool edge_changed = false;
    for (auto i : element) {
      if (current.genotype.gene(i) != donor.gene(i)) {
        differs = true;
        edge_changed = edge_changed || layout.is_edge_gene(i);
      }
    }
    if (!differs) continue;
    Solution trial = current;
    for (auto i : element) trial.genotype.set_gene(i, donor.gene(i));
    if (edge_changed) repair_cycles_in_place(trial.genotype, layout);
    if (!ctx.evaluate_from(current, trial)) continue;
    if (trial.fitness() >= current.fitness()) {
      const bool improved = trial.fitness() > current.fitness();
      current = std::move(trial);
      if (improved && ctx.on_improvement) ctx.on_improvement(current);
    }
  }
  return current;
}

/// Visits every gene once in random order and tries its alternative values
/// (edge: the two other trits; bins: k - 1 and k + 1 within bounds). Only
/// strict improvements are kept.
inline Solution local_search(const Solution& start, SearchContext& ctx) {
  Solution current = start;
  const auto& layout = ctx.evaluator.layout();
  std::vector<std::size_t> order(layout.n_genes());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), ctx.rng);
  std::vector<int> candidates;
  for (auto i : order) {
    const int value = current.genotype.gene(i);
    candidates.clear();
    if (layout.is_edge_gene(i)) {
      for (int t = 0; t < 3; ++t) {
        if (t != value) candidates.push_back(t);
      }
      std::shuffle(candidates.begin(), candidates.end(), ctx.rng);
    } else {
      if (value - 1 >= layout.bin_min()) candidates.push_back(value - 1);
      if (value + 1 <= layout.bin_max()) candidates.push_back(value + 1);
    }
    for (int c : candidates) {
      if (ctx.exhausted()) return current;
      Solution trial = current;
      trial.genotype.set_gene(i, c);
      if (layout.is_edge_gene(i)) repair_cycles_in_place(trial.genotype, layout);
      if (!ctx.evaluate_from(current, trial)) continue;
      if (trial.fitness() > current.fitness()) {
        current = std::move(trial);
        if (ctx.on_improvement) ctx.on_improvement(current);
      }
    }
  }
  return current;
}

// ---------------------------------------------------------------------------
// Interleaved multi-start scheme

struct LearnerConfig {
  Budget budget;
  LinkageOptions linkage;
  int ims_base = 4;                     // generations of a population per generation of the next
  std::size_t base_population_size = 2;
  std::size_t max_population_size = std::size_t{1} << 12;
  bool retire_populations = true;
};

struct RunRecord {
  double elapsed_s = 0.0;
  std::uint64_t evaluations = 0;
  std::size_t population = 0;  // index of the population that just stepped
  std::vector<std::size_t> population_sizes;  // active populations
  double best_fitness = 0.0;
  bool partial = false;  // budget ran out mid-generation
};

struct RunResult {
  Solution best;
  std::vector<RunRecord> log;
  std::vector<std::size_t> schedule;  // population index of every completed generation
  std::uint64_t evaluations = 0;
  double elapsed_s = 0.0;
  std::size_t generations = 0;
  bool budget_degraded = false;  // ended before the first full generation
};

namespace detail {

struct SoPopulation {
  std::vector<Solution> members;
  std::size_t generations = 0;
  bool retired = false;

  double mean_fitness() const {
    double s = 0.0;
    for (const auto& m : members) s += m.fitness();
    return s / static_cast<double>(members.size());
  }
  bool converged() const {
    for (const auto& m : members) {
      if (!(m.genotype == members.front().genotype)) return false;
    }
    return true;
  }
};

class SoRunner {
 public:
  SoRunner(const LearnerConfig& config, const DensityEvaluator& eval, Rng& rng)
      : config_(config), eval_(eval), ctx_{eval, rng} {
    ctx_.budget.emplace(config.budget, &ctx_.evaluations);
    ctx_.on_improvement = [this](const Solution& s) { offer(s); };
  }

  RunResult run() {
    if (config_.ims_base < 1 || config_.base_population_size < 2) {
      throw std::invalid_argument("LearnerConfig: ims_base >= 1 and base population >= 2 required");
    }
    // the first population is always initialized, even under a zero budget
    add_population();
    while (!ctx_.exhausted() && !finished_) {
      step(0);
      // nothing left to run once every population is retired and no larger one may start
      if (all_retired() && size_of(pops_.size()) > config_.max_population_size) finished_ = true;
    }
    result_.evaluations = ctx_.evaluations;
    result_.elapsed_s = ctx_.budget->elapsed();
    result_.budget_degraded = result_.generations == 0;
    return std::move(result_);
  }

 private:
  void offer(const Solution& s) {
    if (!has_best_ || s.fitness() > result_.best.fitness()) {
      result_.best = s;
      has_best_ = true;
    }
  }

  std::size_t size_of(std::size_t index) const { return config_.base_population_size << index; }

  void add_population() {
    const std::size_t index = pops_.size();
    SoPopulation pop;
    const auto size = size_of(index);
    for (std::size_t i = 0; i < size; ++i) {
      if (index > 0 && ctx_.exhausted()) break;
      pop.members.push_back(make_solution(eval_.layout().random_genotype(ctx_.rng), eval_));
      ++ctx_.evaluations;
      offer(pop.members.back());
    }
    if (pop.members.size() < size) {
      log(index, true);
      finished_ = true;  // budget ran out during initialization
      return;
    }
    for (auto& m : pop.members) {
      if (ctx_.exhausted()) break;
      m = local_search(m, ctx_);
    }
    pops_.push_back(std::move(pop));
  }

  void step(std::size_t index) {
    if (index == pops_.size()) {
      if (size_of(index) <= config_.max_population_size) add_population();
      return;
    }
    auto& pop = pops_[index];
    if (!pop.retired) generation(index);
    if (ctx_.exhausted() || finished_) return;
    ++pop.generations;
    if (pop.generations % static_cast<std::size_t>(config_.ims_base) == 0) step(index + 1);
  }

  bool all_retired() const {
    return std::all_of(pops_.begin(), pops_.end(), [](const auto& p) { return p.retired; });
  }

  void generation(std::size_t index) {
    auto& pop = pops_[index];
    const auto tree = learn_linkage_tree(pop.members, eval_.layout(), ctx_.rng, config_.linkage);
    std::vector<Solution> offspring;
    offspring.reserve(pop.members.size());
    for (std::size_t i = 0; i < pop.members.size(); ++i) {
      if (ctx_.exhausted()) {
        offspring.push_back(pop.members[i]);
        continue;
      }
      offspring.push_back(gom(pop.members[i], tree, pop.members, ctx_, i));
    }
    for (auto& s : offspring) {
      if (ctx_.exhausted()) break;
      s = local_search(s, ctx_);
    }
    pop.members = std::move(offspring);
    const bool partial = ctx_.exhausted();
    if (!partial) {
      ++result_.generations;
      result_.schedule.push_back(index);
    }
    log(index, partial);
    if (config_.retire_populations) update_retirement();
  }

  void update_retirement() {
    for (std::size_t i = 0; i < pops_.size(); ++i) {
      if (pops_[i].retired) continue;
      if (pops_[i].converged()) {
        pops_[i].retired = true;
        continue;
      }
      for (std::size_t j = i + 1; j < pops_.size(); ++j) {
        if (!pops_[j].retired && pops_[j].generations > 0 && pops_[i].mean_fitness() < pops_[j].mean_fitness()) {
          for (std::size_t k = 0; k <= i; ++k) pops_[k].retired = true;
          break;
        }
      }
    }
  }

  void log(std::size_t index, bool partial) {
    RunRecord r;
    r.elapsed_s = ctx_.budget->elapsed();
    r.evaluations = ctx_.evaluations;
    r.population = index;
    for (const auto& p : pops_) {
      if (!p.retired) r.population_sizes.push_back(p.members.size());
    }
    r.best_fitness = has_best_ ? result_.best.fitness() : -std::numeric_limits<double>::infinity();
    r.partial = partial;
    result_.log.push_back(std::move(r));
  }

  const LearnerConfig& config_;
  const DensityEvaluator& eval_;
  SearchContext ctx_;
  std::vector<SoPopulation> pops_;
  RunResult result_;
  bool has_best_ = false;
  bool finished_ = false;
};

}  // namespace detail

/// Single-objective structure and bin-count learning with the interleaved
/// multi-start scheme: population i (size base * 2^i) runs `ims_base`
/// generations per generation of population i + 1. Each generation learns a
/// linkage tree, applies GOM to every member and then local search.
inline RunResult run(const LearnerConfig& config, const DensityEvaluator& evaluator, Rng& rng) {
  return detail::SoRunner(config, evaluator, rng).run();
}

}  // namespace dbngomea
