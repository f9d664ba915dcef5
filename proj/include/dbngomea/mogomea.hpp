#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "dbngomea/archive.hpp"
#include "dbngomea/fitness.hpp"
#include "dbngomea/sogomea.hpp"

namespace dbngomea {

inline constexpr double kComplexityFactor = 10.0;

/// Violation of the complexity cap: max(0, C(candidate) - factor * C(expert)).
inline double complexity_constraint(double candidate_complexity, double expert_complexity,
                                    double factor = kComplexityFactor) {
  return std::max(0.0, candidate_complexity - factor * expert_complexity);
}

/// Monte-Carlo KL(expert || candidate) with both models fitted on `data`:
/// mean over `mc` samples drawn from the fitted expert of
/// log p_expert(x) - log q_candidate(x), clamped at 0.
inline double kl_to_expert(const SolutionModel& candidate, const SolutionModel& expert, const NormalizedDataset& data,
                           std::size_t mc, Rng& rng, const ScoreOptions& options = {}) {
  if (mc == 0) throw std::invalid_argument("kl_to_expert: sample budget must be positive");
  const FittedModel fitted_expert(expert, data, options);
  const auto samples = fitted_expert.sample(mc, rng);
  const double lp = evaluate_model(expert, data, options, &samples).reference_log_likelihood();
  const double lq = evaluate_model(candidate, data, options, &samples).reference_log_likelihood();
  return std::max(0.0, (lp - lq) / static_cast<double>(mc));
}

/// Everything the tri-objective search needs about one data set and expert:
/// a density evaluator whose reference samples are a fixed Monte-Carlo draw
/// from the fitted expert, the expert's own mean log-density on that draw and
/// its complexity.
class MoProblem {
 public:
  MoProblem(const NormalizedDataset& data, GenomeLayout layout, EvaluatorOptions options, const SolutionModel& expert,
            std::size_t mc_samples, std::uint64_t mc_seed, double complexity_factor = kComplexityFactor)
      : expert_(expert), mc_samples_(mc_samples), complexity_factor_(complexity_factor) {
    if (mc_samples == 0) throw std::invalid_argument("MoProblem: Monte-Carlo sample budget must be positive");
    expert_.validate(data.meta);
    Rng rng(mc_seed);
    samples_ = FittedModel(expert_, data, options.score).sample(mc_samples, rng);
    evaluator_.emplace(data, std::move(layout), options, &samples_);
    expert_mean_log_density_ =
        evaluate_model(expert_, data, options.score, &samples_).reference_log_likelihood() / mc_samples;
    expert_complexity_ = model_complexity(expert_, data.n);
  }

  const DensityEvaluator& evaluator() const { return *evaluator_; }
  const SolutionModel& expert() const { return expert_; }
  double expert_complexity() const { return expert_complexity_; }
  const NormalizedDataset& samples() const { return samples_; }

  ObjectiveVector objectives(const FitnessBreakdown& b) const {
    ObjectiveVector o;
    if (!b.valid()) {
      o.ll = -std::numeric_limits<double>::infinity();
      o.complexity = b.complexity();
      o.kl_expert = std::numeric_limits<double>::infinity();
      o.constraint = std::numeric_limits<double>::infinity();
      return o;
    }
    o.ll = b.log_likelihood();
    o.complexity = b.complexity();
    o.kl_expert = std::max(0.0, expert_mean_log_density_ - b.reference_log_likelihood() / mc_samples_);
    o.constraint = complexity_constraint(o.complexity, expert_complexity_, complexity_factor_);
    return o;
  }

 private:
  SolutionModel expert_;
  std::size_t mc_samples_;
  double complexity_factor_;
  NormalizedDataset samples_;
  std::optional<DensityEvaluator> evaluator_;
  double expert_mean_log_density_ = 0.0;
  double expert_complexity_ = 0.0;
};

struct MoSolution {
  Solution solution;
  ObjectiveVector objectives;
};

/// How often each MO acceptance rule fired.
struct MoAcceptanceStats {
  std::uint64_t dominates_parent = 0;      // rule 1
  std::uint64_t equal_objectives = 0;      // rule 2
  std::uint64_t archive_nondominated = 0;  // rule 3
  std::uint64_t rejected = 0;
};

enum class MoAcceptance : std::uint8_t { dominates_parent, equal_objectives, archive_nondominated, rejected };

/// Acceptance of an altered solution against its unaltered version.
inline MoAcceptance mo_acceptance(const ObjectiveVector& altered, const ObjectiveVector& unaltered,
                                  const ElitistArchive& archive) {
  if (constraint_dominates(altered, unaltered)) return MoAcceptance::dominates_parent;
  if (altered == unaltered) return MoAcceptance::equal_objectives;
  if (!archive.dominated(altered)) return MoAcceptance::archive_nondominated;
  return MoAcceptance::rejected;
}

inline void record(MoAcceptanceStats& stats, MoAcceptance a) {
  switch (a) {
    case MoAcceptance::dominates_parent: ++stats.dominates_parent; break;
    case MoAcceptance::equal_objectives: ++stats.equal_objectives; break;
    case MoAcceptance::archive_nondominated: ++stats.archive_nondominated; break;
    case MoAcceptance::rejected: ++stats.rejected; break;
  }
}

namespace detail {

inline bool offer_to_archive(ElitistArchive& archive, const MoSolution& s) {
  return archive.insert(ArchiveEntry{s.solution.genotype, s.objectives});
}

// Copies the element genes from a donor, repairs, and re-evaluates. Returns
// nullopt if the genotype did not change.
inline std::optional<MoSolution> mix_element(const MoSolution& current, const std::vector<std::size_t>& element,
                                             const Genotype& donor, SearchContext& ctx, const MoProblem& problem) {
  const auto& layout = ctx.evaluator.layout();
  bool differs = false;
  bool edge_changed = false;
  for (auto i : element) {
    if (current.solution.genotype.gene(i) != donor.gene(i)) {
      differs = true;
      edge_changed = edge_changed || layout.is_edge_gene(i);
    }
  }
  if (!differs) return std::nullopt;
  MoSolution trial = current;
  for (auto i : element) trial.solution.genotype.set_gene(i, donor.gene(i));
  if (edge_changed) repair_cycles_in_place(trial.solution.genotype, layout);
  if (!ctx.evaluate_from(current.solution, trial.solution)) return std::nullopt;
  trial.objectives = problem.objectives(trial.solution.cache.breakdown);
  return trial;
}

inline std::vector<std::size_t> fos_order(const LinkageTree& tree, Rng& rng) {
  std::vector<std::size_t> order(tree.elements.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

inline std::size_t pick_donor(std::size_t n, std::size_t self, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t d = pick(rng);
  while (d == self && n > 1) d = pick(rng);
  return d;
}

}  // namespace detail

/// Multi-objective GOM: a change is kept if the altered solution
/// constraint-dominates the unaltered one, has identical objectives, or is
/// not dominated by any archive entry. Kept changes are offered to the archive.
inline MoSolution mo_gom(const MoSolution& target, const LinkageTree& tree, const std::vector<MoSolution>& donors,
                         ElitistArchive& archive, SearchContext& ctx, const MoProblem& problem,
                         MoAcceptanceStats* stats = nullptr, std::size_t self_index = static_cast<std::size_t>(-1)) {
  MoSolution current = target;
  if (donors.empty() || (donors.size() == 1 && self_index == 0)) return current;
  for (auto e : detail::fos_order(tree, ctx.rng)) {
    if (ctx.exhausted()) break;
    const auto d = detail::pick_donor(donors.size(), self_index, ctx.rng);
    auto trial = detail::mix_element(current, tree.elements[e], donors[d].solution.genotype, ctx, problem);
    if (!trial) continue;
    const auto verdict = mo_acceptance(trial->objectives, current.objectives, archive);
    if (stats) record(*stats, verdict);
    if (verdict == MoAcceptance::rejected) continue;
    current = std::move(*trial);
    detail::offer_to_archive(archive, current);
  }
  return current;
}

/// Single-objective GOM on one objective (index into `minimized()`), used by
/// the extreme clusters. Constraint violation is compared first.
inline MoSolution so_objective_gom(const MoSolution& target, std::size_t objective, const LinkageTree& tree,
                                   const std::vector<MoSolution>& donors, ElitistArchive& archive, SearchContext& ctx,
                                   const MoProblem& problem, std::size_t self_index = static_cast<std::size_t>(-1)) {
  MoSolution current = target;
  if (donors.empty() || (donors.size() == 1 && self_index == 0)) return current;
  for (auto e : detail::fos_order(tree, ctx.rng)) {
    if (ctx.exhausted()) break;
    const auto d = detail::pick_donor(donors.size(), self_index, ctx.rng);
    auto trial = detail::mix_element(current, tree.elements[e], donors[d].solution.genotype, ctx, problem);
    if (!trial) continue;
    const auto& a = trial->objectives;
    const auto& b = current.objectives;
    const bool keep = a.constraint < b.constraint ||
                      (a.constraint == b.constraint && a.minimized()[objective] <= b.minimized()[objective]);
    if (!keep) continue;
    current = std::move(*trial);
    detail::offer_to_archive(archive, current);
  }
  return current;
}

// ---------------------------------------------------------------------------
// Clustering

struct Clustering {
  std::vector<std::vector<std::size_t>> clusters;  // member indices
  std::vector<std::optional<std::size_t>> objective_of_cluster;  // set for the m extreme clusters
};

/// Min-max normalized objectives (minimization form); non-finite values map to 1.
inline std::vector<std::array<double, kObjectiveCount>> normalized_objectives(
    const std::vector<ObjectiveVector>& objs) {
  std::array<double, kObjectiveCount> lo;
  std::array<double, kObjectiveCount> hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  for (const auto& o : objs) {
    const auto m = o.minimized();
    for (std::size_t i = 0; i < kObjectiveCount; ++i) {
      if (!std::isfinite(m[i])) continue;
      lo[i] = std::min(lo[i], m[i]);
      hi[i] = std::max(hi[i], m[i]);
    }
  }
  std::vector<std::array<double, kObjectiveCount>> out(objs.size());
  for (std::size_t s = 0; s < objs.size(); ++s) {
    const auto m = objs[s].minimized();
    for (std::size_t i = 0; i < kObjectiveCount; ++i) {
      if (!std::isfinite(m[i])) {
        out[s][i] = 1.0;
      } else {
        out[s][i] = hi[i] > lo[i] ? (m[i] - lo[i]) / (hi[i] - lo[i]) : 0.0;
      }
    }
  }
  return out;
}

/// Balanced leader clustering: leaders chosen by farthest-point traversal,
/// then (solution, leader) pairs assigned greedily by increasing distance
/// under per-cluster capacities that differ by at most one. The m extreme
/// clusters are those with the best mean value on each objective.
inline Clustering balanced_clusters(const std::vector<ObjectiveVector>& objs, std::size_t c, Rng& rng) {
  const std::size_t n = objs.size();
  if (c == 0 || c > n) throw std::invalid_argument("balanced_clusters: need 1 <= c <= population size");
  const auto pts = normalized_objectives(objs);
  auto dist = [&](std::size_t a, std::size_t b) {
    double d = 0.0;
    for (std::size_t i = 0; i < kObjectiveCount; ++i) d += (pts[a][i] - pts[b][i]) * (pts[a][i] - pts[b][i]);
    return d;
  };

  std::vector<std::size_t> leaders;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  leaders.push_back(pick(rng));
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (leaders.size() < c) {
    for (std::size_t s = 0; s < n; ++s) nearest[s] = std::min(nearest[s], dist(s, leaders.back()));
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t s = 0; s < n; ++s) {
      if (nearest[s] > far_d) {
        far_d = nearest[s];
        far = s;
      }
    }
    leaders.push_back(far);
  }

  std::vector<std::size_t> capacity(c, n / c);
  for (std::size_t k = 0; k < n % c; ++k) ++capacity[k];
  struct Pair {
    double d;
    std::size_t s, k;
  };
  std::vector<Pair> pairs;
  pairs.reserve(n * c);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < c; ++k) pairs.push_back({dist(s, leaders[k]), s, k});
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });
  Clustering out;
  out.clusters.resize(c);
  std::vector<char> assigned(n, 0);
  for (const auto& p : pairs) {
    if (assigned[p.s] || out.clusters[p.k].size() >= capacity[p.k]) continue;
    assigned[p.s] = 1;
    out.clusters[p.k].push_back(p.s);
  }

  out.objective_of_cluster.assign(c, std::nullopt);
  const std::size_t m = std::min(kObjectiveCount, c);
  for (std::size_t obj = 0; obj < m; ++obj) {
    std::optional<std::size_t> best;
    double best_mean = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c; ++k) {
      if (out.objective_of_cluster[k] || out.clusters[k].empty()) continue;
      double mean = 0.0;
      for (auto s : out.clusters[k]) mean += pts[s][obj];
      mean /= static_cast<double>(out.clusters[k].size());
      if (!best || mean < best_mean) {
        best = k;
        best_mean = mean;
      }
    }
    if (best) out.objective_of_cluster[*best] = obj;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Driver

struct MoConfig {
  Budget budget;
  LinkageOptions linkage;
  int ims_base = 4;
  std::size_t base_population_size = 8;
  std::size_t max_population_size = std::size_t{1} << 11;
  std::size_t archive_capacity = kArchiveCapacity;
};

struct MoRunRecord {
  double elapsed_s = 0.0;
  std::uint64_t evaluations = 0;
  std::size_t population = 0;
  std::size_t population_size = 0;
  std::size_t clusters = 0;
  std::size_t archive_size = 0;
  bool partial = false;
};

struct MoRunResult {
  ElitistArchive archive;
  std::vector<MoRunRecord> log;
  MoAcceptanceStats acceptance;
  std::vector<std::pair<std::size_t, std::size_t>> populations;  // (size, clusters) in creation order
  std::uint64_t evaluations = 0;
  double elapsed_s = 0.0;
  std::size_t generations = 0;
  bool budget_degraded = false;
};

namespace detail {

class MoRunner {
 public:
  MoRunner(const MoConfig& config, const MoProblem& problem, Rng& rng)
      : config_(config), problem_(problem), ctx_{problem.evaluator(), rng} {
    result_.archive = ElitistArchive(config.archive_capacity);
    ctx_.budget.emplace(config.budget, &ctx_.evaluations);
  }

  MoRunResult run() {
    if (config_.ims_base < 1 || config_.base_population_size < kObjectiveCount + 1) {
      throw std::invalid_argument("MoConfig: population must hold at least m + 1 clusters");
    }
    add_population();
    while (!ctx_.exhausted() && !finished_) {
      step(0);
      if (all_retired() && size_of(pops_.size()) > config_.max_population_size) finished_ = true;
    }
    result_.evaluations = ctx_.evaluations;
    result_.elapsed_s = ctx_.budget->elapsed();
    result_.budget_degraded = result_.generations == 0;
    return std::move(result_);
  }

 private:
  struct Population {
    std::vector<MoSolution> members;
    std::size_t clusters = 0;
    std::size_t generations = 0;
    bool retired = false;
  };

  std::size_t size_of(std::size_t index) const { return config_.base_population_size << index; }
  std::size_t clusters_of(std::size_t index) const { return kObjectiveCount + 1 + index; }

  bool all_retired() const {
    return std::all_of(pops_.begin(), pops_.end(), [](const auto& p) { return p.retired; });
  }

  MoSolution fresh() {
    MoSolution s;
    s.solution = make_solution(ctx_.evaluator.layout().random_genotype(ctx_.rng), ctx_.evaluator);
    ++ctx_.evaluations;
    s.objectives = problem_.objectives(s.solution.cache.breakdown);
    return s;
  }

  void add_population() {
    const std::size_t index = pops_.size();
    Population pop;
    pop.clusters = clusters_of(index);
    const auto size = size_of(index);
    for (std::size_t i = 0; i < size; ++i) {
      if (index > 0 && ctx_.exhausted()) break;
      pop.members.push_back(fresh());
      offer_to_archive(result_.archive, pop.members.back());
    }
    if (pop.members.size() < size) {
      finished_ = true;
      return;
    }
    result_.populations.emplace_back(size, pop.clusters);
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

  void generation(std::size_t index) {
    auto& pop = pops_[index];
    std::vector<ObjectiveVector> objs;
    objs.reserve(pop.members.size());
    for (const auto& m : pop.members) objs.push_back(m.objectives);
    const auto clustering = balanced_clusters(objs, pop.clusters, ctx_.rng);

    std::vector<MoSolution> offspring = pop.members;
    for (std::size_t k = 0; k < clustering.clusters.size(); ++k) {
      const auto& idx = clustering.clusters[k];
      std::vector<MoSolution> donors;
      donors.reserve(idx.size());
      for (auto s : idx) donors.push_back(pop.members[s]);
      std::vector<Solution> plain;
      plain.reserve(donors.size());
      for (const auto& d : donors) plain.push_back(d.solution);
      const auto tree = learn_linkage_tree(plain, ctx_.evaluator.layout(), ctx_.rng, config_.linkage);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        if (ctx_.exhausted()) break;
        if (const auto obj = clustering.objective_of_cluster[k]) {
          offspring[idx[j]] =
              so_objective_gom(donors[j], *obj, tree, donors, result_.archive, ctx_, problem_, j);
        } else {
          offspring[idx[j]] = mo_gom(donors[j], tree, donors, result_.archive, ctx_, problem_, &result_.acceptance, j);
        }
      }
    }
    pop.members = std::move(offspring);
    const bool partial = ctx_.exhausted();
    if (!partial) ++result_.generations;

    MoRunRecord r;
    r.elapsed_s = ctx_.budget->elapsed();
    r.evaluations = ctx_.evaluations;
    r.population = index;
    r.population_size = pop.members.size();
    r.clusters = pop.clusters;
    r.archive_size = result_.archive.size();
    r.partial = partial;
    result_.log.push_back(r);

    bool converged = true;
    for (const auto& m : pop.members) {
      if (!(m.solution.genotype == pop.members.front().solution.genotype)) {
        converged = false;
        break;
      }
    }
    if (converged) pop.retired = true;
  }

  const MoConfig& config_;
  const MoProblem& problem_;
  SearchContext ctx_;
  std::vector<Population> pops_;
  MoRunResult result_;
  bool finished_ = false;
};

}  // namespace detail

/// Tri-objective learning with clustered populations under the interleaved
/// multi-start scheme: population i has 8 * 2^i members and m + 1 + i
/// clusters. Returns the elitist archive.
inline MoRunResult run_mo(const MoConfig& config, const MoProblem& problem, Rng& rng) {
  return detail::MoRunner(config, problem, rng).run();
}

}  // namespace dbngomea
