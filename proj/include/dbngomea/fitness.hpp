#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "dbngomea/discretize.hpp"
#include "dbngomea/model.hpp"

namespace dbngomea {

struct ScoreOptions {
  bool smoothing = true;  // Laplace (+1) pseudo-counts per cell
};

/// Binned view of one variable. `reference` holds the bins of an optional
/// second sample set whose log-density under the fitted node is accumulated.
struct BinnedColumn {
  std::span<const std::uint8_t> train;
  std::span<const std::uint8_t> reference;
  int bins = 0;
  std::span<const double> log_widths;  // empty for discrete variables
};

struct NodeScore {
  double log_density = 0.0;            // LL_i over the training samples
  double penalty = 0.0;                // C_i
  double reference_log_density = 0.0;  // sum of log q_i over the reference samples
};

/// BIC-style penalty q * (k - 1) * log(n / 2), q the number of joint parent
/// configurations.
inline double complexity_term(double parent_configurations, int bins, std::size_t n) {
  return parent_configurations * (bins - 1) * std::log(static_cast<double>(n) / 2.0);
}

namespace detail {

inline constexpr std::uint64_t kConfigLimit = std::uint64_t{1} << 40;

struct ScoreScratch {
  std::vector<std::uint64_t> cfg_train, cfg_ref, keys, uniq;
  std::vector<std::uint32_t> cell_counts, cfg_counts, key_counts;
};

inline ScoreScratch& scratch() {
  thread_local ScoreScratch s;
  return s;
}

// Replaces config ids in both vectors by their rank among all observed ids.
inline std::uint64_t compress_configs(std::vector<std::uint64_t>& a, std::vector<std::uint64_t>& b,
                                      std::vector<std::uint64_t>& tmp) {
  tmp.assign(a.begin(), a.end());
  tmp.insert(tmp.end(), b.begin(), b.end());
  std::sort(tmp.begin(), tmp.end());
  tmp.erase(std::unique(tmp.begin(), tmp.end()), tmp.end());
  for (auto* vec : {&a, &b}) {
    for (auto& x : *vec) x = static_cast<std::uint64_t>(std::lower_bound(tmp.begin(), tmp.end(), x) - tmp.begin());
  }
  return tmp.size();
}

}  // namespace detail

/// Log-density and penalty contribution of one node given its parents.
///
/// LL_i = sum_s log(p(bin_s | config_s) / width(bin_s)) with
/// p = (n_cb + a) / (n_c + a k), a = 1 under smoothing; discrete nodes use no
/// width. C_i = q_i (k - 1) log(n / 2) with q_i the product of parent bin counts.
inline NodeScore score_node(const BinnedColumn& child, std::span<const BinnedColumn* const> parents,
                            const ScoreOptions& options = {}) {
  const std::size_t n = child.train.size();
  if (n == 0) throw std::invalid_argument("score_node: no samples");
  const std::size_t n_ref = child.reference.size();
  const auto k = static_cast<std::uint64_t>(child.bins);
  auto& sc = detail::scratch();

  double q_penalty = 1.0;
  std::uint64_t radix = 1;
  sc.cfg_train.assign(n, 0);
  sc.cfg_ref.assign(n_ref, 0);
  for (const auto* p : parents) {
    q_penalty *= p->bins;
    const auto pk = static_cast<std::uint64_t>(p->bins);
    if (radix * pk > detail::kConfigLimit) radix = detail::compress_configs(sc.cfg_train, sc.cfg_ref, sc.uniq);
    for (std::size_t s = 0; s < n; ++s) sc.cfg_train[s] = sc.cfg_train[s] * pk + p->train[s];
    for (std::size_t s = 0; s < n_ref; ++s) sc.cfg_ref[s] = sc.cfg_ref[s] * pk + p->reference[s];
    radix *= pk;
  }

  const double a = options.smoothing ? 1.0 : 0.0;
  const double ak = a * static_cast<double>(k);
  NodeScore out;
  out.penalty = complexity_term(q_penalty, child.bins, n);

  // width part depends only on the child's marginal bin counts
  if (!child.log_widths.empty()) {
    std::array<std::uint32_t, 256> marg{};
    for (auto b : child.train) ++marg[b];
    for (std::size_t b = 0; b < static_cast<std::size_t>(k); ++b) out.log_density -= marg[b] * child.log_widths[b];
    for (auto b : child.reference) out.reference_log_density -= child.log_widths[b];
  }

  const std::uint64_t cells = radix * k;
  if (cells <= std::max<std::uint64_t>(4 * n, 1 << 16)) {
    sc.cell_counts.assign(cells, 0);
    sc.cfg_counts.assign(radix, 0);
    for (std::size_t s = 0; s < n; ++s) {
      ++sc.cell_counts[sc.cfg_train[s] * k + child.train[s]];
      ++sc.cfg_counts[sc.cfg_train[s]];
    }
    for (std::uint64_t c = 0; c < radix; ++c) {
      const auto nc = sc.cfg_counts[c];
      if (nc == 0) continue;
      const double denom = std::log(nc + ak);
      for (std::uint64_t b = 0; b < k; ++b) {
        const auto ncb = sc.cell_counts[c * k + b];
        if (ncb) out.log_density += ncb * (std::log(ncb + a) - denom);
      }
    }
    for (std::size_t s = 0; s < n_ref; ++s) {
      const auto c = sc.cfg_ref[s];
      out.reference_log_density +=
          std::log(sc.cell_counts[c * k + child.reference[s]] + a) - std::log(sc.cfg_counts[c] + ak);
    }
    return out;
  }

  // sparse: sorted cell keys
  sc.keys.resize(n);
  for (std::size_t s = 0; s < n; ++s) sc.keys[s] = sc.cfg_train[s] * k + child.train[s];
  std::sort(sc.keys.begin(), sc.keys.end());
  sc.uniq.clear();
  sc.key_counts.clear();
  for (auto key : sc.keys) {
    if (sc.uniq.empty() || sc.uniq.back() != key) {
      sc.uniq.push_back(key);
      sc.key_counts.push_back(0);
    }
    ++sc.key_counts.back();
  }
  // parent-config totals, aligned with uniq (configs are contiguous after sorting)
  sc.cfg_counts.assign(sc.uniq.size(), 0);
  for (std::size_t i = 0; i < sc.uniq.size();) {
    std::size_t j = i;
    std::uint32_t total = 0;
    while (j < sc.uniq.size() && sc.uniq[j] / k == sc.uniq[i] / k) total += sc.key_counts[j++];
    for (std::size_t t = i; t < j; ++t) sc.cfg_counts[t] = total;
    i = j;
  }
  for (std::size_t i = 0; i < sc.uniq.size(); ++i) {
    out.log_density += sc.key_counts[i] * (std::log(sc.key_counts[i] + a) - std::log(sc.cfg_counts[i] + ak));
  }
  for (std::size_t s = 0; s < n_ref; ++s) {
    const auto key = sc.cfg_ref[s] * k + child.reference[s];
    const auto cfg_lo = sc.cfg_ref[s] * k;
    auto it = std::lower_bound(sc.uniq.begin(), sc.uniq.end(), cfg_lo);
    std::uint32_t nc = 0;
    std::uint32_t ncb = 0;
    if (it != sc.uniq.end() && *it / k == sc.cfg_ref[s]) {
      nc = sc.cfg_counts[static_cast<std::size_t>(it - sc.uniq.begin())];
      auto hit = std::lower_bound(it, sc.uniq.end(), key);
      if (hit != sc.uniq.end() && *hit == key) ncb = sc.key_counts[static_cast<std::size_t>(hit - sc.uniq.begin())];
    }
    out.reference_log_density += std::log(ncb + a) - std::log(nc + ak);
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Per-node contributions; total fitness = sum LL_i - sum C_i.
struct FitnessBreakdown {
  std::vector<double> log_density;
  std::vector<double> penalty;
  std::vector<double> reference_log_density;

  double log_likelihood() const { return std::accumulate(log_density.begin(), log_density.end(), 0.0); }
  double complexity() const { return std::accumulate(penalty.begin(), penalty.end(), 0.0); }
  double reference_log_likelihood() const {
    return std::accumulate(reference_log_density.begin(), reference_log_density.end(), 0.0);
  }
  double total() const { return log_likelihood() - complexity(); }
  bool valid() const { return std::isfinite(log_likelihood()); }
};

/// Genotype snapshot and per-node contributions of one candidate solution.
/// Count tables are rebuilt only for nodes whose parent set, own bins or a
/// parent's bins changed since the snapshot.
struct ContingencyCache {
  Genotype genotype;
  FitnessBreakdown breakdown;
  std::size_t last_recomputed = 0;  // node contributions recomputed by the last update
};

enum class Discretization : std::uint8_t { equal_width, equal_frequency };

struct EvaluatorOptions {
  Discretization policy = Discretization::equal_width;
  ScoreOptions score;
};

/// Fitness of genotypes on a fixed normalized data set. Bin assignments for
/// every (continuous variable, bin count) pair are precomputed.
class DensityEvaluator {
 public:
  DensityEvaluator(const NormalizedDataset& data, GenomeLayout layout, EvaluatorOptions options = {},
                   const NormalizedDataset* reference = nullptr)
      : data_(data), layout_(std::move(layout)), options_(options) {
    if (data_.meta.size() != layout_.n_nodes()) throw std::invalid_argument("DensityEvaluator: layout mismatch");
    if (data_.n == 0) throw std::invalid_argument("DensityEvaluator: empty data set");
    if (reference) {
      if (reference->meta.size() != data_.meta.size()) {
        throw std::invalid_argument("DensityEvaluator: reference variable count mismatch");
      }
      reference_size_ = reference->n;
    }
    binnings_.resize(layout_.n_nodes());
    for (std::size_t v = 0; v < layout_.n_nodes(); ++v) {
      const auto& meta = data_.meta[v];
      if (meta.is_discrete()) {
        Binning b;
        b.valid = true;
        b.train = to_levels(data_.columns[v]);
        if (reference) b.reference = to_levels(reference->columns[v]);
        binnings_[v].push_back(std::move(b));
        continue;
      }
      for (int k = layout_.bin_min(); k <= layout_.bin_max(); ++k) {
        Binning b;
        try {
          b.boundaries = options_.policy == Discretization::equal_width
                             ? equal_width(k, layout_.bin_min(), layout_.bin_max())
                             : equal_frequency(data_.columns[v], k, layout_.bin_min(), layout_.bin_max());
        } catch (const std::invalid_argument&) {
          binnings_[v].push_back(std::move(b));  // invalid: insufficient distinct values
          continue;
        }
        b.valid = true;
        b.train = assign_column(data_.columns[v], b.boundaries);
        if (reference) b.reference = assign_column(reference->columns[v], b.boundaries);
        for (double w : bin_widths(b.boundaries)) b.log_widths.push_back(std::log(w));
        binnings_[v].push_back(std::move(b));
      }
    }
  }

  const GenomeLayout& layout() const { return layout_; }
  const NormalizedDataset& data() const { return data_; }
  const EvaluatorOptions& options() const { return options_; }
  std::size_t reference_size() const { return reference_size_; }

  std::uint64_t evaluations() const { return evaluations_.load(std::memory_order_relaxed); }
  std::uint64_t node_evaluations() const { return node_evaluations_.load(std::memory_order_relaxed); }

  FitnessBreakdown evaluate(const Genotype& g) const {
    layout_.check(g);
    evaluations_.fetch_add(1, std::memory_order_relaxed);
    FitnessBreakdown out;
    const std::size_t n = layout_.n_nodes();
    out.log_density.resize(n);
    out.penalty.resize(n);
    out.reference_log_density.resize(n);
    for (std::size_t v = 0; v < n; ++v) store(out, v, score(g, v));
    return out;
  }

  ContingencyCache make_cache(const Genotype& g) const {
    ContingencyCache cache;
    cache.genotype = g;
    cache.breakdown = evaluate(g);
    cache.last_recomputed = layout_.n_nodes();
    return cache;
  }

  /// Updates `cache` to genotype `g`, which may differ from the cached
  /// genotype only at positions listed in `changed`. Only nodes whose parent
  /// set or bin context changed are rescored.
  const FitnessBreakdown& partial_evaluate(const Genotype& g, std::span<const std::size_t> changed,
                                           ContingencyCache& cache) const {
    layout_.check(g);
    layout_.check(cache.genotype);
    std::vector<char> listed(g.size(), 0);
    for (auto i : changed) {
      if (i >= g.size()) throw contract_violation("partial_evaluate: changed index out of range");
      listed[i] = 1;
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!listed[i] && g.gene(i) != cache.genotype.gene(i)) {
        throw contract_violation("partial_evaluate: stale contingency cache (fingerprint " +
                                 hex64(cache.genotype.fingerprint()) + ")");
      }
    }
    evaluations_.fetch_add(1, std::memory_order_relaxed);

    const std::size_t n = layout_.n_nodes();
    std::vector<char> dirty(n, 0);
    for (auto i : changed) {
      const int before = cache.genotype.gene(i);
      const int after = g.gene(i);
      if (before == after) continue;
      if (layout_.is_edge_gene(i)) {
        auto [a, b] = layout_.pair_of(i);
        if (before == 1 || after == 1) dirty[b] = 1;
        if (before == 2 || after == 2) dirty[a] = 1;
      } else {
        const auto v = layout_.var_of_bin_gene(i - layout_.n_edge_genes());
        dirty[v] = 1;
        for (auto c : children_of(g, v)) dirty[c] = 1;
      }
    }
    std::size_t recomputed = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (!dirty[v]) continue;
      store(cache.breakdown, v, score(g, v));
      ++recomputed;
    }
    cache.genotype = g;
    cache.last_recomputed = recomputed;
    return cache.breakdown;
  }

  std::vector<std::size_t> parents_of(const Genotype& g, std::size_t v) const {
    std::vector<std::size_t> out;
    const std::size_t n = layout_.n_nodes();
    for (std::size_t u = 0; u < n; ++u) {
      if (u == v) continue;
      const auto gene = u < v ? g.edges[pair_index(u, v, n)] : g.edges[pair_index(v, u, n)];
      if ((u < v && gene == 1) || (u > v && gene == 2)) out.push_back(u);
    }
    return out;
  }

  std::vector<std::size_t> children_of(const Genotype& g, std::size_t v) const {
    std::vector<std::size_t> out;
    const std::size_t n = layout_.n_nodes();
    for (std::size_t u = 0; u < n; ++u) {
      if (u == v) continue;
      const auto gene = u < v ? g.edges[pair_index(u, v, n)] : g.edges[pair_index(v, u, n)];
      if ((u < v && gene == 2) || (u > v && gene == 1)) out.push_back(u);
    }
    return out;
  }

  int bins_of(const Genotype& g, std::size_t v) const {
    const auto gene = layout_.gene_of_var(v);
    return gene == GenomeLayout::npos ? data_.meta[v].cardinality : g.gene(gene);
  }

  /// Structure plus the boundaries implied by the discretization policy.
  /// Throws if a bin count is infeasible for the data (equal frequency).
  SolutionModel model_of(const Genotype& g) const {
    SolutionModel m;
    m.dag = dag_of(g, layout_);
    m.bins.resize(layout_.n_nodes());
    m.boundaries.resize(layout_.n_nodes());
    for (std::size_t v = 0; v < layout_.n_nodes(); ++v) {
      m.bins[v] = bins_of(g, v);
      if (data_.meta[v].is_continuous()) {
        const auto& b = binning(v, m.bins[v]);
        if (!b.valid) throw std::invalid_argument("insufficient distinct values");
        m.boundaries[v] = b.boundaries;
      }
    }
    return m;
  }

 private:
  struct Binning {
    bool valid = false;
    std::vector<double> boundaries;
    std::vector<std::uint8_t> train;
    std::vector<std::uint8_t> reference;
    std::vector<double> log_widths;
  };

  static std::vector<std::uint8_t> to_levels(const std::vector<double>& col) {
    std::vector<std::uint8_t> out(col.size());
    for (std::size_t s = 0; s < col.size(); ++s) out[s] = static_cast<std::uint8_t>(col[s]);
    return out;
  }

  const Binning& binning(std::size_t v, int k) const {
    if (data_.meta[v].is_discrete()) return binnings_[v].front();
    check_bin_count(k, layout_.bin_min(), layout_.bin_max());
    return binnings_[v][static_cast<std::size_t>(k - layout_.bin_min())];
  }

  static BinnedColumn view(const Binning& b, int bins) {
    return BinnedColumn{b.train, b.reference, bins, b.log_widths};
  }

  static void store(FitnessBreakdown& out, std::size_t v, const NodeScore& s) {
    out.log_density[v] = s.log_density;
    out.penalty[v] = s.penalty;
    out.reference_log_density[v] = s.reference_log_density;
  }

  NodeScore score(const Genotype& g, std::size_t v) const {
    node_evaluations_.fetch_add(1, std::memory_order_relaxed);
    const auto parents = parents_of(g, v);
    const int k = bins_of(g, v);
    const auto& own = binning(v, k);
    double q = 1.0;
    bool valid = own.valid;
    std::vector<BinnedColumn> cols;
    cols.reserve(parents.size());
    for (auto p : parents) {
      const int kp = bins_of(g, p);
      const auto& pb = binning(p, kp);
      valid = valid && pb.valid;
      q *= kp;
      cols.push_back(view(pb, kp));
    }
    if (!valid) {
      NodeScore bad;
      bad.log_density = -std::numeric_limits<double>::infinity();
      bad.reference_log_density = -std::numeric_limits<double>::infinity();
      bad.penalty = complexity_term(q, k, data_.n);
      return bad;
    }
    std::vector<const BinnedColumn*> ptrs;
    ptrs.reserve(cols.size());
    for (const auto& c : cols) ptrs.push_back(&c);
    return score_node(view(own, k), ptrs, options_.score);
  }

  NormalizedDataset data_;
  GenomeLayout layout_;
  EvaluatorOptions options_;
  std::size_t reference_size_ = 0;
  std::vector<std::vector<Binning>> binnings_;
  mutable std::atomic<std::uint64_t> evaluations_{0};
  mutable std::atomic<std::uint64_t> node_evaluations_{0};
};

// ---------------------------------------------------------------------------

/// Fitness of an explicit model (structure plus boundaries) on `data`, with
/// optional reference samples scored under the fitted model.
inline FitnessBreakdown evaluate_model(const SolutionModel& model, const NormalizedDataset& data,
                                       const ScoreOptions& options = {},
                                       const NormalizedDataset* reference = nullptr) {
  const auto train = assign_bins(data, model);
  BinAssignment ref;
  if (reference) ref = assign_bins(*reference, model);
  const std::size_t n_vars = data.n_vars();
  std::vector<std::vector<double>> log_widths(n_vars);
  std::vector<BinnedColumn> cols(n_vars);
  for (std::size_t v = 0; v < n_vars; ++v) {
    for (double w : train.widths[v]) log_widths[v].push_back(std::log(w));
    cols[v].train = train.bins[v];
    if (reference) cols[v].reference = ref.bins[v];
    cols[v].bins = model.bins[v];
    cols[v].log_widths = log_widths[v];
  }
  FitnessBreakdown out;
  out.log_density.resize(n_vars);
  out.penalty.resize(n_vars);
  out.reference_log_density.resize(n_vars);
  for (std::size_t v = 0; v < n_vars; ++v) {
    std::vector<const BinnedColumn*> parents;
    for (auto p : model.dag.parents(v)) parents.push_back(&cols[p]);
    const auto s = score_node(cols[v], parents, options);
    out.log_density[v] = s.log_density;
    out.penalty[v] = s.penalty;
    out.reference_log_density[v] = s.reference_log_density;
  }
  return out;
}

/// C(G) of a model for a training set of n samples.
inline double model_complexity(const SolutionModel& model, std::size_t n) {
  double c = 0.0;
  for (std::size_t v = 0; v < model.dag.n_nodes(); ++v) {
    double q = 1.0;
    for (auto p : model.dag.parents(v)) q *= model.bins[p];
    c += complexity_term(q, model.bins[v], n);
  }
  return c;
}

/// A model with conditional bin probabilities estimated from data. Supports
/// pointwise log-density and ancestral sampling in normalized space.
class FittedModel {
 public:
  FittedModel(SolutionModel model, const NormalizedDataset& data, ScoreOptions options = {})
      : model_(std::move(model)), meta_(data.meta), options_(options) {
    const auto bins = assign_bins(data, model_);
    const std::size_t n_vars = data.n_vars();
    tables_.resize(n_vars);
    widths_ = bins.widths;
    std::vector<std::uint8_t> key;
    for (std::size_t v = 0; v < n_vars; ++v) {
      const auto& parents = model_.dag.parents(v);
      for (std::size_t s = 0; s < data.n; ++s) {
        key.clear();
        for (auto p : parents) key.push_back(bins.bins[p][s]);
        auto& row = tables_[v][key];
        if (row.empty()) row.assign(static_cast<std::size_t>(model_.bins[v]), 0);
        ++row[bins.bins[v][s]];
      }
    }
  }

  const SolutionModel& model() const { return model_; }

  double probability(std::size_t v, const std::vector<std::uint8_t>& parent_bins, int bin) const {
    const double a = options_.smoothing ? 1.0 : 0.0;
    const int k = model_.bins[v];
    auto it = tables_[v].find(parent_bins);
    if (it == tables_[v].end()) return 1.0 / k;
    const auto& row = it->second;
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    return (row[static_cast<std::size_t>(bin)] + a) / (total + a * k);
  }

  /// log q(x) for one normalized sample.
  double log_density(std::span<const double> row) const {
    const std::size_t n_vars = meta_.size();
    std::vector<std::uint8_t> b(n_vars);
    for (std::size_t v = 0; v < n_vars; ++v) {
      b[v] = static_cast<std::uint8_t>(meta_[v].is_discrete() ? static_cast<int>(row[v])
                                                              : bin_of(row[v], model_.boundaries[v]));
    }
    double lp = 0.0;
    std::vector<std::uint8_t> key;
    for (std::size_t v = 0; v < n_vars; ++v) {
      key.clear();
      for (auto p : model_.dag.parents(v)) key.push_back(b[p]);
      lp += std::log(probability(v, key, b[v]));
      if (meta_[v].is_continuous()) lp -= std::log(widths_[v][b[v]]);
    }
    return lp;
  }

  NormalizedDataset sample(std::size_t count, Rng& rng) const {
    NormalizedDataset out;
    out.meta = meta_;
    out.n = count;
    out.normalization.assign(meta_.size(), {0.0, 1.0});
    out.columns.assign(meta_.size(), std::vector<double>(count));
    const auto order = model_.dag.topological_order();
    std::vector<std::uint8_t> b(meta_.size());
    std::vector<std::uint8_t> key;
    std::vector<double> probs;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = 0; s < count; ++s) {
      for (auto v : order) {
        key.clear();
        for (auto p : model_.dag.parents(v)) key.push_back(b[p]);
        const int k = model_.bins[v];
        probs.resize(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) probs[static_cast<std::size_t>(j)] = probability(v, key, j);
        std::discrete_distribution<int> pick(probs.begin(), probs.end());
        const int bin = pick(rng);
        b[v] = static_cast<std::uint8_t>(bin);
        if (meta_[v].is_discrete()) {
          out.columns[v][s] = bin;
        } else {
          const auto& bd = model_.boundaries[v];
          const double lo = bin == 0 ? 0.0 : bd[static_cast<std::size_t>(bin - 1)];
          const double hi = bin == k - 1 ? 1.0 : bd[static_cast<std::size_t>(bin)];
          out.columns[v][s] = std::min(lo + (hi - lo) * unit(rng), std::nextafter(hi, lo));
          if (bin == k - 1) out.columns[v][s] = std::min(out.columns[v][s], 1.0);
        }
      }
    }
    return out;
  }

 private:
  SolutionModel model_;
  std::vector<VariableMeta> meta_;
  ScoreOptions options_;
  std::vector<std::map<std::vector<std::uint8_t>, std::vector<std::uint32_t>>> tables_;
  std::vector<std::vector<double>> widths_;
};

}  // namespace dbngomea
