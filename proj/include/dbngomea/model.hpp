#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dbngomea/common.hpp"

namespace dbngomea {

enum class VariableKind : std::uint8_t { discrete, continuous };

struct VariableMeta {
  std::string name;
  VariableKind kind = VariableKind::continuous;
  int cardinality = 0;                        // discrete only
  std::pair<double, double> raw_range{0.0, 1.0};  // continuous only, pre-normalization

  bool is_continuous() const { return kind == VariableKind::continuous; }
  bool is_discrete() const { return kind == VariableKind::discrete; }
};

inline void validate(const VariableMeta& m) {
  if (m.is_discrete() && (m.cardinality < 2 || m.cardinality > 255)) {
    throw std::invalid_argument("variable '" + m.name + "': discrete cardinality must be in [2, 255]");
  }
  if (m.is_continuous() && !(m.raw_range.first < m.raw_range.second)) {
    throw std::invalid_argument("variable '" + m.name + "': continuous range must satisfy min < max");
  }
}

// ---------------------------------------------------------------------------
// Pair indexing

inline constexpr std::size_t edge_gene_count(std::size_t n_nodes) {
  return n_nodes < 2 ? 0 : n_nodes * (n_nodes - 1) / 2;
}

/// Lexicographic index of the unordered pair (i, j), i < j, among all pairs of
/// n nodes.
inline std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n) {
  if (!(i < j && j < n)) {
    throw contract_violation("pair_index: requires 0 <= i < j < n");
  }
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

inline std::pair<std::size_t, std::size_t> pair_of_index(std::size_t index, std::size_t n) {
  if (index >= edge_gene_count(n)) throw contract_violation("pair_of_index: index out of range");
  std::size_t i = 0;
  std::size_t row = n - 1;
  while (index >= row) {
    index -= row;
    ++i;
    --row;
  }
  return {i, i + 1 + index};
}

// ---------------------------------------------------------------------------
// Genotype

/// Edge genes over all variable pairs, followed by one bin-count gene per
/// continuous variable. Edge gene values: 0 none, 1 i->j, 2 j->i.
struct Genotype {
  std::vector<std::uint8_t> edges;
  std::vector<int> bins;

  std::size_t size() const { return edges.size() + bins.size(); }

  int gene(std::size_t idx) const {
    return idx < edges.size() ? edges[idx] : bins[idx - edges.size()];
  }
  void set_gene(std::size_t idx, int value) {
    if (idx < edges.size()) {
      edges[idx] = static_cast<std::uint8_t>(value);
    } else {
      bins[idx - edges.size()] = value;
    }
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto e : edges) h = (h ^ e) * 0x100000001b3ULL;
    for (int b : bins) h = (h ^ static_cast<std::uint64_t>(b + 0x100)) * 0x100000001b3ULL;
    return h;
  }

  friend bool operator==(const Genotype&, const Genotype&) = default;
};

/// Positions of genes changed between two genotypes of the same layout.
inline std::vector<std::size_t> changed_genes(const Genotype& before, const Genotype& after) {
  if (before.edges.size() != after.edges.size() || before.bins.size() != after.bins.size()) {
    throw contract_violation("changed_genes: genotype shapes differ");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before.gene(i) != after.gene(i)) out.push_back(i);
  }
  return out;
}

/// Shape of the genotype for a given variable set and bin-count bounds.
class GenomeLayout {
 public:
  GenomeLayout() = default;
  GenomeLayout(std::vector<VariableMeta> meta, int bin_min = kDefaultBinMin,
               int bin_max = kDefaultBinMax)
      : meta_(std::move(meta)), bin_min_(bin_min), bin_max_(bin_max) {
    if (bin_min_ < 2 || bin_max_ < bin_min_ || bin_max_ > 255) {
      throw std::invalid_argument("GenomeLayout: bin bounds must satisfy 2 <= bin_min <= bin_max <= 255");
    }
    bin_gene_of_var_.assign(meta_.size(), npos);
    for (std::size_t v = 0; v < meta_.size(); ++v) {
      validate(meta_[v]);
      if (meta_[v].is_continuous()) {
        bin_gene_of_var_[v] = continuous_.size();
        continuous_.push_back(v);
      }
    }
    pairs_.reserve(edge_gene_count(meta_.size()));
    for (std::size_t i = 0; i < meta_.size(); ++i) {
      for (std::size_t j = i + 1; j < meta_.size(); ++j) pairs_.emplace_back(i, j);
    }
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t n_nodes() const { return meta_.size(); }
  std::size_t n_edge_genes() const { return pairs_.size(); }
  std::size_t n_bin_genes() const { return continuous_.size(); }
  std::size_t n_genes() const { return n_edge_genes() + n_bin_genes(); }
  int bin_min() const { return bin_min_; }
  int bin_max() const { return bin_max_; }
  const std::vector<VariableMeta>& meta() const { return meta_; }
  const std::vector<std::size_t>& continuous() const { return continuous_; }

  bool is_edge_gene(std::size_t gene) const { return gene < n_edge_genes(); }
  std::pair<std::size_t, std::size_t> pair_of(std::size_t edge_gene) const { return pairs_[edge_gene]; }
  std::size_t var_of_bin_gene(std::size_t bin_gene) const { return continuous_[bin_gene]; }
  /// Absolute gene index of the bin gene for variable v, or npos.
  std::size_t gene_of_var(std::size_t v) const {
    return bin_gene_of_var_[v] == npos ? npos : n_edge_genes() + bin_gene_of_var_[v];
  }

  int alphabet_size(std::size_t gene) const {
    return is_edge_gene(gene) ? 3 : bin_max_ - bin_min_ + 1;
  }
  int symbol(std::size_t gene, int value) const { return is_edge_gene(gene) ? value : value - bin_min_; }
  int value_of_symbol(std::size_t gene, int symbol) const {
    return is_edge_gene(gene) ? symbol : symbol + bin_min_;
  }

  bool matches(const Genotype& g) const {
    return g.edges.size() == n_edge_genes() && g.bins.size() == n_bin_genes();
  }

  void check(const Genotype& g) const {
    if (!matches(g)) throw contract_violation("genotype length does not match variable metadata");
  }

  Genotype empty_genotype(int bins = kDefaultBinMin) const {
    Genotype g;
    g.edges.assign(n_edge_genes(), 0);
    g.bins.assign(n_bin_genes(), std::clamp(bins, bin_min_, bin_max_));
    return g;
  }

  Genotype random_genotype(Rng& rng) const {
    Genotype g = empty_genotype();
    std::uniform_int_distribution<int> edge(0, 2);
    std::uniform_int_distribution<int> bins(bin_min_, bin_max_);
    for (auto& e : g.edges) e = static_cast<std::uint8_t>(edge(rng));
    for (auto& b : g.bins) b = bins(rng);
    return g;
  }

 private:
  std::vector<VariableMeta> meta_;
  int bin_min_ = kDefaultBinMin;
  int bin_max_ = kDefaultBinMax;
  std::vector<std::size_t> continuous_;
  std::vector<std::size_t> bin_gene_of_var_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
};

// ---------------------------------------------------------------------------
// Graphs

using Adjacency = std::vector<std::vector<std::size_t>>;

/// Kahn's algorithm; true iff a topological order exists.
inline bool is_acyclic(const Adjacency& children) {
  const std::size_t n = children.size();
  std::vector<std::size_t> indeg(n, 0);
  for (const auto& out : children) {
    for (auto c : out) ++indeg[c];
  }
  std::vector<std::size_t> ready;
  for (std::size_t v = 0; v < n; ++v) {
    if (indeg[v] == 0) ready.push_back(v);
  }
  std::size_t seen = 0;
  while (!ready.empty()) {
    auto v = ready.back();
    ready.pop_back();
    ++seen;
    for (auto c : children[v]) {
      if (--indeg[c] == 0) ready.push_back(c);
    }
  }
  return seen == n;
}

/// Directed acyclic graph stored as sorted parent lists.
class Dag {
 public:
  Dag() = default;
  explicit Dag(std::size_t n_nodes) : parents_(n_nodes) {}

  static Dag from_edges(std::size_t n_nodes, std::span<const std::pair<std::size_t, std::size_t>> edges) {
    Dag d(n_nodes);
    for (auto [from, to] : edges) {
      if (from >= n_nodes || to >= n_nodes || from == to) {
        throw std::invalid_argument("Dag: invalid edge");
      }
      auto& p = d.parents_[to];
      if (std::find(p.begin(), p.end(), from) != p.end()) {
        throw std::invalid_argument("Dag: duplicate edge");
      }
      p.push_back(from);
    }
    for (auto& p : d.parents_) std::sort(p.begin(), p.end());
    if (!is_acyclic(d.children())) throw std::invalid_argument("Dag: graph contains a cycle");
    return d;
  }

  static Dag from_children(const Adjacency& children) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t v = 0; v < children.size(); ++v) {
      for (auto c : children[v]) edges.emplace_back(v, c);
    }
    return from_edges(children.size(), edges);
  }

  std::size_t n_nodes() const { return parents_.size(); }
  const std::vector<std::size_t>& parents(std::size_t v) const { return parents_[v]; }

  bool has_edge(std::size_t from, std::size_t to) const {
    return std::binary_search(parents_[to].begin(), parents_[to].end(), from);
  }
  bool adjacent(std::size_t a, std::size_t b) const { return has_edge(a, b) || has_edge(b, a); }

  std::size_t edge_count() const {
    std::size_t e = 0;
    for (const auto& p : parents_) e += p.size();
    return e;
  }

  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t v = 0; v < parents_.size(); ++v) {
      for (auto p : parents_[v]) out.emplace_back(p, v);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  Adjacency children() const {
    Adjacency ch(parents_.size());
    for (std::size_t v = 0; v < parents_.size(); ++v) {
      for (auto p : parents_[v]) ch[p].push_back(v);
    }
    for (auto& c : ch) std::sort(c.begin(), c.end());
    return ch;
  }

  std::vector<std::size_t> topological_order() const {
    const auto ch = children();
    std::vector<std::size_t> indeg(n_nodes());
    for (std::size_t v = 0; v < n_nodes(); ++v) indeg[v] = parents_[v].size();
    std::vector<std::size_t> order;
    std::vector<std::size_t> ready;
    for (std::size_t v = n_nodes(); v-- > 0;) {
      if (indeg[v] == 0) ready.push_back(v);
    }
    while (!ready.empty()) {
      auto v = ready.back();
      ready.pop_back();
      order.push_back(v);
      for (auto it = ch[v].rbegin(); it != ch[v].rend(); ++it) {
        if (--indeg[*it] == 0) ready.push_back(*it);
      }
    }
    return order;
  }

  /// Parents, children and the children's other parents of v.
  std::vector<std::size_t> markov_blanket(std::size_t v) const {
    std::vector<std::size_t> mb(parents_[v].begin(), parents_[v].end());
    for (std::size_t c = 0; c < n_nodes(); ++c) {
      if (!has_edge(v, c)) continue;
      mb.push_back(c);
      for (auto p : parents_[c]) {
        if (p != v) mb.push_back(p);
      }
    }
    std::sort(mb.begin(), mb.end());
    mb.erase(std::unique(mb.begin(), mb.end()), mb.end());
    return mb;
  }

  friend bool operator==(const Dag&, const Dag&) = default;

 private:
  std::vector<std::vector<std::size_t>> parents_;
};

// ---------------------------------------------------------------------------
// Decoding and repair

struct DecodedGraph {
  Adjacency children;    // sorted out-neighbours; may contain cycles
  std::vector<int> bins;  // per variable: bin gene (continuous) or cardinality (discrete)
};

inline DecodedGraph decode(const Genotype& g, const GenomeLayout& layout) {
  layout.check(g);
  DecodedGraph out;
  out.children.resize(layout.n_nodes());
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    auto [i, j] = layout.pair_of(k);
    if (g.edges[k] == 1) {
      out.children[i].push_back(j);
    } else if (g.edges[k] == 2) {
      out.children[j].push_back(i);
    } else if (g.edges[k] != 0) {
      throw contract_violation("decode: edge gene outside {0,1,2}");
    }
  }
  for (auto& c : out.children) std::sort(c.begin(), c.end());
  out.bins.resize(layout.n_nodes());
  for (std::size_t v = 0; v < layout.n_nodes(); ++v) {
    const auto gene = layout.gene_of_var(v);
    out.bins[v] = gene == GenomeLayout::npos ? layout.meta()[v].cardinality : g.gene(gene);
  }
  return out;
}

/// Edge genes reproducing the given directed graph; bin genes copied from
/// `bins` for continuous variables.
inline Genotype encode(const Adjacency& children, std::span<const int> bins, const GenomeLayout& layout) {
  Genotype g = layout.empty_genotype();
  for (std::size_t v = 0; v < children.size(); ++v) {
    for (auto c : children[v]) {
      if (v < c) {
        g.edges[pair_index(v, c, layout.n_nodes())] = 1;
      } else {
        g.edges[pair_index(c, v, layout.n_nodes())] = 2;
      }
    }
  }
  for (std::size_t b = 0; b < layout.n_bin_genes(); ++b) g.bins[b] = bins[layout.var_of_bin_gene(b)];
  return g;
}

namespace detail {

inline std::size_t edge_gene_of(std::size_t from, std::size_t to, std::size_t n) {
  return from < to ? pair_index(from, to, n) : pair_index(to, from, n);
}

// Depth-first search from node 0 upwards, neighbours ascending. Returns the
// first back edge found, i.e. the edge that closes a cycle.
inline std::optional<std::pair<std::size_t, std::size_t>> find_back_edge(const Adjacency& children) {
  const std::size_t n = children.size();
  enum : std::uint8_t { white, grey, black };
  std::vector<std::uint8_t> colour(n, white);
  std::vector<std::pair<std::size_t, std::size_t>> stack;  // (node, next child position)
  for (std::size_t root = 0; root < n; ++root) {
    if (colour[root] != white) continue;
    colour[root] = grey;
    stack.emplace_back(root, 0);
    while (!stack.empty()) {
      auto& [v, pos] = stack.back();
      if (pos < children[v].size()) {
        const auto c = children[v][pos++];
        if (colour[c] == grey) return std::make_pair(v, c);
        if (colour[c] == white) {
          colour[c] = grey;
          stack.emplace_back(c, 0);
        }
      } else {
        colour[v] = black;
        stack.pop_back();
      }
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Removes cycles by repeatedly deleting the edge that closes the first cycle
/// met by a depth-first search. Only ever zeroes edge genes. Returns the gene
/// indices that were zeroed.
inline std::vector<std::size_t> repair_cycles_in_place(Genotype& g, const GenomeLayout& layout) {
  auto graph = decode(g, layout);
  std::vector<std::size_t> removed;
  while (auto back = detail::find_back_edge(graph.children)) {
    auto [from, to] = *back;
    auto& out = graph.children[from];
    out.erase(std::find(out.begin(), out.end(), to));
    const auto gene = detail::edge_gene_of(from, to, layout.n_nodes());
    g.edges[gene] = 0;
    removed.push_back(gene);
  }
  return removed;
}

inline Genotype repair_cycles(Genotype g, const GenomeLayout& layout) {
  repair_cycles_in_place(g, layout);
  return g;
}

inline bool is_acyclic(const Genotype& g, const GenomeLayout& layout) {
  return is_acyclic(decode(g, layout).children);
}

/// Dag of an acyclic genotype.
inline Dag dag_of(const Genotype& g, const GenomeLayout& layout) {
  return Dag::from_children(decode(g, layout).children);
}

// ---------------------------------------------------------------------------
// Solution model

/// A structure together with its discretization policy. Boundaries live in
/// normalized [0,1] space; discrete variables have no boundaries.
struct SolutionModel {
  Dag dag;
  std::vector<int> bins;
  std::vector<std::vector<double>> boundaries;

  void validate(const std::vector<VariableMeta>& meta) const {
    if (dag.n_nodes() != meta.size() || bins.size() != meta.size() || boundaries.size() != meta.size()) {
      throw std::invalid_argument("SolutionModel: size mismatch with metadata");
    }
    for (std::size_t v = 0; v < meta.size(); ++v) {
      if (meta[v].is_discrete()) {
        if (bins[v] != meta[v].cardinality || !boundaries[v].empty()) {
          throw std::invalid_argument("SolutionModel: discrete variable '" + meta[v].name + "' mis-specified");
        }
        continue;
      }
      const auto& b = boundaries[v];
      if (bins[v] < 1 || b.size() != static_cast<std::size_t>(bins[v] - 1)) {
        throw std::invalid_argument("SolutionModel: boundary count must equal bins - 1 for '" + meta[v].name + "'");
      }
      for (std::size_t i = 0; i < b.size(); ++i) {
        if (!(b[i] > 0.0 && b[i] < 1.0) || (i > 0 && !(b[i] > b[i - 1]))) {
          throw std::invalid_argument("SolutionModel: boundaries must be strictly increasing in (0,1) for '" +
                                      meta[v].name + "'");
        }
      }
    }
  }
};

}  // namespace dbngomea
