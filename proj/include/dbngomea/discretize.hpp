#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dbngomea/model.hpp"

namespace dbngomea {

/// Column-major table of raw samples. Discrete columns hold integer levels.
struct RawDataset {
  std::vector<VariableMeta> meta;
  std::vector<std::vector<double>> columns;

  std::size_t n_samples() const { return columns.empty() ? 0 : columns.front().size(); }
  std::size_t n_vars() const { return meta.size(); }
};

struct NormalizedDataset {
  std::vector<VariableMeta> meta;
  std::vector<std::vector<double>> columns;
  std::size_t n = 0;
  std::vector<std::pair<double, double>> normalization;  // (min, max) per continuous column

  std::size_t n_vars() const { return meta.size(); }
};

namespace detail {

inline void check_discrete_column(const VariableMeta& m, std::span<const double> col) {
  for (double x : col) {
    if (x != std::floor(x) || x < 0 || x >= m.cardinality) {
      throw std::invalid_argument("discrete column '" + m.name + "' holds a value outside [0, cardinality)");
    }
  }
}

}  // namespace detail

/// Affinely maps every continuous column onto [0,1] and records the map.
inline NormalizedDataset normalize(const RawDataset& raw) {
  if (raw.columns.size() != raw.meta.size()) throw std::invalid_argument("normalize: column count mismatch");
  NormalizedDataset out;
  out.meta = raw.meta;
  out.n = raw.n_samples();
  out.columns.resize(raw.columns.size());
  out.normalization.assign(raw.columns.size(), {0.0, 1.0});
  for (std::size_t v = 0; v < raw.columns.size(); ++v) {
    const auto& col = raw.columns[v];
    if (col.size() != out.n) throw std::invalid_argument("normalize: columns differ in length");
    auto& meta = out.meta[v];
    if (meta.is_discrete()) {
      detail::check_discrete_column(meta, col);
      out.columns[v] = col;
      continue;
    }
    if (col.empty()) throw std::invalid_argument("degenerate column '" + meta.name + "': no samples");
    auto [lo_it, hi_it] = std::minmax_element(col.begin(), col.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) throw std::invalid_argument("degenerate column '" + meta.name + "': max == min");
    meta.raw_range = {lo, hi};
    out.normalization[v] = {lo, hi};
    auto& dst = out.columns[v];
    dst.resize(col.size());
    for (std::size_t s = 0; s < col.size(); ++s) dst[s] = (col[s] - lo) / (hi - lo);
    // exact end points regardless of rounding
    dst[static_cast<std::size_t>(lo_it - col.begin())] = 0.0;
    dst[static_cast<std::size_t>(hi_it - col.begin())] = 1.0;
  }
  for (const auto& m : out.meta) validate(m);
  return out;
}

/// Maps new raw samples through an existing normalization, clamping to [0,1].
inline NormalizedDataset apply_normalization(const RawDataset& raw, const NormalizedDataset& reference) {
  if (raw.meta.size() != reference.meta.size()) {
    throw std::invalid_argument("apply_normalization: variable count mismatch");
  }
  NormalizedDataset out;
  out.meta = reference.meta;
  out.normalization = reference.normalization;
  out.n = raw.n_samples();
  out.columns.resize(raw.columns.size());
  for (std::size_t v = 0; v < raw.columns.size(); ++v) {
    const auto& col = raw.columns[v];
    if (reference.meta[v].is_discrete()) {
      detail::check_discrete_column(reference.meta[v], col);
      out.columns[v] = col;
      continue;
    }
    const auto [lo, hi] = reference.normalization[v];
    auto& dst = out.columns[v];
    dst.resize(col.size());
    for (std::size_t s = 0; s < col.size(); ++s) dst[s] = std::clamp((col[s] - lo) / (hi - lo), 0.0, 1.0);
  }
  return out;
}

inline void check_bin_count(int k, int bin_min, int bin_max) {
  if (k < bin_min || k > bin_max) {
    throw std::out_of_range("bin count " + std::to_string(k) + " outside [" + std::to_string(bin_min) + ", " +
                            std::to_string(bin_max) + "]");
  }
}

inline std::vector<double> equal_width(int k, int bin_min = kDefaultBinMin, int bin_max = kDefaultBinMax) {
  check_bin_count(k, bin_min, bin_max);
  std::vector<double> b(static_cast<std::size_t>(k - 1));
  for (int i = 1; i < k; ++i) b[static_cast<std::size_t>(i - 1)] = static_cast<double>(i) / k;
  return b;
}

/// Equal-frequency boundaries for `values` (any order). Cuts sit at midpoints
/// between consecutive distinct sorted values nearest the ranks floor(j*n/k);
/// a run of equal values is never split.
inline std::vector<double> equal_frequency(std::span<const double> values, int k, int bin_min = kDefaultBinMin,
                                           int bin_max = kDefaultBinMax) {
  check_bin_count(k, bin_min, bin_max);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  // positions p where sorted[p-1] < sorted[p]
  std::vector<std::size_t> cuts;
  for (std::size_t p = 1; p < n; ++p) {
    if (sorted[p - 1] < sorted[p]) cuts.push_back(p);
  }
  const auto needed = static_cast<std::size_t>(k - 1);
  if (cuts.size() < needed) throw std::invalid_argument("insufficient distinct values");

  std::vector<double> out;
  out.reserve(needed);
  std::size_t lo = 0;
  for (std::size_t j = 1; j <= needed; ++j) {
    const std::size_t target = j * n / static_cast<std::size_t>(k);
    const std::size_t hi = cuts.size() - (needed - j);  // leave room for the remaining cuts
    auto it = std::lower_bound(cuts.begin() + static_cast<std::ptrdiff_t>(lo),
                               cuts.begin() + static_cast<std::ptrdiff_t>(hi), target);
    auto pick = static_cast<std::size_t>(it - cuts.begin());
    if (pick == hi) {
      pick = hi - 1;
    } else if (pick > lo && target - cuts[pick - 1] <= cuts[pick] - target) {
      pick = pick - 1;
    }
    const auto p = cuts[pick];
    out.push_back(0.5 * (sorted[p - 1] + sorted[p]));
    lo = pick + 1;
  }
  return out;
}

/// Bin of value v under half-open intervals [b_{i-1}, b_i), last bin closed at 1.
inline int bin_of(double v, std::span<const double> boundaries) {
  return static_cast<int>(std::upper_bound(boundaries.begin(), boundaries.end(), v) - boundaries.begin());
}

inline std::vector<double> bin_widths(std::span<const double> boundaries) {
  std::vector<double> w(boundaries.size() + 1);
  double prev = 0.0;
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    w[i] = boundaries[i] - prev;
    prev = boundaries[i];
  }
  w.back() = 1.0 - prev;
  return w;
}

inline std::vector<std::uint8_t> assign_column(std::span<const double> values, std::span<const double> boundaries) {
  std::vector<std::uint8_t> out(values.size());
  for (std::size_t s = 0; s < values.size(); ++s) out[s] = static_cast<std::uint8_t>(bin_of(values[s], boundaries));
  return out;
}

struct BinAssignment {
  std::vector<std::vector<std::uint8_t>> bins;
  std::vector<std::vector<double>> widths;  // continuous only; empty for discrete
};

inline BinAssignment assign_bins(const NormalizedDataset& data, const SolutionModel& model) {
  model.validate(data.meta);
  BinAssignment out;
  out.bins.resize(data.n_vars());
  out.widths.resize(data.n_vars());
  for (std::size_t v = 0; v < data.n_vars(); ++v) {
    if (data.meta[v].is_discrete()) {
      auto& dst = out.bins[v];
      dst.resize(data.n);
      for (std::size_t s = 0; s < data.n; ++s) dst[s] = static_cast<std::uint8_t>(data.columns[v][s]);
    } else {
      out.bins[v] = assign_column(data.columns[v], model.boundaries[v]);
      out.widths[v] = bin_widths(model.boundaries[v]);
    }
  }
  return out;
}

/// Sorted distinct values of a column.
inline std::vector<double> distinct_sorted(std::span<const double> values) {
  std::vector<double> u(values.begin(), values.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

}  // namespace dbngomea
