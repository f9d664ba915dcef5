#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "dbngomea/discretize.hpp"

namespace dbngomea {

/// Thrown when the dynamic-programming workspace would exceed the configured cap.
class bd_memory_exceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BayesianDiscretizationOptions {
  int bin_max = kDefaultBinMax;
  // Prior probability of a cut between consecutive distinct values u_j, u_{j+1}
  // is 1 - exp(-boundary_rate * (u_{j+1} - u_j) / range): proportional to the gap
  // for small gaps, and boundary_rate is the expected number of cuts.
  double boundary_rate = 4.0;
  std::size_t memory_cap_bytes = std::size_t{2} << 30;
};

struct BayesianDiscretization {
  std::vector<double> boundaries;
  std::vector<std::size_t> cut_after;  // index j of u_j after which each boundary is placed
  double score = 0.0;
};

/// Score terms shared by the optimizer and by `bd_score`.
///
/// log P(L) + log P(D | L) for a policy L with k intervals I:
///   sum over candidate gaps j:  log(1 - pi_j)                     (no cut)
///   + sum over cut gaps j:      log(pi_j) - log(1 - pi_j)
///   + sum over contexts c:      lgamma(k) - lgamma(k + n_c)      (Dirichlet(1) over bins given c)
///   + sum over intervals I:     sum_c lgamma(1 + n_{I,c}) - n_I * log(m_I)
/// where m_I is the number of distinct values inside I (values are uniform over
/// the distinct values of their interval).
class BayesianDiscretizer {
 public:
  BayesianDiscretizer(std::span<const double> values, std::span<const std::uint32_t> context,
                      BayesianDiscretizationOptions options = {})
      : options_(options) {
    if (values.size() != context.size()) throw std::invalid_argument("bayesian_discretize: context length mismatch");
    if (options_.bin_max < 1) throw std::invalid_argument("bayesian_discretize: bin_max must be positive");
    u_ = distinct_sorted(values);
    if (u_.size() < 2) throw std::invalid_argument("insufficient distinct values");
    const std::size_t m = u_.size();

    // compress context ids
    std::vector<std::uint32_t> ids(context.begin(), context.end());
    std::vector<std::uint32_t> levels = ids;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    n_contexts_ = levels.size();
    for (auto& c : ids) {
      c = static_cast<std::uint32_t>(std::lower_bound(levels.begin(), levels.end(), c) - levels.begin());
    }

    // samples grouped by distinct value index
    group_start_.assign(m + 1, 0);
    value_index_.resize(values.size());
    for (std::size_t s = 0; s < values.size(); ++s) {
      value_index_[s] = static_cast<std::size_t>(std::lower_bound(u_.begin(), u_.end(), values[s]) - u_.begin());
      ++group_start_[value_index_[s] + 1];
    }
    std::partial_sum(group_start_.begin(), group_start_.end(), group_start_.begin());
    grouped_context_.resize(values.size());
    {
      auto fill = group_start_;
      for (std::size_t s = 0; s < values.size(); ++s) grouped_context_[fill[value_index_[s]]++] = ids[s];
    }
    context_totals_.assign(n_contexts_, 0);
    for (auto c : ids) ++context_totals_[c];

    const double range = u_.back() - u_.front();
    log_no_cut_.resize(m - 1);
    cut_log_odds_.resize(m - 1);
    base_prior_ = 0.0;
    for (std::size_t j = 0; j + 1 < m; ++j) {
      const double x = options_.boundary_rate * (u_[j + 1] - u_[j]) / range;
      log_no_cut_[j] = -x;
      cut_log_odds_[j] = std::log(-std::expm1(-x)) + x;
      base_prior_ += log_no_cut_[j];
    }
  }

  std::size_t distinct_count() const { return u_.size(); }
  std::size_t max_intervals() const {
    return std::min<std::size_t>(static_cast<std::size_t>(std::max(options_.bin_max, 1)), u_.size());
  }

  std::size_t memory_estimate() const {
    const std::size_t m = u_.size();
    return m * (m + 1) / 2 * sizeof(double) + max_intervals() * m * (sizeof(double) + sizeof(std::uint32_t)) +
           n_contexts_ * sizeof(std::uint32_t) * 2;
  }

  /// Log-odds term added when a boundary is placed after distinct value j.
  double cut_log_odds(std::size_t j) const { return cut_log_odds_[j]; }
  double base_prior() const { return base_prior_; }

  double interval_count_term(std::size_t k) const {
    double t = 0.0;
    const double kk = static_cast<double>(k);
    for (auto nc : context_totals_) t += std::lgamma(kk) - std::lgamma(kk + nc);
    return t;
  }

  /// Score of cutting after the given distinct-value indices (ascending).
  double score(std::span<const std::size_t> cut_after) const {
    const std::size_t m = u_.size();
    double total = base_prior_ + interval_count_term(cut_after.size() + 1);
    std::size_t a = 0;
    for (std::size_t i = 0; i <= cut_after.size(); ++i) {
      const std::size_t b = i < cut_after.size() ? cut_after[i] : m - 1;
      if (b < a || b >= m) throw std::invalid_argument("bayesian_discretize: cut indices must be ascending");
      total += interval_term(a, b);
      if (i < cut_after.size()) total += cut_log_odds_[b];
      a = b + 1;
    }
    return total;
  }

  BayesianDiscretization solve() const {
    if (memory_estimate() > options_.memory_cap_bytes) throw bd_memory_exceeded("BD memory exceeded");
    const std::size_t m = u_.size();
    const std::size_t t_max = max_intervals();

    // f(a, b) for all a <= b, stored row-major over the upper triangle
    std::vector<double> f(m * (m + 1) / 2);
    auto tri = [m](std::size_t a, std::size_t b) { return a * m - a * (a + 1) / 2 + b; };
    std::vector<std::uint32_t> counts(n_contexts_, 0);
    std::vector<std::uint32_t> touched;
    for (std::size_t a = 0; a < m; ++a) {
      double lg = 0.0;
      std::size_t samples = 0;
      for (std::size_t b = a; b < m; ++b) {
        for (std::size_t s = group_start_[b]; s < group_start_[b + 1]; ++s) {
          const auto c = grouped_context_[s];
          if (counts[c] == 0) touched.push_back(c);
          lg += std::log(static_cast<double>(counts[c]) + 1.0);
          ++counts[c];
          ++samples;
        }
        f[tri(a, b)] = lg - static_cast<double>(samples) * std::log(static_cast<double>(b - a + 1));
      }
      for (auto c : touched) counts[c] = 0;
      touched.clear();
    }

    const double neg_inf = -std::numeric_limits<double>::infinity();
    // best[t][b]: best score of the first b+1 values split into t+1 intervals
    std::vector<double> best(t_max * m, neg_inf);
    std::vector<std::uint32_t> from(t_max * m, 0);
    for (std::size_t b = 0; b < m; ++b) best[b] = f[tri(0, b)];
    for (std::size_t t = 1; t < t_max; ++t) {
      for (std::size_t b = t; b < m; ++b) {
        double top = neg_inf;
        std::uint32_t arg = 0;
        for (std::size_t a = t; a <= b; ++a) {
          const double prev = best[(t - 1) * m + (a - 1)];
          if (prev == neg_inf) continue;
          const double s = prev + cut_log_odds_[a - 1] + f[tri(a, b)];
          if (s > top) {
            top = s;
            arg = static_cast<std::uint32_t>(a);
          }
        }
        best[t * m + b] = top;
        from[t * m + b] = arg;
      }
    }

    double top = neg_inf;
    std::size_t top_t = 0;
    for (std::size_t t = 0; t < t_max; ++t) {
      const double s = best[t * m + (m - 1)];
      if (s == neg_inf) continue;
      const double total = s + interval_count_term(t + 1);
      if (total > top) {
        top = total;
        top_t = t;
      }
    }

    BayesianDiscretization out;
    out.score = top + base_prior_;
    std::size_t b = m - 1;
    for (std::size_t t = top_t; t > 0; --t) {
      const std::size_t a = from[t * m + b];
      out.cut_after.push_back(a - 1);
      b = a - 1;
    }
    std::reverse(out.cut_after.begin(), out.cut_after.end());
    for (auto j : out.cut_after) out.boundaries.push_back(0.5 * (u_[j] + u_[j + 1]));
    return out;
  }

  const std::vector<double>& distinct_values() const { return u_; }

 private:
  double interval_term(std::size_t a, std::size_t b) const {
    std::vector<std::uint32_t> counts(n_contexts_, 0);
    double lg = 0.0;
    std::size_t samples = 0;
    for (std::size_t s = group_start_[a]; s < group_start_[b + 1]; ++s) {
      lg += std::log(static_cast<double>(counts[grouped_context_[s]]++) + 1.0);
      ++samples;
    }
    return lg - static_cast<double>(samples) * std::log(static_cast<double>(b - a + 1));
  }

  BayesianDiscretizationOptions options_;
  std::vector<double> u_;
  std::size_t n_contexts_ = 0;
  std::vector<std::size_t> group_start_;
  std::vector<std::size_t> value_index_;
  std::vector<std::uint32_t> grouped_context_;
  std::vector<std::uint32_t> context_totals_;
  std::vector<double> log_no_cut_;
  std::vector<double> cut_log_odds_;
  double base_prior_ = 0.0;
};

/// Boundaries maximizing log P(policy) + log P(data | policy) for a normalized
/// column given the joint configuration of its (already discrete) context.
/// Runs in O(bin_max * m^2) for m distinct values.
inline BayesianDiscretization bayesian_discretize(std::span<const double> values,
                                                  std::span<const std::uint32_t> context,
                                                  BayesianDiscretizationOptions options = {}) {
  return BayesianDiscretizer(values, context, options).solve();
}

}  // namespace dbngomea
