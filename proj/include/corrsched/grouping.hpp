#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "corrsched/error.hpp"
#include "corrsched/geometry.hpp"
#include "corrsched/random.hpp"
#include "corrsched/rd_region.hpp"
#include "corrsched/source_stats.hpp"

namespace corrsched {

// Partition of one cell's sources into joint-decoding groups.
struct Grouping {
  std::size_t cell_id = 0;
  std::size_t group_size = 1;
  std::vector<std::vector<std::size_t>> groups;
  double score = 0.0;
  // Source picked (from the outer candidates) to start each group, in order.
  std::vector<std::size_t> picks;
};

inline Grouping singleton_grouping(const Cell& cell) {
  Grouping g;
  g.cell_id = cell.id;
  g.group_size = 1;
  for (std::size_t id : cell.sources) {
    g.groups.push_back({id});
    g.picks.push_back(id);
  }
  return g;
}

// Disjoint and covering the cell's sources, no group above group_size and at
// most one group below it.
inline bool is_valid_partition(const Grouping& g, const Cell& cell) {
  std::vector<std::size_t> seen;
  std::size_t short_groups = 0;
  for (const auto& grp : g.groups) {
    if (grp.empty() || grp.size() > g.group_size) {
      return false;
    }
    if (grp.size() < g.group_size) {
      ++short_groups;
    }
    seen.insert(seen.end(), grp.begin(), grp.end());
  }
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> expected = cell.sources;
  std::sort(expected.begin(), expected.end());
  return seen == expected && short_groups <= 1;
}

inline std::size_t default_outer_count(std::size_t population) { return (population + 2) / 3; }

namespace detail {

inline void check_grouping_args(std::size_t group_size, std::size_t trials) {
  if (group_size == 0 || group_size > kMaxGroupSize) {
    throw ConfigError("grouping.group_size: must be in 1.." + std::to_string(kMaxGroupSize));
  }
  if (trials == 0) {
    throw ConfigError("grouping.trials: must be at least 1");
  }
}

// Index into `remaining` of a uniformly drawn source among the n_outer
// farthest from the base station (ties broken by lower id).
inline std::size_t pick_outer(const Topology& topo, const Cell& cell,
                              const std::vector<std::size_t>& remaining, std::size_t n_outer,
                              Rng& rng) {
  std::vector<std::pair<double, std::size_t>> by_distance;
  by_distance.reserve(remaining.size());
  for (std::size_t idx = 0; idx < remaining.size(); ++idx) {
    const double d = wrapped_distance(topo.sources[remaining[idx]].position, cell.center, topo);
    by_distance.emplace_back(d, idx);
  }
  std::sort(by_distance.begin(), by_distance.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) {
      return a.first > b.first;
    }
    return remaining[a.second] < remaining[b.second];
  });
  const std::size_t pool = std::clamp<std::size_t>(n_outer, 1, remaining.size());
  return by_distance[rng.below(pool)].second;
}

inline double source_distance(const Topology& topo, std::size_t a, std::size_t b) {
  return wrapped_distance(topo.sources[a].position, topo.sources[b].position, topo);
}

inline double pairwise_sum(const Topology& topo, const std::vector<std::size_t>& grp) {
  double s = 0.0;
  for (std::size_t i = 0; i < grp.size(); ++i) {
    for (std::size_t j = i + 1; j < grp.size(); ++j) {
      s += source_distance(topo, grp[i], grp[j]);
    }
  }
  return s;
}

} // namespace detail

// One randomized pass of distance-based grouping with outer priority.
inline Grouping distance_op_trial(const Topology& topo, std::size_t cell_id, std::size_t group_size,
                                  std::size_t n_outer, Rng& rng) {
  const Cell& cell = topo.cells.at(cell_id);
  Grouping g;
  g.cell_id = cell_id;
  g.group_size = group_size;
  std::vector<std::size_t> remaining = cell.sources;
  while (!remaining.empty()) {
    const std::size_t idx = detail::pick_outer(topo, cell, remaining, n_outer, rng);
    const std::size_t seed = remaining[idx];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(idx));
    std::sort(remaining.begin(), remaining.end(), [&](std::size_t a, std::size_t b) {
      const double da = detail::source_distance(topo, seed, a);
      const double db = detail::source_distance(topo, seed, b);
      return da != db ? da < db : a < b;
    });
    const std::size_t take = std::min(group_size - 1, remaining.size());
    std::vector<std::size_t> grp{seed};
    grp.insert(grp.end(), remaining.begin(), remaining.begin() + static_cast<std::ptrdiff_t>(take));
    remaining.erase(remaining.begin(), remaining.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(remaining.begin(), remaining.end());
    g.score += detail::pairwise_sum(topo, grp);
    g.picks.push_back(seed);
    g.groups.push_back(std::move(grp));
  }
  return g;
}

// Best of `trials` distance-OP passes by lowest total intra-group distance.
// Trial t draws from its own stream derived from (rng_seed, t), so a larger
// trial count always contains the smaller one's candidates.
inline Grouping distance_op(const Topology& topo, std::size_t cell_id, std::size_t group_size,
                            std::size_t trials, std::size_t n_outer, std::uint64_t rng_seed) {
  detail::check_grouping_args(group_size, trials);
  if (group_size == 1) {
    return singleton_grouping(topo.cells.at(cell_id));
  }
  Grouping best;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(rng_seed, t));
    Grouping g = distance_op_trial(topo, cell_id, group_size, n_outer, rng);
    if (t == 0 || g.score < best.score) {
      best = std::move(g);
    }
  }
  return best;
}

namespace detail {

// Predicted worst log-distortion of `grp` at the given rates, or +inf if the
// group's covariance is degenerate.
inline double predicted_max_delta(const std::vector<std::size_t>& grp,
                                  std::span<const double> rates_by_id, const CovarianceMatrix& cov) {
  try {
    GroupModel model(grp, cov);
    std::vector<double> rates(grp.size());
    for (std::size_t i = 0; i < grp.size(); ++i) {
      rates[i] = rates_by_id[grp[i]];
    }
    std::vector<double> delta(grp.size());
    minmax_split(model, rates, delta);
    return *std::max_element(delta.begin(), delta.end());
  } catch (const DegenerateModelError&) {
    return std::numeric_limits<double>::infinity();
  }
}

} // namespace detail

// One randomized pass of distortion-based grouping with outer priority.
// Partners are added greedily: each addition is the remaining source that
// gives the lowest predicted min-max distortion for the group so far.
inline Grouping distortion_op_trial(const Topology& topo, std::size_t cell_id,
                                    std::span<const double> rates_by_id, const CovarianceMatrix& cov,
                                    std::size_t group_size, std::size_t n_outer, Rng& rng) {
  const Cell& cell = topo.cells.at(cell_id);
  Grouping g;
  g.cell_id = cell_id;
  g.group_size = group_size;
  g.score = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> remaining = cell.sources;
  while (!remaining.empty()) {
    const std::size_t idx = detail::pick_outer(topo, cell, remaining, n_outer, rng);
    std::vector<std::size_t> grp{remaining[idx]};
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(idx));
    double group_max = detail::predicted_max_delta(grp, rates_by_id, cov);
    while (grp.size() < group_size && !remaining.empty()) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_idx = remaining.size();
      for (std::size_t r = 0; r < remaining.size(); ++r) {
        auto trial = grp;
        trial.push_back(remaining[r]);
        const double v = detail::predicted_max_delta(trial, rates_by_id, cov);
        if (v < best) {
          best = v;
          best_idx = r;
        }
      }
      if (best_idx == remaining.size()) {
        break; // every candidate degenerate
      }
      grp.push_back(remaining[best_idx]);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best_idx));
      group_max = best;
    }
    g.score = std::max(g.score, group_max);
    g.picks.push_back(grp.front());
    g.groups.push_back(std::move(grp));
  }
  return g;
}

// Best of `trials` distortion-OP passes by lowest predicted worst
// log-distortion in the cell. `rates_by_id` holds baseline (independent
// decoding) rates indexed by global source id.
inline Grouping distortion_op(const Topology& topo, std::size_t cell_id,
                              std::span<const double> rates_by_id, const CovarianceMatrix& cov,
                              std::size_t group_size, std::size_t trials, std::size_t n_outer,
                              std::uint64_t rng_seed) {
  detail::check_grouping_args(group_size, trials);
  if (group_size == 1) {
    return singleton_grouping(topo.cells.at(cell_id));
  }
  Grouping best;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(rng_seed, t));
    Grouping g = distortion_op_trial(topo, cell_id, rates_by_id, cov, group_size, n_outer, rng);
    if (t == 0 || g.score < best.score) {
      best = std::move(g);
    }
  }
  return best;
}

} // namespace corrsched
