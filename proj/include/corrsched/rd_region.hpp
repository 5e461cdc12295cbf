#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "corrsched/error.hpp"
#include "corrsched/simplex.hpp"
#include "corrsched/source_stats.hpp"

namespace corrsched {

// Largest joint-decoding group the subset tables support.
inline constexpr std::size_t kMaxGroupSize = 8;

// Conditional entropies h(S | G \ S) for every non-empty S of a group,
// indexed by member bitmask. Built once per group; the rates change every
// frame but the entropies do not.
class GroupModel {
public:
  GroupModel() = default;

  GroupModel(std::vector<std::size_t> members, const CovarianceMatrix& cov)
      : members_(std::move(members)) {
    const std::size_t n = members_.size();
    if (n == 0 || n > kMaxGroupSize) {
      throw std::invalid_argument("GroupModel: group size must be in 1.." +
                                  std::to_string(kMaxGroupSize));
    }
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
      rows[i] = cov.index_of(members_[i]);
    }
    const std::uint32_t full = (1u << n) - 1;
    std::vector<double> joint(full + 1, 0.0);
    std::vector<std::size_t> pick;
    for (std::uint32_t mask = 1; mask <= full; ++mask) {
      pick.clear();
      for (std::size_t i = 0; i < n; ++i) {
        if (mask & (1u << i)) {
          pick.push_back(rows[i]);
        }
      }
      joint[mask] = joint_entropy_rows(pick, cov);
    }
    cond_.assign(full + 1, 0.0);
    for (std::uint32_t mask = 1; mask <= full; ++mask) {
      cond_[mask] = joint[full] - joint[full & ~mask];
    }
    marginal_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      marginal_[i] = joint[1u << i];
    }
  }

  const std::vector<std::size_t>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  std::uint32_t full_mask() const { return (1u << members_.size()) - 1; }

  // h(S | G \ S) for the member subset `mask`.
  double conditional(std::uint32_t mask) const { return cond_.at(mask); }
  double marginal(std::size_t i) const { return marginal_.at(i); }

  // Right-hand side of the region constraint for subset `mask`:
  //   sum_{i in S} Delta_i >= -sum_{i in S} R_i + h(S | G\S) - |S|/2 log2(2 pi e).
  double bound(std::uint32_t mask, std::span<const double> rates) const {
    double b = cond_[mask] - 0.5 * std::popcount(mask) * kLog2TwoPiE;
    for (std::size_t i = 0; i < members_.size(); ++i) {
      if (mask & (1u << i)) {
        b -= rates[i];
      }
    }
    return b;
  }

private:
  std::vector<std::size_t> members_;
  std::vector<double> cond_;
  std::vector<double> marginal_;
};

struct RdConstraint {
  std::uint32_t subset = 0; // bitmask over RdRegion::group
  double bound = 0.0;       // sum_{i in subset} Delta_i >= bound
};

// High-resolution Slepian-Wolf region of one group in log-distortion space
// (Delta_i = 1/2 log2 D_i). One constraint per non-empty subset.
struct RdRegion {
  std::vector<std::size_t> group;
  std::vector<double> rates; // bits per frame, aligned with group
  std::vector<RdConstraint> constraints;

  // Smallest constraint slack of `delta`; negative means infeasible.
  double min_slack(std::span<const double> delta) const {
    double worst = std::numeric_limits<double>::infinity();
    for (const RdConstraint& c : constraints) {
      double sum = 0.0;
      for (std::size_t i = 0; i < group.size(); ++i) {
        if (c.subset & (1u << i)) {
          sum += delta[i];
        }
      }
      worst = std::min(worst, sum - c.bound);
    }
    return worst;
  }
};

struct DistortionVector {
  std::vector<double> delta; // 1/2 log2 of squared-error distortion

  double max() const { return *std::max_element(delta.begin(), delta.end()); }
};

// Squared-error distortion from log-distortion, and its dB value 10 log10 D.
inline double distortion_from_delta(double delta) { return std::exp2(2.0 * delta); }
inline double db_from_delta(double delta) { return 20.0 * std::log10(2.0) * delta; }
inline double delta_from_distortion(double d) { return 0.5 * std::log2(d); }

inline RdRegion build_region(const GroupModel& model, std::span<const double> rates) {
  if (rates.size() != model.size()) {
    throw std::invalid_argument("build_region: one rate per group member expected");
  }
  RdRegion region;
  region.group = model.members();
  region.rates.assign(rates.begin(), rates.end());
  for (std::uint32_t mask = 1; mask <= model.full_mask(); ++mask) {
    region.constraints.push_back({mask, model.bound(mask, rates)});
  }
  return region;
}

inline RdRegion build_region(std::span<const std::size_t> group, std::span<const double> rates,
                             const CovarianceMatrix& cov) {
  for (double r : rates) {
    if (!(r >= 0.0)) {
      throw std::invalid_argument("build_region: rates must be non-negative");
    }
  }
  return build_region(GroupModel({group.begin(), group.end()}, cov), rates);
}

namespace detail {

// Lexicographically optimal (min-max fair) point of the region
// {Delta : Delta(S) >= f(S)}. f is supermodular, so the optimum is found by
// repeatedly fixing the subset with the largest average requirement at that
// average and contracting it out.
template <typename BoundFn>
void lex_minmax(std::size_t n, BoundFn&& f, std::span<double> out) {
  const std::uint32_t full = (1u << n) - 1;
  std::uint32_t fixed = 0;
  double fixed_value = 0.0;
  while (fixed != full) {
    const std::uint32_t free = full & ~fixed;
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t best_mask = 0;
    // Enumerate the non-empty subsets of `free`.
    for (std::uint32_t t = free; t != 0; t = (t - 1) & free) {
      const int k = std::popcount(t);
      const double ratio = (f(t | fixed) - fixed_value) / k;
      const double eps = 1e-12 * (1.0 + std::abs(best));
      if (ratio > best + eps || (ratio >= best - eps && k > std::popcount(best_mask))) {
        best = std::max(best, ratio);
        best_mask = t;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (best_mask & (1u << i)) {
        out[i] = best;
      }
    }
    fixed |= best_mask;
    fixed_value = f(fixed);
  }
}

// Two-member closed form. a1, a2 are the singleton bounds and s the
// sum bound. If one member's own requirement already exceeds half the
// pair requirement it sets the maximum and the partner takes the rest of
// the sum constraint; otherwise both share the sum bound equally.
inline void pair_minmax(double a1, double a2, double s, std::span<double> out) {
  if (a1 >= s - a1) {
    out[0] = a1;
    out[1] = s - a1;
  } else if (a2 >= s - a2) {
    out[1] = a2;
    out[0] = s - a2;
  } else {
    out[0] = 0.5 * s;
    out[1] = 0.5 * s;
  }
}

} // namespace detail

// Min-max log-distortion split of a group at the given rates, written into
// `out` (aligned with the model's members). Allocation free; this sits in the
// per-channel scheduling loop.
inline void minmax_split(const GroupModel& model, std::span<const double> rates,
                         std::span<double> out) {
  const std::size_t n = model.size();
  if (n == 1) {
    out[0] = model.bound(1, rates);
    return;
  }
  if (n == 2) {
    detail::pair_minmax(model.bound(1, rates), model.bound(2, rates), model.bound(3, rates), out);
    return;
  }
  detail::lex_minmax(n, [&](std::uint32_t mask) { return model.bound(mask, rates); }, out);
}

inline DistortionVector minmax_split(const RdRegion& region) {
  const std::size_t n = region.group.size();
  if (n == 0 || n > kMaxGroupSize) {
    throw std::invalid_argument("minmax_split: unsupported group size");
  }
  std::vector<double> f(std::size_t{1} << n, 0.0);
  for (const RdConstraint& c : region.constraints) {
    f[c.subset] = c.bound;
  }
  DistortionVector dv;
  dv.delta.resize(n);
  if (n == 1) {
    dv.delta[0] = f[1];
  } else if (n == 2) {
    detail::pair_minmax(f[1], f[2], f[3], dv.delta);
  } else {
    detail::lex_minmax(n, [&](std::uint32_t mask) { return f[mask]; }, dv.delta);
  }
  return dv;
}

// Same optimum through the simplex engine: minimize t subject to the region
// and Delta_i <= t, then minimize sum(Delta) with t held at its optimum.
inline DistortionVector minmax_split_lp(const RdRegion& region) {
  const std::size_t n = region.group.size();
  lp::Problem prob;
  std::vector<std::size_t> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = prob.add_variable(-lp::kInf, lp::kInf, 0.0);
  }
  const std::size_t t = prob.add_variable(-lp::kInf, lp::kInf, 1.0);
  for (const RdConstraint& c : region.constraints) {
    std::vector<lp::Term> terms;
    for (std::size_t i = 0; i < n; ++i) {
      if (c.subset & (1u << i)) {
        terms.push_back({d[i], 1.0});
      }
    }
    prob.add_row(std::move(terms), lp::RowSense::GreaterEqual, c.bound);
  }
  for (std::size_t i = 0; i < n; ++i) {
    prob.add_row({{d[i], 1.0}, {t, -1.0}}, lp::RowSense::LessEqual, 0.0);
  }
  const lp::Solution first = lp::solve(prob);
  if (first.status != lp::Status::Optimal) {
    throw SolverError(std::string("minmax LP: ") + lp::to_string(first.status) + "\n" + prob.dump());
  }
  prob.set_cost(t, 0.0);
  prob.set_bounds(t, -lp::kInf, first.objective + 1e-12);
  for (std::size_t i = 0; i < n; ++i) {
    prob.set_cost(d[i], 1.0);
  }
  const lp::Solution second = lp::solve(prob);
  if (second.status != lp::Status::Optimal) {
    throw SolverError(std::string("minmax LP (phase 2): ") + lp::to_string(second.status) + "\n" +
                      prob.dump());
  }
  DistortionVector dv;
  dv.delta.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    dv.delta[i] = second.x[d[i]];
  }
  return dv;
}

// Per-user log-distortion change from jointly decoding n equidistant sources
// instead of decoding them independently: (h(S) - sum_i h(X_i)) / n.
inline double group_size_gain(std::size_t n, double pairwise_distance, const SourceModel& model) {
  model.validate();
  if (n == 0) {
    throw std::invalid_argument("group_size_gain: n must be at least 1");
  }
  if (n == 1) {
    return 0.0;
  }
  const auto size = static_cast<Eigen::Index>(n);
  CovarianceMatrix cov;
  cov.entries = Eigen::MatrixXd::Constant(size, size,
                                          model.variance * std::exp(-pairwise_distance / model.theta));
  cov.entries.diagonal().setConstant(model.variance);
  cov.member_ids.resize(n);
  std::iota(cov.member_ids.begin(), cov.member_ids.end(), std::size_t{0});
  const double joint = joint_entropy_rows(cov.member_ids, cov);
  const double single = 0.5 * (kLog2TwoPiE + std::log2(model.variance));
  return (joint - static_cast<double>(n) * single) / static_cast<double>(n);
}

} // namespace corrsched
