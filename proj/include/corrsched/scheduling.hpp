#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "corrsched/error.hpp"
#include "corrsched/grouping.hpp"
#include "corrsched/icon.hpp"
#include "corrsched/rd_region.hpp"
#include "corrsched/simplex.hpp"

namespace corrsched {

// Possible rate R*_{i,c} of each source of a cell (rows, in the cell's
// ascending source order) on each channel (columns), bits per frame.
using RateMatrix = Eigen::MatrixXd;

// Exponentially averaged rate and distortion per source, indexed by global
// source id.
struct RunningAverages {
  std::vector<double> rate;       // bits per frame
  std::vector<double> distortion; // linear squared error
  std::size_t window = 100;

  // Rates start at a small positive value so the PF ratio is defined;
  // distortions start at the source variance (nothing received yet).
  static RunningAverages initial(std::size_t num_sources, double variance, std::size_t window,
                                 double rate_floor = 1e-6) {
    if (window == 0) {
      throw ConfigError("scheduler.window: must be at least 1");
    }
    RunningAverages avg;
    avg.rate.assign(num_sources, rate_floor);
    avg.distortion.assign(num_sources, variance);
    avg.window = window;
    return avg;
  }

  // Averaged distortion in the same log2 units as Delta.
  double log_distortion(std::size_t id) const { return delta_from_distortion(distortion[id]); }
};

// Joint-decoding models of one cell's groups, plus lookup from a source's
// position in the cell to its group.
struct CellGroups {
  std::size_t cell_id = 0;
  std::vector<std::size_t> members; // cell sources, ascending
  std::vector<GroupModel> models;
  std::vector<std::size_t> group_of; // local index -> model index
  std::vector<std::size_t> slot_of;  // local index -> position inside the model
  std::vector<std::vector<std::size_t>> locals; // model index -> local indices
  // Groups whose covariance was degenerate and were split into singletons.
  std::size_t degenerate_splits = 0;

  std::size_t local_index(std::size_t id) const {
    const auto it = std::lower_bound(members.begin(), members.end(), id);
    if (it == members.end() || *it != id) {
      throw std::out_of_range("source " + std::to_string(id) + " is not in cell " +
                              std::to_string(cell_id));
    }
    return static_cast<std::size_t>(it - members.begin());
  }
};

// A group whose covariance is rank deficient cannot be decoded jointly; its
// members fall back to independent decoding.
inline CellGroups build_cell_groups(const Cell& cell, const Grouping& grouping,
                                    const CovarianceMatrix& cov) {
  CellGroups cg;
  cg.cell_id = cell.id;
  cg.members = cell.sources;
  std::sort(cg.members.begin(), cg.members.end());
  cg.group_of.assign(cg.members.size(), 0);
  cg.slot_of.assign(cg.members.size(), 0);
  auto add = [&](std::vector<std::size_t> ids, GroupModel model) {
    std::vector<std::size_t> locals;
    for (std::size_t s = 0; s < ids.size(); ++s) {
      const std::size_t li = cg.local_index(ids[s]);
      cg.group_of[li] = cg.models.size();
      cg.slot_of[li] = s;
      locals.push_back(li);
    }
    cg.models.push_back(std::move(model));
    cg.locals.push_back(std::move(locals));
  };
  for (const auto& grp : grouping.groups) {
    try {
      add(grp, GroupModel(grp, cov));
    } catch (const DegenerateModelError&) {
      ++cg.degenerate_splits;
      for (std::size_t id : grp) {
        add({id}, GroupModel({id}, cov));
      }
    }
  }
  return cg;
}

// Proportional fair: channel c goes to argmax_j R*_{j,c} / Rbar_j^alpha,
// ties (including an all-zero channel) to the lowest source id.
inline AllocationMatrix pf_assign(std::size_t cell_id, std::span<const std::size_t> members,
                                  const RateMatrix& rates, const RunningAverages& avg, double alpha) {
  AllocationMatrix out;
  out.cell_id = cell_id;
  const auto channels = static_cast<std::size_t>(rates.cols());
  out.assign.resize(channels);
  std::vector<double> denom(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    denom[i] = std::pow(avg.rate[members[i]], alpha);
  }
  for (std::size_t c = 0; c < channels; ++c) {
    std::size_t best = 0;
    double best_val = -1.0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const double v = rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) / denom[i];
      if (v > best_val) {
        best_val = v;
        best = i;
      }
    }
    out.assign[c] = members[best];
  }
  return out;
}

// Distortion proportional fair. For each channel, candidate i is scored by
//   D*_{i,c} / Dbar_i^alpha * prod_{j in group(i), j != i} D*_j / Dbar_j^alpha
// where the D* come from the group's min-max split with R_i = R*_{i,c} and
// every partner at zero rate. Scored in the log2 domain; lowest wins, ties to
// the lowest source id.
inline AllocationMatrix dpf_assign(const CellGroups& cg, const RateMatrix& rates,
                                   const RunningAverages& avg, double alpha) {
  AllocationMatrix out;
  out.cell_id = cg.cell_id;
  const auto channels = static_cast<std::size_t>(rates.cols());
  out.assign.resize(channels);

  // alpha * sum of averaged log-distortions per group is channel independent.
  std::vector<double> group_history(cg.models.size(), 0.0);
  for (std::size_t g = 0; g < cg.models.size(); ++g) {
    for (std::size_t id : cg.models[g].members()) {
      group_history[g] += alpha * avg.log_distortion(id);
    }
  }

  std::array<double, kMaxGroupSize> rate_buf{};
  std::array<double, kMaxGroupSize> delta_buf{};
  for (std::size_t c = 0; c < channels; ++c) {
    std::size_t best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cg.members.size(); ++i) {
      const std::size_t g = cg.group_of[i];
      const GroupModel& model = cg.models[g];
      const std::size_t n = model.size();
      std::fill_n(rate_buf.begin(), n, 0.0);
      rate_buf[cg.slot_of[i]] = rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      minmax_split(model, std::span<const double>(rate_buf.data(), n),
                   std::span<double>(delta_buf.data(), n));
      double v = -group_history[g];
      for (std::size_t m = 0; m < n; ++m) {
        v += delta_buf[m];
      }
      if (v < best_val) {
        best_val = v;
        best = i;
      }
    }
    out.assign[c] = cg.members[best];
  }
  return out;
}

// Time-shared channel allocation over one scheduling period of T frames.
struct FractionalAllocation {
  std::size_t cell_id = 0;
  std::size_t period_frames = 0;
  std::vector<std::size_t> members;
  Eigen::MatrixXd shares; // members x channels, each column sums to T
  std::vector<double> delta;
  double objective = 0.0;
  std::size_t iterations = 0;
  double max_dual_infeasibility = 0.0;
};

// Builds the relaxed per-cell assignment problem:
//   minimize max_i (Delta_i + Dbar_i)
//   s.t. for every group G and subset S of G:
//          sum_{i in S} sum_c a_{i,c} R*_{i,c} + sum_{i in S} Delta_i >= h(S | G\S) - |S|/2 log2(2 pi e)
//        sum_i a_{i,c} = T for every channel, 0 <= a_{i,c} <= T.
// Variable layout: a_{i,c} at i * C + c, then Delta_i, then the epigraph t.
inline lp::Problem opt_problem(const CellGroups& cg, const RateMatrix& rates,
                               const RunningAverages& avg, std::size_t period_frames) {
  const std::size_t n = cg.members.size();
  const auto channels = static_cast<std::size_t>(rates.cols());
  const auto t_frames = static_cast<double>(period_frames);
  lp::Problem prob;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      prob.add_variable(0.0, t_frames, 0.0);
    }
  }
  const std::size_t delta0 = prob.num_vars();
  for (std::size_t i = 0; i < n; ++i) {
    prob.add_variable(-lp::kInf, lp::kInf, 0.0);
  }
  const std::size_t epi = prob.add_variable(-lp::kInf, lp::kInf, 1.0);

  for (std::size_t c = 0; c < channels; ++c) {
    std::vector<lp::Term> terms;
    terms.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      terms.push_back({i * channels + c, 1.0});
    }
    prob.add_row(std::move(terms), lp::RowSense::Equal, t_frames);
  }
  for (std::size_t g = 0; g < cg.models.size(); ++g) {
    const GroupModel& model = cg.models[g];
    const auto& locals = cg.locals[g];
    for (std::uint32_t mask = 1; mask <= model.full_mask(); ++mask) {
      std::vector<lp::Term> terms;
      for (std::size_t s = 0; s < locals.size(); ++s) {
        if (!(mask & (1u << s))) {
          continue;
        }
        const std::size_t i = locals[s];
        for (std::size_t c = 0; c < channels; ++c) {
          const double r = rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
          if (r != 0.0) {
            terms.push_back({i * channels + c, r});
          }
        }
        terms.push_back({delta0 + i, 1.0});
      }
      const double rhs = model.conditional(mask) - 0.5 * std::popcount(mask) * kLog2TwoPiE;
      prob.add_row(std::move(terms), lp::RowSense::GreaterEqual, rhs);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    prob.add_row({{delta0 + i, 1.0}, {epi, -1.0}}, lp::RowSense::LessEqual,
                 -avg.log_distortion(cg.members[i]));
  }

  // Feasible start: whole channels handed out greedily by rate relative to
  // what each source already holds, every group at its min-max split for
  // those rates, and t at the resulting maximum.
  std::vector<double> held(n, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    std::size_t pick = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) / (1.0 + held[i]);
      if (v > best) {
        best = v;
        pick = i;
      }
    }
    held[pick] += t_frames * rates(static_cast<Eigen::Index>(pick), static_cast<Eigen::Index>(c));
    prob.set_start(pick * channels + c, t_frames);
  }
  std::array<double, kMaxGroupSize> rate_buf{};
  std::array<double, kMaxGroupSize> delta_buf{};
  double top = -lp::kInf;
  for (std::size_t g = 0; g < cg.models.size(); ++g) {
    const auto& locals = cg.locals[g];
    for (std::size_t s = 0; s < locals.size(); ++s) {
      rate_buf[s] = held[locals[s]];
    }
    minmax_split(cg.models[g], std::span<const double>(rate_buf.data(), locals.size()),
                 std::span<double>(delta_buf.data(), locals.size()));
    for (std::size_t s = 0; s < locals.size(); ++s) {
      prob.set_start(delta0 + locals[s], delta_buf[s]);
      top = std::max(top, delta_buf[s] + avg.log_distortion(cg.members[locals[s]]));
    }
  }
  prob.set_start(epi, top);
  return prob;
}

inline FractionalAllocation opt_assign(const CellGroups& cg, const RateMatrix& rates,
                                       const RunningAverages& avg, std::size_t period_frames,
                                       const lp::Options& options = {}) {
  if (period_frames == 0) {
    throw ConfigError("scheduler.opt_period: must be at least 1");
  }
  const lp::Problem prob = opt_problem(cg, rates, avg, period_frames);
  const lp::Solution sol = lp::solve(prob, options);
  if (sol.status != lp::Status::Optimal) {
    throw SolverError("OPT assignment for cell " + std::to_string(cg.cell_id) + ": " +
                      lp::to_string(sol.status) + " after " + std::to_string(sol.iterations) +
                      " iterations\n" + prob.dump());
  }
  const std::size_t n = cg.members.size();
  const auto channels = static_cast<std::size_t>(rates.cols());
  FractionalAllocation fa;
  fa.cell_id = cg.cell_id;
  fa.period_frames = period_frames;
  fa.members = cg.members;
  fa.shares.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(channels));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      fa.shares(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = sol.x[i * channels + c];
    }
  }
  fa.delta.assign(sol.x.begin() + static_cast<std::ptrdiff_t>(n * channels),
                  sol.x.begin() + static_cast<std::ptrdiff_t>(n * channels + n));
  fa.objective = sol.objective;
  fa.iterations = sol.iterations;
  fa.max_dual_infeasibility = sol.max_dual_infeasibility;
  return fa;
}

// Whole-frame counts per (source, channel) by largest remainder: floors
// first, then the leftover frames to the largest fractional parts (ties to
// the lower source id). Each channel is then handed out in contiguous blocks
// in source order.
inline std::vector<AllocationMatrix> round_allocation(const FractionalAllocation& frac) {
  const std::size_t t_frames = frac.period_frames;
  const auto n = static_cast<std::size_t>(frac.shares.rows());
  const auto channels = static_cast<std::size_t>(frac.shares.cols());
  if (n == 0) {
    throw std::invalid_argument("round_allocation: no sources");
  }
  std::vector<AllocationMatrix> frames(t_frames);
  for (std::size_t f = 0; f < t_frames; ++f) {
    frames[f].cell_id = frac.cell_id;
    frames[f].frame_index = f;
    frames[f].assign.resize(channels);
  }
  std::vector<std::size_t> count(n);
  std::vector<std::size_t> order(n);
  std::vector<double> remainder(n);
  for (std::size_t c = 0; c < channels; ++c) {
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double share = std::clamp(frac.shares(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)),
                                      0.0, static_cast<double>(t_frames));
      const double whole = std::floor(share);
      count[i] = static_cast<std::size_t>(whole);
      remainder[i] = share - whole;
      assigned += count[i];
    }
    // Numerical overshoot cannot exceed T by a whole frame; trim defensively
    // from the highest ids if it somehow does.
    for (std::size_t i = n; assigned > t_frames && i-- > 0;) {
      const std::size_t cut = std::min(count[i], assigned - t_frames);
      count[i] -= cut;
      assigned -= cut;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < t_frames; k = (k + 1) % n) {
      ++count[order[k]];
      ++assigned;
    }
    std::size_t f = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < count[i]; ++r) {
        frames[f++].assign[c] = frac.members[i];
      }
    }
  }
  return frames;
}

// Realized log-distortion of every member of the cell at the given rates
// (indexed by global source id); results written by global id into `out`.
inline void realized_deltas(const CellGroups& cg, std::span<const double> rates_by_id,
                            std::span<double> out) {
  std::array<double, kMaxGroupSize> rate_buf{};
  std::array<double, kMaxGroupSize> delta_buf{};
  for (const GroupModel& model : cg.models) {
    const std::size_t n = model.size();
    for (std::size_t m = 0; m < n; ++m) {
      rate_buf[m] = rates_by_id[model.members()[m]];
    }
    minmax_split(model, std::span<const double>(rate_buf.data(), n),
                 std::span<double>(delta_buf.data(), n));
    for (std::size_t m = 0; m < n; ++m) {
      out[model.members()[m]] = delta_buf[m];
    }
  }
}

// Exponential averaging with window N_T:
//   x <- x_new / N_T + (1 - 1/N_T) x
// applied to the rate and (linear) distortion of every source listed in ids.
inline void update_averages(RunningAverages& avg, std::span<const std::size_t> ids,
                            std::span<const double> rates_by_id,
                            std::span<const double> distortion_by_id) {
  const double w = 1.0 / static_cast<double>(avg.window);
  for (std::size_t id : ids) {
    avg.rate[id] = w * rates_by_id[id] + (1.0 - w) * avg.rate[id];
    avg.distortion[id] = w * distortion_by_id[id] + (1.0 - w) * avg.distortion[id];
  }
}

// Convenience form: realized distortions are derived from the rates through
// each group's min-max split before averaging.
inline RunningAverages update_averages(const RunningAverages& avg, const CellGroups& cg,
                                       std::span<const double> rates_by_id) {
  std::vector<double> delta(avg.rate.size(), 0.0);
  realized_deltas(cg, rates_by_id, delta);
  std::vector<double> dist(avg.rate.size(), 0.0);
  for (std::size_t id : cg.members) {
    dist[id] = distortion_from_delta(delta[id]);
  }
  RunningAverages next = avg;
  update_averages(next, cg.members, rates_by_id, dist);
  return next;
}

} // namespace corrsched
