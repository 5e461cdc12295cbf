#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "corrsched/error.hpp"
#include "corrsched/geometry.hpp"
#include "corrsched/grouping.hpp"
#include "corrsched/icon.hpp"
#include "corrsched/random.hpp"
#include "corrsched/rd_region.hpp"
#include "corrsched/scheduling.hpp"
#include "corrsched/source_stats.hpp"

namespace corrsched {

enum class InterCellMode { Reuse1, StaticIcon, AdaptiveIcon };
enum class GroupingMethod { Distance, Distortion };
enum class SchedulerKind { Pf, Dpf, Opt };

struct TopologyParams {
  std::size_t num_cells = 19;
  std::size_t users_per_cell = 18;
  double site_distance_m = 130.0;
  bool operator==(const TopologyParams&) const = default;
};

struct RadioParams {
  double bandwidth_hz = 10.0; // total, split evenly over the channels
  std::size_t channels = 63;
  double noise_psd_w_per_hz = 6.3e-9;
  double p_max_w = 0.25 / 63.0;      // per user per channel
  double p_min_w = 0.25 / 63.0 * 1e-6;
  double subband_hz() const { return bandwidth_hz / static_cast<double>(channels); }
  bool operator==(const RadioParams&) const = default;
};

struct IconParams {
  InterCellMode mode = InterCellMode::AdaptiveIcon;
  std::size_t c_hir = 21;
  double p_high_w = 2e-8;
  double p_low_w = 2e-9;
  double alpha = 0.2;
  double beta = 0.2;
  std::size_t adaptation_period = 50;
  bool operator==(const IconParams&) const = default;
};

struct GroupingParams {
  GroupingMethod method = GroupingMethod::Distance;
  std::size_t group_size = 2;
  std::size_t trials = 20;
  std::size_t n_outer = 0; // 0: a third of the cell population, rounded up
  std::size_t warmup_frames = 200;
  bool operator==(const GroupingParams&) const = default;
};

struct SchedulerParams {
  SchedulerKind kind = SchedulerKind::Opt;
  double alpha = 3.5;
  std::size_t window = 100;
  std::size_t opt_period = 10;
  bool operator==(const SchedulerParams&) const = default;
};

struct SimulationParams {
  std::size_t frames = 2000;
  std::uint64_t seed = 1;
  std::size_t drops = 10;
  bool operator==(const SimulationParams&) const = default;
};

struct ExperimentConfig {
  TopologyParams topology;
  SourceModel source_model;
  RadioParams radio;
  IconParams icon;
  GroupingParams grouping;
  SchedulerParams scheduler;
  SimulationParams simulation;

  bool operator==(const ExperimentConfig& o) const {
    return topology == o.topology && source_model.variance == o.source_model.variance &&
           source_model.theta == o.source_model.theta && source_model.mean == o.source_model.mean &&
           radio == o.radio && icon == o.icon && grouping == o.grouping && scheduler == o.scheduler &&
           simulation == o.simulation;
  }

  void validate() const {
    auto require = [](bool ok, const std::string& key, const std::string& what) {
      if (!ok) {
        throw ConfigError(key + ": " + what);
      }
    };
    require(topology.num_cells == 7 || topology.num_cells == 19, "topology.num_cells",
            "must be 7 or 19");
    require(topology.users_per_cell >= 1, "topology.users_per_cell", "must be at least 1");
    require(topology.site_distance_m > 0.0 && std::isfinite(topology.site_distance_m),
            "topology.site_distance_m", "must be positive");
    require(source_model.variance > 0.0 && std::isfinite(source_model.variance),
            "source_model.variance", "must be positive");
    require(source_model.theta > 0.0 && std::isfinite(source_model.theta), "source_model.theta",
            "must be positive");
    require(std::isfinite(source_model.mean), "source_model.mean", "must be finite");
    require(radio.bandwidth_hz > 0.0 && std::isfinite(radio.bandwidth_hz), "radio.bandwidth_hz",
            "must be positive");
    require(radio.channels >= 1, "radio.channels", "must be at least 1");
    require(radio.noise_psd_w_per_hz > 0.0 && std::isfinite(radio.noise_psd_w_per_hz),
            "radio.noise_psd_w_per_hz", "must be positive");
    require(radio.p_max_w > 0.0 && std::isfinite(radio.p_max_w), "radio.p_max_w", "must be positive");
    require(radio.p_min_w >= 0.0 && radio.p_min_w <= radio.p_max_w, "radio.p_min_w",
            "must be in [0, radio.p_max_w]");
    require(icon.c_hir <= radio.channels, "icon.c_hir", "must not exceed radio.channels");
    require(icon.p_high_w > 0.0 && std::isfinite(icon.p_high_w), "icon.p_high_w", "must be positive");
    require(icon.p_low_w >= 0.0 && icon.p_low_w <= icon.p_high_w, "icon.p_low_w",
            "must be in [0, icon.p_high_w]");
    require(icon.alpha >= 0.0 && icon.alpha <= 1.0, "icon.alpha", "must be in [0, 1]");
    require(icon.beta >= 0.0 && icon.beta <= 1.0, "icon.beta", "must be in [0, 1]");
    require(icon.adaptation_period >= 1, "icon.adaptation_period", "must be at least 1");
    require(grouping.group_size >= 1 && grouping.group_size <= kMaxGroupSize, "grouping.group_size",
            "must be in 1.." + std::to_string(kMaxGroupSize));
    require(grouping.trials >= 1, "grouping.trials", "must be at least 1");
    require(grouping.n_outer <= topology.users_per_cell, "grouping.n_outer",
            "must not exceed topology.users_per_cell");
    require(grouping.method != GroupingMethod::Distortion || grouping.warmup_frames >= 1,
            "grouping.warmup_frames", "must be at least 1 for distortion grouping");
    require(scheduler.alpha >= 0.0 && std::isfinite(scheduler.alpha), "scheduler.alpha",
            "must be non-negative");
    require(scheduler.window >= 1, "scheduler.window", "must be at least 1");
    require(scheduler.opt_period >= 1, "scheduler.opt_period", "must be at least 1");
    require(simulation.drops >= 1, "simulation.drops", "must be at least 1");
  }
};

// Network-wide aggregates of one frame.
struct FrameSample {
  double mean_rate = 0.0;
  double mean_distortion_db = 0.0;
  double max_distortion_db = 0.0;
};

// Per-source outcome of a drop: time-averaged realized rate and the group's
// min-max distortion at those rates.
struct SourceResult {
  std::size_t source = 0;
  std::size_t cell = 0;
  std::size_t group = 0; // index within the cell's grouping
  double mean_rate = 0.0;
  double distortion_db = 0.0;
};

struct DropResult {
  std::size_t drop = 0;
  std::uint64_t topology_seed = 0;
  std::vector<SourceResult> sources;
  std::vector<Grouping> groupings; // by cell
  std::vector<FrameSample> series;
  std::vector<std::vector<double>> utilities; // [adaptation round][cell]
  double iot_db = 0.0;
};

inline bool operator==(const FrameSample& a, const FrameSample& b) {
  return a.mean_rate == b.mean_rate && a.mean_distortion_db == b.mean_distortion_db &&
         a.max_distortion_db == b.max_distortion_db;
}
inline bool operator==(const SourceResult& a, const SourceResult& b) {
  return a.source == b.source && a.cell == b.cell && a.group == b.group &&
         a.mean_rate == b.mean_rate && a.distortion_db == b.distortion_db;
}
inline bool operator==(const Grouping& a, const Grouping& b) {
  return a.cell_id == b.cell_id && a.group_size == b.group_size && a.groups == b.groups &&
         a.score == b.score && a.picks == b.picks;
}
inline bool operator==(const DropResult& a, const DropResult& b) {
  return a.drop == b.drop && a.topology_seed == b.topology_seed && a.sources == b.sources &&
         a.groupings == b.groupings && a.series == b.series && a.utilities == b.utilities &&
         a.iot_db == b.iot_db;
}

struct Metrics {
  std::uint64_t seed = 0;
  std::size_t frames = 0;
  std::vector<DropResult> drops;

  // IPP compliance over all non-floored scheduled transmissions.
  std::size_t compliance_checks = 0;
  std::size_t compliance_violations = 0;
  double max_compliance_excess = 0.0; // relative, (interference - cap) / cap
  std::size_t floored_transmissions = 0;
  std::size_t floored_frames = 0;

  // Smallest R-D region slack of any distortion the run produced.
  double min_region_slack = std::numeric_limits<double>::infinity();

  std::size_t lp_solves = 0;
  double lp_max_dual_infeasibility = 0.0;
  std::size_t degenerate_splits = 0;

  std::vector<double> distortion_samples() const {
    std::vector<double> out;
    for (const auto& d : drops) {
      for (const auto& s : d.sources) {
        out.push_back(s.distortion_db);
      }
    }
    return out;
  }

  std::vector<double> rate_samples() const {
    std::vector<double> out;
    for (const auto& d : drops) {
      for (const auto& s : d.sources) {
        out.push_back(s.mean_rate);
      }
    }
    return out;
  }

  bool operator==(const Metrics&) const = default;
};

// Nearest-rank percentile: the ceil(p n)-th smallest sample (rank at least 1).
inline double percentile(std::span<const double> samples, double p) {
  if (samples.empty()) {
    throw std::invalid_argument("percentile: no samples");
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("percentile: p must be in [0, 1]");
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // Guard against p * n landing a hair above an integer.
  const double rank = std::ceil(p * n - 1e-9 * n);
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, n)) - 1;
  return sorted[idx];
}

namespace detail {

inline std::uint64_t drop_seed(std::uint64_t seed, std::size_t drop) { return derive_seed(seed, drop); }

// Stream tags under a drop seed.
inline constexpr std::uint64_t kTopologyStream = 1;
inline constexpr std::uint64_t kGroupingStream = 2;

// Smallest slack of `delta` against the group's region at `rates`.
inline double region_slack(const GroupModel& model, std::span<const double> rates,
                           std::span<const double> delta) {
  double worst = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask <= model.full_mask(); ++mask) {
    double sum = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
      if (mask & (1u << i)) {
        sum += delta[i];
      }
    }
    worst = std::min(worst, sum - model.bound(mask, rates));
  }
  return worst;
}

// One drop: fixed topology and grouping, evolving IPPs, averages and
// interference. The warm-up for distortion grouping runs a separate
// instance with singleton groups and PF.
class DropSimulation {
public:
  DropSimulation(const ExperimentConfig& cfg, const Topology& topo,
                 const std::vector<CovarianceMatrix>& covs, const std::vector<Grouping>& groupings,
                 SchedulerKind scheduler, Metrics& metrics)
      : cfg_(cfg), topo_(topo), scheduler_(scheduler), metrics_(metrics) {
    const std::size_t nc = topo.num_cells();
    const std::size_t ns = topo.num_sources();
    const std::size_t channels = cfg.radio.channels;
    for (std::size_t k = 0; k < nc; ++k) {
      cell_groups_.push_back(build_cell_groups(topo.cells[k], groupings[k], covs[k]));
      metrics_.degenerate_splits += cell_groups_.back().degenerate_splits;
    }
    ipps_.resize(nc);
    if (cfg.icon.mode != InterCellMode::Reuse1) {
      for (std::size_t k = 0; k < nc; ++k) {
        for (std::size_t u : topo.cells[k].neighbors) {
          Ipp ipp = initial_ipp(topo.cells[u].type, channels, cfg.icon.c_hir, cfg.icon.p_high_w,
                                cfg.icon.p_low_w);
          ipp.owner = u;
          ipp.target = k;
          ipps_[k].push_back(ipp);
        }
      }
    }
    powers_.channels = channels;
    powers_.values.assign(ns * channels, 0.0);
    floored_.assign(ns * channels, 0);
    refresh_powers();
    averages_ = RunningAverages::initial(ns, cfg.source_model.variance, cfg.scheduler.window);
    prev_interference_.assign(nc, std::vector<double>(channels, 0.0));
    rate_sum_.assign(ns, 0.0);
    period_rate_sum_.assign(ns, 0.0);
    frame_rates_.assign(ns, 0.0);
    frame_delta_.assign(ns, 0.0);
    frame_dist_.assign(ns, 0.0);
    plans_.resize(nc);
  }

  void run(std::size_t frames, std::size_t drop) {
    for (std::size_t f = 0; f < frames; ++f) {
      try {
        step(f);
      } catch (const std::exception& e) {
        throw SimulationError("drop " + std::to_string(drop) + ", frame " + std::to_string(f) +
                              ": " + e.what());
      }
    }
  }

  std::size_t frames_run() const { return frames_run_; }
  const std::vector<FrameSample>& series() const { return series_; }
  const std::vector<std::vector<double>>& utilities() const { return utilities_; }

  std::vector<double> mean_rates() const {
    std::vector<double> out(rate_sum_.size(), 0.0);
    if (frames_run_ > 0) {
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = rate_sum_[i] / static_cast<double>(frames_run_);
      }
    }
    return out;
  }

  double iot_db() const {
    return iot_count_ == 0 ? -std::numeric_limits<double>::infinity()
                           : 10.0 * std::log10(iot_sum_ / static_cast<double>(iot_count_));
  }

  // Min-max log-distortion of every source at the given rates, checking
  // each group's region on the way.
  std::vector<double> deltas_at(std::span<const double> rates) {
    std::vector<double> delta(rates.size(), 0.0);
    for (const CellGroups& cg : cell_groups_) {
      realized_deltas(cg, rates, delta);
      track_slack(cg, rates, delta);
    }
    return delta;
  }

private:
  void refresh_powers() {
    const std::size_t channels = cfg_.radio.channels;
    for (const Source& src : topo_.sources) {
      const auto& imposed = ipps_[src.cell_id];
      for (std::size_t c = 0; c < channels; ++c) {
        const double limit = power_limit(src, c, imposed);
        powers_(src.id, c) = transmit_power(limit, cfg_.radio.p_min_w, cfg_.radio.p_max_w);
        floored_[src.id * channels + c] = limit < cfg_.radio.p_min_w ? 1 : 0;
      }
    }
  }

  RateMatrix rate_matrix(const Cell& cell) const {
    const std::size_t channels = cfg_.radio.channels;
    const double bw = cfg_.radio.subband_hz();
    const double n0 = cfg_.radio.noise_psd_w_per_hz;
    RateMatrix r(static_cast<Eigen::Index>(cell.sources.size()), static_cast<Eigen::Index>(channels));
    for (std::size_t i = 0; i < cell.sources.size(); ++i) {
      const Source& src = topo_.sources[cell.sources[i]];
      for (std::size_t c = 0; c < channels; ++c) {
        r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = achievable_rate(
            powers_(src.id, c), src.gains[cell.id], n0, bw, prev_interference_[cell.id][c]);
      }
    }
    return r;
  }

  void adapt(std::size_t period_frames) {
    std::vector<double> period_rates(period_rate_sum_.size());
    for (std::size_t i = 0; i < period_rates.size(); ++i) {
      period_rates[i] = period_rate_sum_[i] / static_cast<double>(period_frames);
    }
    const std::vector<double> delta = deltas_at(period_rates);
    std::vector<double> utility(topo_.num_cells(), 0.0);
    for (const Cell& cell : topo_.cells) {
      for (std::size_t id : cell.sources) {
        utility[cell.id] = std::max(utility[cell.id], distortion_from_delta(delta[id]));
      }
    }
    utilities_.push_back(utility);
    if (cfg_.icon.mode == InterCellMode::AdaptiveIcon) {
      for (auto& imposed : ipps_) {
        for (Ipp& ipp : imposed) {
          ipp = adapt_ipp(ipp, utility[ipp.owner], utility[ipp.target], cfg_.icon.alpha,
                          cfg_.icon.beta);
        }
      }
      refresh_powers();
    }
    std::fill(period_rate_sum_.begin(), period_rate_sum_.end(), 0.0);
  }

  std::vector<AllocationMatrix> schedule(std::size_t frame) {
    std::vector<AllocationMatrix> allocs(topo_.num_cells());
    for (const Cell& cell : topo_.cells) {
      const CellGroups& cg = cell_groups_[cell.id];
      switch (scheduler_) {
      case SchedulerKind::Pf:
        allocs[cell.id] = pf_assign(cell.id, cg.members, rate_matrix(cell), averages_,
                                    cfg_.scheduler.alpha);
        break;
      case SchedulerKind::Dpf:
        allocs[cell.id] = dpf_assign(cg, rate_matrix(cell), averages_, cfg_.scheduler.alpha);
        break;
      case SchedulerKind::Opt: {
        const std::size_t period = cfg_.scheduler.opt_period;
        if (frame % period == 0) {
          const FractionalAllocation frac = opt_assign(cg, rate_matrix(cell), averages_, period);
          ++metrics_.lp_solves;
          metrics_.lp_max_dual_infeasibility =
              std::max(metrics_.lp_max_dual_infeasibility, frac.max_dual_infeasibility);
          plans_[cell.id] = round_allocation(frac);
        }
        allocs[cell.id] = plans_[cell.id][frame % period];
        break;
      }
      }
      allocs[cell.id].frame_index = frame;
    }
    return allocs;
  }

  // Every channel of every cell carries exactly one of the cell's sources.
  void check_exclusive(const std::vector<AllocationMatrix>& allocs) const {
    for (const AllocationMatrix& alloc : allocs) {
      if (alloc.assign.size() != cfg_.radio.channels) {
        throw std::logic_error("cell " + std::to_string(alloc.cell_id) + ": allocation covers " +
                               std::to_string(alloc.assign.size()) + " channels");
      }
      for (std::size_t j : alloc.assign) {
        if (j >= topo_.num_sources() || topo_.sources[j].cell_id != alloc.cell_id) {
          throw std::logic_error("cell " + std::to_string(alloc.cell_id) + ": channel assigned to source " +
                                 std::to_string(j) + " of another cell");
        }
      }
    }
  }

  void check_compliance(const std::vector<AllocationMatrix>& allocs) {
    const std::size_t channels = cfg_.radio.channels;
    bool any_floored = false;
    for (const AllocationMatrix& alloc : allocs) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t j = alloc.assign[c];
        if (floored_[j * channels + c]) {
          any_floored = true;
          ++metrics_.floored_transmissions;
          continue;
        }
        const Source& src = topo_.sources[j];
        for (const Ipp& ipp : ipps_[alloc.cell_id]) {
          const double cap = ipp.cap(c);
          const double received = powers_(j, c) * src.gains[ipp.owner];
          ++metrics_.compliance_checks;
          const double excess = cap > 0.0 ? (received - cap) / cap
                                          : (received > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
          metrics_.max_compliance_excess = std::max(metrics_.max_compliance_excess, excess);
          if (excess > 1e-12) {
            ++metrics_.compliance_violations;
          }
        }
      }
    }
    if (any_floored) {
      ++metrics_.floored_frames;
    }
  }

  void track_slack(const CellGroups& cg, std::span<const double> rates, std::span<const double> delta) {
    std::array<double, kMaxGroupSize> r{};
    std::array<double, kMaxGroupSize> d{};
    for (const GroupModel& model : cg.models) {
      for (std::size_t m = 0; m < model.size(); ++m) {
        r[m] = rates[model.members()[m]];
        d[m] = delta[model.members()[m]];
      }
      const double slack = region_slack(model, std::span<const double>(r.data(), model.size()),
                                        std::span<const double>(d.data(), model.size()));
      metrics_.min_region_slack = std::min(metrics_.min_region_slack, slack);
    }
  }

  void step(std::size_t frame) {
    const std::size_t period = cfg_.icon.adaptation_period;
    if (frame > 0 && frame % period == 0) {
      adapt(period);
    }
    const std::vector<AllocationMatrix> allocs = schedule(frame);
    check_exclusive(allocs);
    check_compliance(allocs);

    const auto interference = measure_interference(topo_, allocs, powers_);
    const std::size_t channels = cfg_.radio.channels;
    const double bw = cfg_.radio.subband_hz();
    const double n0 = cfg_.radio.noise_psd_w_per_hz;
    std::fill(frame_rates_.begin(), frame_rates_.end(), 0.0);
    for (const AllocationMatrix& alloc : allocs) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t j = alloc.assign[c];
        frame_rates_[j] += achievable_rate(powers_(j, c), topo_.sources[j].gains[alloc.cell_id], n0,
                                           bw, interference[alloc.cell_id][c]);
        iot_sum_ += interference[alloc.cell_id][c] / (n0 * bw);
        ++iot_count_;
      }
    }

    FrameSample sample;
    sample.max_distortion_db = -std::numeric_limits<double>::infinity();
    for (const CellGroups& cg : cell_groups_) {
      realized_deltas(cg, frame_rates_, frame_delta_);
      track_slack(cg, frame_rates_, frame_delta_);
      for (std::size_t id : cg.members) {
        frame_dist_[id] = distortion_from_delta(frame_delta_[id]);
        const double db = db_from_delta(frame_delta_[id]);
        sample.mean_distortion_db += db;
        sample.max_distortion_db = std::max(sample.max_distortion_db, db);
        sample.mean_rate += frame_rates_[id];
      }
      update_averages(averages_, cg.members, frame_rates_, frame_dist_);
    }
    const auto ns = static_cast<double>(topo_.num_sources());
    sample.mean_distortion_db /= ns;
    sample.mean_rate /= ns;
    series_.push_back(sample);

    for (std::size_t i = 0; i < frame_rates_.size(); ++i) {
      rate_sum_[i] += frame_rates_[i];
      period_rate_sum_[i] += frame_rates_[i];
    }
    prev_interference_ = interference;
    ++frames_run_;
  }

  const ExperimentConfig& cfg_;
  const Topology& topo_;
  SchedulerKind scheduler_;
  Metrics& metrics_;
  std::vector<CellGroups> cell_groups_;
  std::vector<std::vector<Ipp>> ipps_; // by target cell
  PowerTable powers_;
  std::vector<char> floored_;
  RunningAverages averages_;
  std::vector<std::vector<double>> prev_interference_;
  std::vector<std::vector<AllocationMatrix>> plans_;
  std::vector<double> rate_sum_;
  std::vector<double> period_rate_sum_;
  std::vector<double> frame_rates_;
  std::vector<double> frame_delta_;
  std::vector<double> frame_dist_;
  std::vector<FrameSample> series_;
  std::vector<std::vector<double>> utilities_;
  double iot_sum_ = 0.0;
  std::size_t iot_count_ = 0;
  std::size_t frames_run_ = 0;
};

inline std::vector<Grouping> compute_groupings(const ExperimentConfig& cfg, const Topology& topo,
                                               const std::vector<CovarianceMatrix>& covs,
                                               std::uint64_t seed, std::size_t drop) {
  const std::size_t nc = topo.num_cells();
  const GroupingParams& gp = cfg.grouping;
  const std::uint64_t group_seed = derive_seed(seed, kGroupingStream);
  auto outer = [&](const Cell& cell) {
    return gp.n_outer == 0 ? default_outer_count(cell.sources.size()) : gp.n_outer;
  };
  std::vector<Grouping> groupings(nc);
  if (gp.group_size == 1) {
    for (std::size_t k = 0; k < nc; ++k) {
      groupings[k] = singleton_grouping(topo.cells[k]);
    }
    return groupings;
  }
  if (gp.method == GroupingMethod::Distance) {
    for (std::size_t k = 0; k < nc; ++k) {
      groupings[k] = distance_op(topo, k, gp.group_size, gp.trials, outer(topo.cells[k]),
                                 derive_seed(group_seed, k));
    }
    return groupings;
  }
  // Baseline rates from an independent-decoding PF warm-up.
  std::vector<Grouping> singles(nc);
  for (std::size_t k = 0; k < nc; ++k) {
    singles[k] = singleton_grouping(topo.cells[k]);
  }
  Metrics scratch;
  DropSimulation warmup(cfg, topo, covs, singles, SchedulerKind::Pf, scratch);
  warmup.run(gp.warmup_frames, drop);
  const std::vector<double> baseline = warmup.mean_rates();
  for (std::size_t k = 0; k < nc; ++k) {
    groupings[k] = distortion_op(topo, k, baseline, covs[k], gp.group_size, gp.trials,
                                 outer(topo.cells[k]), derive_seed(group_seed, k));
  }
  return groupings;
}

} // namespace detail

// Topology of drop `drop`; depends only on the seed and the topology and
// source-count parameters.
inline Topology drop_topology(const ExperimentConfig& cfg, std::size_t drop) {
  const std::uint64_t seed =
      derive_seed(detail::drop_seed(cfg.simulation.seed, drop), detail::kTopologyStream);
  return build_topology(cfg.topology.num_cells, cfg.topology.site_distance_m,
                        cfg.topology.users_per_cell, seed);
}

inline Metrics run(const ExperimentConfig& cfg) {
  cfg.validate();
  Metrics metrics;
  metrics.seed = cfg.simulation.seed;
  metrics.frames = cfg.simulation.frames;
  if (cfg.simulation.frames == 0) {
    return metrics;
  }
  for (std::size_t drop = 0; drop < cfg.simulation.drops; ++drop) {
    const std::uint64_t dseed = detail::drop_seed(cfg.simulation.seed, drop);
    const Topology topo = drop_topology(cfg, drop);
    std::vector<CovarianceMatrix> covs;
    for (const Cell& cell : topo.cells) {
      covs.push_back(covariance(topo, cell.sources, cfg.source_model));
    }
    const std::vector<Grouping> groupings =
        detail::compute_groupings(cfg, topo, covs, dseed, drop);

    detail::DropSimulation sim(cfg, topo, covs, groupings, cfg.scheduler.kind, metrics);
    sim.run(cfg.simulation.frames, drop);

    DropResult result;
    result.drop = drop;
    result.topology_seed = derive_seed(dseed, detail::kTopologyStream);
    result.groupings = groupings;
    result.series = sim.series();
    result.utilities = sim.utilities();
    result.iot_db = sim.iot_db();
    const std::vector<double> rates = sim.mean_rates();
    const std::vector<double> delta = sim.deltas_at(rates);
    for (const Cell& cell : topo.cells) {
      const Grouping& g = groupings[cell.id];
      for (std::size_t gi = 0; gi < g.groups.size(); ++gi) {
        for (std::size_t id : g.groups[gi]) {
          result.sources.push_back({id, cell.id, gi, rates[id], db_from_delta(delta[id])});
        }
      }
    }
    std::sort(result.sources.begin(), result.sources.end(),
              [](const SourceResult& a, const SourceResult& b) { return a.source < b.source; });
    metrics.drops.push_back(std::move(result));
  }
  return metrics;
}

struct ComparisonRow {
  std::string label;
  std::uint64_t seed = 0;
  double p95_distortion_db = 0.0;
  double p5_rate = 0.0;
  double mean_rate = 0.0;
  double delta_p95_distortion_db = 0.0;
  double delta_p5_rate_db = 0.0;
  double delta_mean_rate_db = 0.0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  std::vector<std::string> warnings;
};

struct LabeledMetrics {
  std::string label;
  const Metrics* metrics = nullptr;
};

// Summary per run and differences against the first run. Rate deltas are
// ratios expressed in dB.
inline Comparison compare(std::span<const LabeledMetrics> runs) {
  Comparison out;
  for (const LabeledMetrics& lm : runs) {
    ComparisonRow row;
    row.label = lm.label;
    row.seed = lm.metrics->seed;
    const auto dist = lm.metrics->distortion_samples();
    const auto rates = lm.metrics->rate_samples();
    if (dist.empty()) {
      out.warnings.push_back(lm.label + ": no samples (zero frames)");
      row.p95_distortion_db = row.p5_rate = row.mean_rate = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.p95_distortion_db = percentile(dist, 0.95);
      row.p5_rate = percentile(rates, 0.05);
      row.mean_rate = std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
    }
    out.rows.push_back(row);
  }
  if (out.rows.empty()) {
    return out;
  }
  const ComparisonRow& ref = out.rows.front();
  for (ComparisonRow& row : out.rows) {
    if (row.seed != ref.seed) {
      out.warnings.push_back(row.label + ": seed " + std::to_string(row.seed) + " differs from " +
                             ref.label + " seed " + std::to_string(ref.seed) +
                             "; comparison is not paired");
    }
    row.delta_p95_distortion_db = row.p95_distortion_db - ref.p95_distortion_db;
    row.delta_p5_rate_db = 10.0 * std::log10(row.p5_rate / ref.p5_rate);
    row.delta_mean_rate_db = 10.0 * std::log10(row.mean_rate / ref.mean_rate);
  }
  return out;
}

} // namespace corrsched
