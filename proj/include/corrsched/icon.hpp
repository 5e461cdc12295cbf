#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "corrsched/error.hpp"
#include "corrsched/geometry.hpp"

namespace corrsched {

// Interference power profile: the per-subband cap on received interference
// that `owner` (cell u) imposes on the sources of `target` (cell k).
//
// Inside the high-interference window [f_start, f_start + hir_width()),
// wrapped modulo the number of channels, the cap is p_high; elsewhere it is
// p_low. The window width is tracked as a real number so that small
// adaptation steps accumulate instead of rounding away.
struct Ipp {
  std::size_t owner = 0;
  std::size_t target = 0;
  std::size_t channels = 0;
  std::size_t f_start = 0;
  double c_hir = 0.0;
  double p_high = 0.0;
  double p_low = 0.0;
  // Adaptation floors: the initial width and low cap for the cell type.
  double c_hir_floor = 0.0;
  double p_low_floor = 0.0;

  std::size_t hir_width() const {
    const double w = std::clamp(std::round(c_hir), 0.0, static_cast<double>(channels));
    return static_cast<std::size_t>(w);
  }

  bool in_hir(std::size_t c) const {
    const std::size_t offset = (c + channels - f_start % channels) % channels;
    return offset < hir_width();
  }

  double cap(std::size_t c) const { return in_hir(c) ? p_high : p_low; }

  std::vector<double> caps() const {
    std::vector<double> out(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      out[c] = cap(c);
    }
    return out;
  }
};

// Starting profile for a cell of the given type. Type t places its window at
// (t - 1) * floor(C_bw / 3).
inline Ipp initial_ipp(int cell_type, std::size_t c_bw, std::size_t c_hir, double p_high,
                       double p_low) {
  if (c_bw == 0) {
    throw ConfigError("radio.channels: must be positive");
  }
  if (c_hir > c_bw) {
    throw ConfigError("icon.c_hir: " + std::to_string(c_hir) + " exceeds the number of channels " +
                      std::to_string(c_bw));
  }
  if (cell_type < 1 || cell_type > 3) {
    throw ConfigError("cell type must be 1, 2 or 3");
  }
  if (!(p_low <= p_high)) {
    throw ConfigError("icon.p_low_w: must not exceed icon.p_high_w");
  }
  Ipp ipp;
  ipp.channels = c_bw;
  ipp.f_start = static_cast<std::size_t>(cell_type - 1) * (c_bw / 3);
  ipp.c_hir = static_cast<double>(c_hir);
  ipp.c_hir_floor = ipp.c_hir;
  ipp.p_high = p_high;
  ipp.p_low = p_low;
  ipp.p_low_floor = p_low;
  return ipp;
}

// One adaptation step of the profile cell u (owner) imposes on cell k
// (target). Utilities are maximum distortions, so lower is better:
//
//   c_hir <- max(c_hir - alpha * diff * C_bw, floor),   clamped to C_bw
//   p_low <- max(p_low - beta  * diff * P_h,  floor),   clamped to P_h
//
// with diff = (U_u - U_k) / ((U_u + U_k) / 2). A target worse off than the
// owner (U_k > U_u) gets a looser profile; a target better off is pulled
// back towards the floors.
inline Ipp adapt_ipp(const Ipp& ipp, double owner_utility, double target_utility, double alpha,
                     double beta) {
  const double mean = 0.5 * (owner_utility + target_utility);
  if (mean == 0.0 || !std::isfinite(mean)) {
    return ipp;
  }
  const double diff = (owner_utility - target_utility) / mean;
  Ipp next = ipp;
  const auto c_bw = static_cast<double>(ipp.channels);
  next.c_hir = std::min(std::max(ipp.c_hir - alpha * diff * c_bw, ipp.c_hir_floor), c_bw);
  next.p_low = std::min(std::max(ipp.p_low - beta * diff * ipp.p_high, ipp.p_low_floor), ipp.p_high);
  return next;
}

// Largest power source `src` may use on channel c without exceeding any
// profile imposed on its cell: min over profiles of I_u(c) / g_{i,u}.
// `imposed` must hold only profiles whose target is the source's cell.
inline double power_limit(const Source& src, std::size_t c, std::span<const Ipp> imposed) {
  double limit = std::numeric_limits<double>::infinity();
  for (const Ipp& ipp : imposed) {
    limit = std::min(limit, ipp.cap(c) / src.gains[ipp.owner]);
  }
  return limit;
}

inline double transmit_power(double p_max, double p_min_cfg, double p_max_cfg) {
  return std::max(std::min(p_max, p_max_cfg), p_min_cfg);
}

// Shannon rate of one subband over one frame (frame length 1 s), in bits.
inline double achievable_rate(double p_star, double gain_own, double noise_psd,
                              double bandwidth, double interference) {
  if (p_star <= 0.0) {
    return 0.0;
  }
  return bandwidth * std::log2(1.0 + p_star * gain_own / (noise_psd * bandwidth + interference));
}

// Channel assignment of one cell in one frame: assign[c] is the source id
// transmitting on channel c.
struct AllocationMatrix {
  std::size_t cell_id = 0;
  std::size_t frame_index = 0;
  std::vector<std::size_t> assign;
};

// Row-major per-source per-channel table, indexed by global source id.
struct PowerTable {
  std::size_t channels = 0;
  std::vector<double> values;

  double operator()(std::size_t source, std::size_t c) const { return values[source * channels + c]; }
  double& operator()(std::size_t source, std::size_t c) { return values[source * channels + c]; }
};

// Received interference at every base station on every channel:
// I[k][c] = sum over cells u != k of p_{j,c} g_{j,k} with j the source cell u
// scheduled on c. `allocations` is indexed by cell id.
inline std::vector<std::vector<double>> measure_interference(
    const Topology& topo, std::span<const AllocationMatrix> allocations, const PowerTable& powers) {
  const std::size_t channels = powers.channels;
  std::vector<std::vector<double>> out(topo.num_cells(), std::vector<double>(channels, 0.0));
  for (const AllocationMatrix& alloc : allocations) {
    for (std::size_t c = 0; c < alloc.assign.size(); ++c) {
      const std::size_t j = alloc.assign[c];
      const Source& src = topo.sources[j];
      const double p = powers(j, c);
      for (std::size_t k = 0; k < topo.num_cells(); ++k) {
        if (k != src.cell_id) {
          out[k][c] += p * src.gains[k];
        }
      }
    }
  }
  return out;
}

} // namespace corrsched
