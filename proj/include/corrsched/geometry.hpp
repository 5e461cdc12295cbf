#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "corrsched/error.hpp"
#include "corrsched/random.hpp"

namespace corrsched {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend bool operator==(Point a, Point b) = default;
};

inline double norm(Point p) { return std::hypot(p.x, p.y); }

struct Source {
  std::size_t id = 0;
  std::size_t cell_id = 0;
  Point position;
  // Linear power gain towards the base station of every cell, indexed by
  // cell id. Own cell included.
  std::vector<double> gains;
};

struct Cell {
  std::size_t id = 0;
  Point center;
  int type = 1; // reuse-3 colour, 1..3
  std::vector<std::size_t> neighbors;
  std::vector<std::size_t> sources; // ascending global source ids
};

struct Topology {
  std::vector<Cell> cells;
  std::vector<Source> sources;
  double site_distance = 0.0;
  // Translations of the whole cluster used for wrap-around. Empty means
  // plain Euclidean geometry.
  std::vector<Point> wrap_vectors;

  std::size_t num_cells() const { return cells.size(); }
  std::size_t num_sources() const { return sources.size(); }
};

// Pathloss 30*log10(R) dB with R in metres, i.e. gain = R^-3. Distances
// below 1 m are clamped to 1 m (0 dB loss).
inline double channel_gain(double distance) {
  const double d = std::max(distance, 1.0);
  return 1.0 / (d * d * d);
}

inline double wrapped_distance(Point a, Point b, const Topology& topo) {
  double best = norm(a - b);
  for (const Point& shift : topo.wrap_vectors) {
    best = std::min(best, norm(a - (b + shift)));
  }
  return best;
}

namespace detail {

struct Axial {
  int q = 0;
  int r = 0;
};

// Flat-top hexagons: neighbours sit at 30 + 60k degrees, site_distance apart.
inline Point axial_to_point(Axial a, double site_distance) {
  constexpr double half_sqrt3 = std::numbers::sqrt3 / 2.0;
  return {site_distance * half_sqrt3 * a.q, site_distance * (0.5 * a.q + a.r)};
}

inline std::vector<Axial> hex_cluster(int rings) {
  std::vector<Axial> out;
  out.push_back({0, 0});
  // Directions ordered counter-clockwise starting at 30 degrees.
  constexpr std::array<Axial, 6> dirs{{{1, 0}, {0, 1}, {-1, 1}, {-1, 0}, {0, -1}, {1, -1}}};
  for (int ring = 1; ring <= rings; ++ring) {
    // Start at ring * dir[4] and walk the six sides.
    Axial cur{dirs[4].q * ring, dirs[4].r * ring};
    for (int side = 0; side < 6; ++side) {
      for (int step = 0; step < ring; ++step) {
        out.push_back(cur);
        cur.q += dirs[side].q;
        cur.r += dirs[side].r;
      }
    }
  }
  return out;
}

// Flat-top hexagon with circumradius `radius` centred at the origin.
inline bool inside_hexagon(Point p, double radius) {
  const double ax = std::abs(p.x);
  const double ay = std::abs(p.y);
  const double apothem = radius * std::numbers::sqrt3 / 2.0;
  return ay <= apothem && std::numbers::sqrt3 * ax + ay <= std::numbers::sqrt3 * radius;
}

} // namespace detail

inline bool inside_cell(Point p, const Cell& cell, double site_distance) {
  return detail::inside_hexagon(p - cell.center, site_distance / std::numbers::sqrt3);
}

// Builds a wrapped hexagonal layout of 7 (one ring) or 19 (two rings) cells
// and drops `users_per_cell` sources uniformly inside every hexagon.
inline Topology build_topology(std::size_t num_cells, double site_distance,
                               std::size_t users_per_cell, std::uint64_t rng_seed) {
  int rings = 0;
  if (num_cells == 7) {
    rings = 1;
  } else if (num_cells == 19) {
    rings = 2;
  } else {
    throw ConfigError("topology.num_cells: unsupported value " + std::to_string(num_cells) +
                      " (expected 7 or 19)");
  }
  if (!(site_distance > 0.0)) {
    throw ConfigError("topology.site_distance: must be positive");
  }
  if (users_per_cell == 0) {
    throw ConfigError("topology.users_per_cell: must be at least 1");
  }

  Topology topo;
  topo.site_distance = site_distance;

  const auto axial = detail::hex_cluster(rings);
  // Shift (2N+1, -N) and its five rotations tile the plane with copies of
  // the N-ring cluster.
  detail::Axial shift{2 * rings + 1, -rings};
  for (int k = 0; k < 6; ++k) {
    topo.wrap_vectors.push_back(detail::axial_to_point(shift, site_distance));
    shift = {-shift.r, shift.q + shift.r};
  }

  topo.cells.resize(axial.size());
  for (std::size_t k = 0; k < axial.size(); ++k) {
    Cell& cell = topo.cells[k];
    cell.id = k;
    cell.center = detail::axial_to_point(axial[k], site_distance);
    cell.type = ((axial[k].q - axial[k].r) % 3 + 3) % 3 + 1;
  }
  for (Cell& cell : topo.cells) {
    for (const Cell& other : topo.cells) {
      if (other.id == cell.id) {
        continue;
      }
      const double d = wrapped_distance(cell.center, other.center, topo);
      if (std::abs(d - site_distance) < 1e-6 * site_distance) {
        cell.neighbors.push_back(other.id);
      }
    }
  }

  Rng rng(derive_seed(rng_seed, 0x70b0));
  const double radius = site_distance / std::numbers::sqrt3;
  const double apothem = site_distance / 2.0;
  for (Cell& cell : topo.cells) {
    for (std::size_t u = 0; u < users_per_cell; ++u) {
      Point offset;
      do {
        offset = {rng.uniform(-radius, radius), rng.uniform(-apothem, apothem)};
      } while (!detail::inside_hexagon(offset, radius));
      Source src;
      src.id = topo.sources.size();
      src.cell_id = cell.id;
      src.position = cell.center + offset;
      cell.sources.push_back(src.id);
      topo.sources.push_back(std::move(src));
    }
  }

  for (Source& src : topo.sources) {
    src.gains.resize(topo.cells.size());
    for (const Cell& cell : topo.cells) {
      src.gains[cell.id] = channel_gain(wrapped_distance(src.position, cell.center, topo));
    }
  }
  return topo;
}

// Adjacency inside the cluster, ignoring wrap-around: centres exactly one
// site distance apart without any shift.
inline std::vector<std::pair<std::size_t, std::size_t>> direct_adjacency(const Topology& topo) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const Cell& a : topo.cells) {
    for (const Cell& b : topo.cells) {
      if (a.id < b.id &&
          std::abs(norm(a.center - b.center) - topo.site_distance) < 1e-6 * topo.site_distance) {
        out.emplace_back(a.id, b.id);
      }
    }
  }
  return out;
}

} // namespace corrsched
