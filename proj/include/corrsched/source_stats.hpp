#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "corrsched/error.hpp"
#include "corrsched/geometry.hpp"

namespace corrsched {

// Zero-mean jointly Gaussian observations with exponential spatial
// correlation sigma^2 * exp(-d / theta).
struct SourceModel {
  double variance = 10.0;
  double theta = 100.0; // metres
  double mean = 0.0;

  void validate() const {
    if (!(variance > 0.0)) {
      throw ConfigError("source_model.variance: must be positive");
    }
    if (!(theta > 0.0)) {
      throw ConfigError("source_model.theta: must be positive");
    }
  }
};

// log2(2*pi*e), the per-dimension constant of Gaussian differential entropy.
inline constexpr double kLog2TwoPiE = 4.094191170361282;

struct CovarianceMatrix {
  Eigen::MatrixXd entries;
  std::vector<std::size_t> member_ids; // row i <-> member_ids[i]

  std::size_t size() const { return member_ids.size(); }

  std::size_t index_of(std::size_t id) const {
    const auto it = std::find(member_ids.begin(), member_ids.end(), id);
    if (it == member_ids.end()) {
      throw std::out_of_range("source " + std::to_string(id) + " is not in the covariance matrix");
    }
    return static_cast<std::size_t>(it - member_ids.begin());
  }
};

template <typename DistanceFn>
CovarianceMatrix covariance(std::span<const Point> positions, std::span<const std::size_t> ids,
                            const SourceModel& model, DistanceFn&& distance) {
  model.validate();
  if (positions.size() != ids.size()) {
    throw std::invalid_argument("covariance: positions and ids differ in length");
  }
  const auto n = static_cast<Eigen::Index>(positions.size());
  CovarianceMatrix cov;
  cov.member_ids.assign(ids.begin(), ids.end());
  cov.entries.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cov.entries(i, i) = model.variance;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = distance(positions[i], positions[j]);
      const double v = model.variance * std::exp(-d / model.theta);
      cov.entries(i, j) = v;
      cov.entries(j, i) = v;
    }
  }
  return cov;
}

// Covariance of the given sources using wrapped distances in `topo`.
inline CovarianceMatrix covariance(const Topology& topo, std::span<const std::size_t> ids,
                                   const SourceModel& model) {
  std::vector<Point> pos;
  pos.reserve(ids.size());
  for (std::size_t id : ids) {
    pos.push_back(topo.sources.at(id).position);
  }
  return covariance(pos, ids, model,
                    [&topo](Point a, Point b) { return wrapped_distance(a, b, topo); });
}

namespace detail {

// log2 det of a symmetric positive definite matrix. Rejects matrices whose
// smallest Cholesky pivot falls below 1e-12 * scale.
inline double log2_det_spd(const Eigen::MatrixXd& m, double scale) {
  if (m.rows() == 0) {
    return 0.0;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw DegenerateModelError("covariance submatrix is not positive definite");
  }
  const Eigen::MatrixXd& l = llt.matrixLLT();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double pivot = l(i, i) * l(i, i);
    if (!(pivot >= 1e-12 * scale)) {
      throw DegenerateModelError("covariance submatrix is rank deficient (pivot " +
                                 std::to_string(pivot) + ")");
    }
    acc += std::log2(pivot);
  }
  return acc;
}

inline Eigen::MatrixXd principal_submatrix(const CovarianceMatrix& cov,
                                           std::span<const std::size_t> idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd sub(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      sub(i, j) = cov.entries(static_cast<Eigen::Index>(idx[i]), static_cast<Eigen::Index>(idx[j]));
    }
  }
  return sub;
}

inline double diagonal_scale(const CovarianceMatrix& cov) {
  return cov.entries.size() == 0 ? 1.0 : cov.entries.diagonal().maxCoeff();
}

} // namespace detail

// Differential entropy in bits of the sources at local rows `rows`.
inline double joint_entropy_rows(std::span<const std::size_t> rows, const CovarianceMatrix& cov) {
  if (rows.empty()) {
    return 0.0;
  }
  const auto sub = detail::principal_submatrix(cov, rows);
  const double n = static_cast<double>(rows.size());
  return 0.5 * (n * kLog2TwoPiE + detail::log2_det_spd(sub, detail::diagonal_scale(cov)));
}

// h(S) = 1/2 log2((2 pi e)^|S| det Sigma_S), with S given by source ids.
inline double joint_entropy(std::span<const std::size_t> subset, const CovarianceMatrix& cov) {
  if (subset.empty()) {
    throw std::invalid_argument("joint_entropy: empty subset");
  }
  std::vector<std::size_t> rows;
  rows.reserve(subset.size());
  for (std::size_t id : subset) {
    rows.push_back(cov.index_of(id));
  }
  return joint_entropy_rows(rows, cov);
}

// h(S | given) by the chain rule h(S u given) - h(given).
inline double conditional_entropy(std::span<const std::size_t> s_set,
                                  std::span<const std::size_t> given,
                                  const CovarianceMatrix& cov) {
  for (std::size_t a : s_set) {
    if (std::find(given.begin(), given.end(), a) != given.end()) {
      throw std::invalid_argument("conditional_entropy: sets must be disjoint");
    }
  }
  if (given.empty()) {
    return joint_entropy(s_set, cov);
  }
  std::vector<std::size_t> both(s_set.begin(), s_set.end());
  both.insert(both.end(), given.begin(), given.end());
  return joint_entropy(both, cov) - joint_entropy(given, cov);
}

} // namespace corrsched
