#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

namespace corrsched::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class RowSense { LessEqual, GreaterEqual, Equal };

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* to_string(Status s) {
  switch (s) {
  case Status::Optimal:
    return "optimal";
  case Status::Infeasible:
    return "infeasible";
  case Status::Unbounded:
    return "unbounded";
  case Status::IterationLimit:
    return "iteration limit";
  }
  return "?";
}

struct Term {
  std::size_t var = 0;
  double coef = 0.0;
};

// minimize c'x  s.t.  each row  sum(coef * x) {<=,>=,=} rhs,  lower <= x <= upper.
class Problem {
public:
  std::size_t add_variable(double lower, double upper, double cost) {
    lower_.push_back(lower);
    upper_.push_back(upper);
    cost_.push_back(cost);
    start_.push_back(std::numeric_limits<double>::quiet_NaN());
    return cost_.size() - 1;
  }

  // Starting value for a variable. Bounded variables start at the bound
  // nearest the hint; free ones start at the hint itself. A start that makes
  // every row feasible lets the solver skip phase one.
  void set_start(std::size_t var, double value) { start_.at(var) = value; }

  void add_row(std::vector<Term> terms, RowSense sense, double rhs) {
    rows_.push_back({std::move(terms), sense, rhs});
  }

  void set_cost(std::size_t var, double cost) { cost_.at(var) = cost; }
  void set_bounds(std::size_t var, double lower, double upper) {
    lower_.at(var) = lower;
    upper_.at(var) = upper;
  }

  std::size_t num_vars() const { return cost_.size(); }
  std::size_t num_rows() const { return rows_.size(); }

  struct Row {
    std::vector<Term> terms;
    RowSense sense;
    double rhs;
  };

  const std::vector<Row>& rows() const { return rows_; }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }
  const std::vector<double>& cost() const { return cost_; }
  const std::vector<double>& start() const { return start_; }

  // Plain-text dump of the instance, attached to solver errors.
  std::string dump() const {
    std::ostringstream os;
    os.precision(17);
    os << "minimize";
    for (std::size_t j = 0; j < cost_.size(); ++j) {
      if (cost_[j] != 0.0) {
        os << ' ' << cost_[j] << "*x" << j;
      }
    }
    os << "\nsubject to\n";
    for (const Row& r : rows_) {
      for (const Term& t : r.terms) {
        os << ' ' << t.coef << "*x" << t.var;
      }
      os << (r.sense == RowSense::LessEqual ? " <= " : r.sense == RowSense::GreaterEqual ? " >= " : " = ")
         << r.rhs << '\n';
    }
    os << "bounds\n";
    for (std::size_t j = 0; j < cost_.size(); ++j) {
      os << ' ' << lower_[j] << " <= x" << j << " <= " << upper_[j] << '\n';
    }
    return os.str();
  }

private:
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<double> cost_;
  std::vector<double> start_;
  std::vector<Row> rows_;
};

struct Options {
  std::size_t max_iterations = 100000;
  double tolerance = 1e-9;
  // Consecutive degenerate pivots before switching to Bland's rule.
  std::size_t degenerate_switch = 30;
  std::size_t refactor_interval = 128;
};

struct Solution {
  Status status = Status::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::vector<double> duals;          // one per row
  std::vector<double> reduced_costs;  // one per structural variable
  // Largest reduced cost that still points in an improving direction at the
  // returned basis. Zero (or below tolerance) certifies optimality.
  double max_dual_infeasibility = 0.0;
  std::size_t iterations = 0;
};

namespace detail {

class RevisedSimplex {
public:
  RevisedSimplex(const Problem& p, const Options& opt) : opt_(opt) {
    n_ = p.num_vars();
    m_ = p.num_rows();
    rhs_.resize(static_cast<Eigen::Index>(m_));
    cols_.assign(n_ + m_, {});
    lo_ = p.lower();
    hi_ = p.upper();
    for (std::size_t i = 0; i < m_; ++i) {
      const auto& row = p.rows()[i];
      rhs_(static_cast<Eigen::Index>(i)) = row.rhs;
      for (const Term& t : row.terms) {
        if (t.coef != 0.0) {
          cols_.at(t.var).push_back({i, t.coef});
        }
      }
      cols_[n_ + i].push_back({i, 1.0});
      switch (row.sense) {
      case RowSense::LessEqual:
        lo_.push_back(0.0);
        hi_.push_back(kInf);
        break;
      case RowSense::GreaterEqual:
        lo_.push_back(-kInf);
        hi_.push_back(0.0);
        break;
      case RowSense::Equal:
        lo_.push_back(0.0);
        hi_.push_back(0.0);
        break;
      }
    }
    user_cost_ = p.cost();
    start_ = p.start();
  }

  Solution run() {
    initial_basis();
    Solution sol;
    if (num_artificial_ > 0) {
      cost_.assign(cols_.size(), 0.0);
      for (std::size_t j = first_artificial_; j < cols_.size(); ++j) {
        cost_[j] = 1.0;
      }
      const Status s = iterate();
      if (s == Status::IterationLimit) {
        sol.status = s;
        sol.iterations = iterations_;
        return sol;
      }
      double infeas = 0.0;
      for (std::size_t j = first_artificial_; j < cols_.size(); ++j) {
        infeas += x_[j];
      }
      if (infeas > feasibility_tolerance()) {
        sol.status = Status::Infeasible;
        sol.iterations = iterations_;
        return sol;
      }
      for (std::size_t j = first_artificial_; j < cols_.size(); ++j) {
        hi_[j] = 0.0;
        if (state_[j] != State::Basic) {
          x_[j] = 0.0;
          state_[j] = State::Lower;
        }
      }
      refactor();
    }
    cost_.assign(cols_.size(), 0.0);
    std::copy(user_cost_.begin(), user_cost_.end(), cost_.begin());
    const Status s = iterate();
    sol.status = s;
    sol.iterations = iterations_;
    sol.x.assign(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n_));
    sol.objective = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      sol.objective += user_cost_[j] * x_[j];
    }
    const Eigen::VectorXd y = duals();
    sol.duals.assign(y.data(), y.data() + y.size());
    sol.reduced_costs.resize(n_);
    double worst = 0.0;
    for (std::size_t j = 0; j < cols_.size(); ++j) {
      if (state_[j] == State::Basic) {
        if (j < n_) {
          sol.reduced_costs[j] = 0.0;
        }
        continue;
      }
      const double d = reduced_cost(j, y);
      if (j < n_) {
        sol.reduced_costs[j] = d;
      }
      worst = std::max(worst, improving_amount(j, d));
    }
    sol.max_dual_infeasibility = worst;
    return sol;
  }

private:
  enum class State { Lower, Upper, Free, Basic };

  struct Entry {
    std::size_t row;
    double value;
  };

  double feasibility_tolerance() const { return opt_.tolerance * (1.0 + rhs_.cwiseAbs().maxCoeff()); }

  void initial_basis() {
    const std::size_t total = n_ + m_;
    x_.assign(total, 0.0);
    state_.assign(total, State::Lower);
    for (std::size_t j = 0; j < n_; ++j) {
      const double hint = start_[j];
      const bool has_hint = !std::isnan(hint);
      if (has_hint && !std::isfinite(lo_[j]) && !std::isfinite(hi_[j])) {
        x_[j] = hint;
        state_[j] = State::Free;
      } else if (has_hint && std::isfinite(hi_[j]) &&
                 (!std::isfinite(lo_[j]) || hint - lo_[j] > hi_[j] - hint)) {
        x_[j] = hi_[j];
        state_[j] = State::Upper;
      } else if (std::isfinite(lo_[j])) {
        x_[j] = lo_[j];
        state_[j] = State::Lower;
      } else if (std::isfinite(hi_[j])) {
        x_[j] = hi_[j];
        state_[j] = State::Upper;
      } else {
        x_[j] = 0.0;
        state_[j] = State::Free;
      }
    }
    Eigen::VectorXd residual = rhs_;
    for (std::size_t j = 0; j < n_; ++j) {
      if (x_[j] != 0.0) {
        for (const Entry& e : cols_[j]) {
          residual(static_cast<Eigen::Index>(e.row)) -= e.value * x_[j];
        }
      }
    }
    head_.assign(m_, 0);
    first_artificial_ = total;
    num_artificial_ = 0;
    const double tol = opt_.tolerance;
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t s = n_ + i;
      const double r = residual(static_cast<Eigen::Index>(i));
      if (r >= lo_[s] - tol && r <= hi_[s] + tol) {
        x_[s] = r;
        state_[s] = State::Basic;
        head_[i] = s;
        continue;
      }
      const double at = std::clamp(r, lo_[s], hi_[s]);
      x_[s] = at;
      state_[s] = (at == lo_[s]) ? State::Lower : State::Upper;
      const double sign = (r - at) > 0.0 ? 1.0 : -1.0;
      cols_.push_back({{i, sign}});
      lo_.push_back(0.0);
      hi_.push_back(kInf);
      x_.push_back(std::abs(r - at));
      state_.push_back(State::Basic);
      head_[i] = cols_.size() - 1;
      if (num_artificial_ == 0) {
        first_artificial_ = cols_.size() - 1;
      }
      ++num_artificial_;
    }
    refactor();
  }

  void refactor() {
    const auto m = static_cast<Eigen::Index>(m_);
    if (m == 0) {
      binv_.resize(0, 0);
      return;
    }
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (const Entry& e : cols_[head_[static_cast<std::size_t>(i)]]) {
        basis(static_cast<Eigen::Index>(e.row), i) = e.value;
      }
    }
    binv_ = basis.partialPivLu().inverse();
    Eigen::VectorXd r = rhs_;
    for (std::size_t j = 0; j < cols_.size(); ++j) {
      if (state_[j] != State::Basic && x_[j] != 0.0) {
        for (const Entry& e : cols_[j]) {
          r(static_cast<Eigen::Index>(e.row)) -= e.value * x_[j];
        }
      }
    }
    const Eigen::VectorXd xb = binv_ * r;
    for (Eigen::Index i = 0; i < m; ++i) {
      x_[head_[static_cast<std::size_t>(i)]] = xb(i);
    }
    since_refactor_ = 0;
  }

  Eigen::VectorXd duals() const {
    const auto m = static_cast<Eigen::Index>(m_);
    Eigen::VectorXd cb(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      cb(i) = cost_[head_[static_cast<std::size_t>(i)]];
    }
    return binv_.transpose() * cb;
  }

  double reduced_cost(std::size_t j, const Eigen::VectorXd& y) const {
    double d = cost_[j];
    for (const Entry& e : cols_[j]) {
      d -= y(static_cast<Eigen::Index>(e.row)) * e.value;
    }
    return d;
  }

  // How much moving nonbasic j would improve the objective per unit step,
  // zero when j is not an improving candidate.
  double improving_amount(std::size_t j, double d) const {
    if (lo_[j] == hi_[j]) {
      return 0.0;
    }
    switch (state_[j]) {
    case State::Lower:
      return std::max(0.0, -d);
    case State::Upper:
      return std::max(0.0, d);
    case State::Free:
      return std::abs(d);
    case State::Basic:
      return 0.0;
    }
    return 0.0;
  }

  Status iterate() {
    const double tol = opt_.tolerance;
    std::size_t degenerate_run = 0;
    bool bland = false;
    Eigen::VectorXd alpha(static_cast<Eigen::Index>(m_));
    while (true) {
      if (iterations_ >= opt_.max_iterations) {
        return Status::IterationLimit;
      }
      const Eigen::VectorXd y = duals();
      std::size_t entering = cols_.size();
      double best = 0.0;
      for (std::size_t j = 0; j < cols_.size(); ++j) {
        if (state_[j] == State::Basic) {
          continue;
        }
        const double gain = improving_amount(j, reduced_cost(j, y));
        if (gain <= tol) {
          continue;
        }
        if (bland) {
          entering = j;
          best = gain;
          break;
        }
        if (gain > best) {
          best = gain;
          entering = j;
        }
      }
      if (entering == cols_.size()) {
        if (since_refactor_ > 0) {
          // Confirm optimality against a fresh factorization.
          refactor();
          continue;
        }
        return Status::Optimal;
      }

      const double d = reduced_cost(entering, y);
      const double dir = (d < 0.0) ? 1.0 : -1.0;

      alpha.setZero();
      for (const Entry& e : cols_[entering]) {
        alpha += binv_.col(static_cast<Eigen::Index>(e.row)) * e.value;
      }

      // Ratio test. Basic i moves by -dir * theta * alpha_i.
      double theta = kInf;
      std::size_t leave_row = m_;
      double leave_mag = 0.0;
      for (std::size_t i = 0; i < m_; ++i) {
        const double a = dir * alpha(static_cast<Eigen::Index>(i));
        if (std::abs(a) <= tol) {
          continue;
        }
        const std::size_t b = head_[i];
        double limit = kInf;
        if (a > 0.0 && std::isfinite(lo_[b])) {
          limit = std::max(0.0, (x_[b] - lo_[b]) / a);
        } else if (a < 0.0 && std::isfinite(hi_[b])) {
          limit = std::max(0.0, (hi_[b] - x_[b]) / -a);
        }
        if (!std::isfinite(limit)) {
          continue;
        }
        bool take = false;
        const double slack = 1e-12 * (1.0 + (std::isfinite(theta) ? theta : 0.0));
        if (leave_row == m_ || limit < theta - slack) {
          take = true;
        } else if (limit <= theta + slack) {
          take = bland ? head_[i] < head_[leave_row] : std::abs(a) > leave_mag;
        }
        if (take) {
          theta = std::min(theta, limit);
          leave_row = i;
          leave_mag = std::abs(a);
        }
      }
      const double range = hi_[entering] - lo_[entering];
      const bool flip = std::isfinite(range) && range <= theta;
      if (flip) {
        theta = range;
      }
      if (!std::isfinite(theta)) {
        return Status::Unbounded;
      }

      ++iterations_;
      if (theta <= 1e-12) {
        if (++degenerate_run >= opt_.degenerate_switch) {
          bland = true;
        }
      } else {
        degenerate_run = 0;
        bland = false;
      }

      for (std::size_t i = 0; i < m_; ++i) {
        x_[head_[i]] -= dir * theta * alpha(static_cast<Eigen::Index>(i));
      }
      x_[entering] += dir * theta;

      if (flip) {
        if (state_[entering] == State::Lower) {
          state_[entering] = State::Upper;
          x_[entering] = hi_[entering];
        } else {
          state_[entering] = State::Lower;
          x_[entering] = lo_[entering];
        }
        continue;
      }

      const std::size_t leaving = head_[leave_row];
      const double a_leave = dir * alpha(static_cast<Eigen::Index>(leave_row));
      if (a_leave > 0.0) {
        x_[leaving] = lo_[leaving];
        state_[leaving] = State::Lower;
      } else {
        x_[leaving] = hi_[leaving];
        state_[leaving] = State::Upper;
      }
      state_[entering] = State::Basic;
      head_[leave_row] = entering;

      const auto p = static_cast<Eigen::Index>(leave_row);
      const double pivot = alpha(p);
      binv_.row(p) /= pivot;
      alpha(p) = 0.0;
      binv_.noalias() -= alpha * binv_.row(p);

      if (++since_refactor_ >= opt_.refactor_interval) {
        refactor();
      }
    }
  }

  Options opt_;
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  Eigen::VectorXd rhs_;
  std::vector<std::vector<Entry>> cols_;
  std::vector<double> lo_;
  std::vector<double> hi_;
  std::vector<double> user_cost_;
  std::vector<double> start_;
  std::vector<double> cost_;
  std::vector<double> x_;
  std::vector<State> state_;
  std::vector<std::size_t> head_;
  std::size_t first_artificial_ = 0;
  std::size_t num_artificial_ = 0;
  Eigen::MatrixXd binv_;
  std::size_t since_refactor_ = 0;
  std::size_t iterations_ = 0;
};

} // namespace detail

inline Solution solve(const Problem& problem, const Options& options = {}) {
  return detail::RevisedSimplex(problem, options).run();
}

} // namespace corrsched::lp
