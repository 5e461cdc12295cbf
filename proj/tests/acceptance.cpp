// Acceptance gate: one PASS/FAIL line per criterion. `--oracles` runs the
// property and oracle suites (6-12), `--trends` the desk-scale simulations
// (1-5). Exit status is non-zero if any executed criterion fails.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "corrsched/report.hpp"
#include "corrsched/simulator.hpp"
#include "oracles.hpp"

using namespace corrsched;

namespace {

// Tolerances and thresholds.
constexpr double kGridStep = 1e-4;
constexpr double kClosedVsLp = 1e-9;
constexpr double kLpVsInteger = 1e-9;
constexpr double kEntropyRel = 1e-9;
constexpr double kSlackFloor = -1e-9;
constexpr double kIppRel = 1e-12;
constexpr double kCorrGainDb = 0.5;
constexpr double kSaturationDb = 0.5;
constexpr double kEndToEndDb = 2.0;

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("criterion %2d %-4s %s: %s\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) {
    ++failures;
  }
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::scientific << v;
  return os.str();
}

CovarianceMatrix cov_of(const std::vector<std::pair<double, double>>& pts, const SourceModel& m) {
  std::vector<Point> p;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    p.push_back({pts[i].first, pts[i].second});
    ids.push_back(i);
  }
  return covariance(p, ids, m, [](Point a, Point b) { return norm(a - b); });
}

// ---------------------------------------------------------------- oracles

Outcome criterion6() {
  Rng rng(606);
  double worst_grid = 0.0;
  double worst_lp = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    SourceModel m;
    m.theta = rng.uniform(20.0, 300.0);
    m.variance = rng.uniform(0.5, 20.0);
    const auto cov = cov_of({{0.0, 0.0}, {rng.uniform(1.0, 300.0), rng.uniform(0.0, 50.0)}}, m);
    const std::vector<std::size_t> ids = {0, 1};
    const std::vector<double> rates = {rng.below(6) == 0 ? 0.0 : rng.uniform(0.0, 8.0),
                                       rng.below(6) == 0 ? 0.0 : rng.uniform(0.0, 8.0)};
    const RdRegion region = build_region(ids, rates, cov);
    double b[4] = {};
    for (const auto& c : region.constraints) b[c.subset] = c.bound;
    const auto closed = minmax_split(region);
    const auto lp = minmax_split_lp(region);
    worst_grid = std::max(worst_grid, std::abs(closed.max() - oracle::pair_grid_minmax(b[1], b[2], b[3], kGridStep)));
    for (int i = 0; i < 2; ++i) worst_lp = std::max(worst_lp, std::abs(closed.delta[i] - lp.delta[i]));
  }
  return {worst_grid <= kGridStep * (1.0 + 1e-9) && worst_lp <= kClosedVsLp,
          "1000 pairs, max |closed - grid| " + sci(worst_grid) + " (<= " + sci(kGridStep) +
              "), max |closed - LP| " + sci(worst_lp) + " (<= " + sci(kClosedVsLp) + ")"};
}

double integer_optimum(const std::vector<std::pair<double, double>>& pts,
                       const std::vector<std::vector<std::size_t>>& groups, const RateMatrix& rates,
                       const std::vector<double>& dbar_log, std::size_t t_frames) {
  const std::size_t n = pts.size();
  const auto channels = static_cast<std::size_t>(rates.cols());
  std::vector<std::vector<std::size_t>> comps;
  std::vector<std::size_t> cur;
  oracle::compositions(t_frames, n, comps, cur);
  const double l2pe = std::log2(2.0 * M_PI * std::exp(1.0));
  // h(S | G \ S) by determinants of the kernel matrices.
  std::vector<std::vector<double>> cond(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    cond[g].assign(1u << grp.size(), 0.0);
    std::vector<std::pair<double, double>> all;
    for (std::size_t id : grp) all.push_back(pts[id]);
    const double h_all = oracle::gaussian_entropy(oracle::exp_kernel(all, 10.0, 100.0));
    for (std::uint32_t mask = 1; mask < (1u << grp.size()); ++mask) {
      std::vector<std::pair<double, double>> rest;
      for (std::size_t s = 0; s < grp.size(); ++s) {
        if (!(mask & (1u << s))) rest.push_back(pts[grp[s]]);
      }
      cond[g][mask] = h_all - (rest.empty() ? 0.0 : oracle::gaussian_entropy(oracle::exp_kernel(rest, 10.0, 100.0)));
    }
  }
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(channels, 0);
  while (true) {
    std::vector<double> r(n, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        r[i] += static_cast<double>(comps[pick[c]][i]) * rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      }
    }
    double obj = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& grp = groups[g];
      std::vector<double> c_by_mask(1u << grp.size(), 0.0);
      for (std::uint32_t mask = 1; mask < (1u << grp.size()); ++mask) {
        double v = cond[g][mask] - 0.5 * std::popcount(mask) * l2pe;
        for (std::size_t s = 0; s < grp.size(); ++s) {
          if (mask & (1u << s)) v += dbar_log[grp[s]] - r[grp[s]];
        }
        c_by_mask[mask] = v;
      }
      obj = std::max(obj, oracle::uniform_epigraph(c_by_mask, grp.size()));
    }
    best = std::min(best, obj);
    std::size_t c = 0;
    while (c < channels && ++pick[c] == comps.size()) pick[c++] = 0;
    if (c == channels) break;
  }
  return best;
}

Outcome criterion7() {
  Rng rng(707);
  const std::size_t t_frames = 2;
  double worst_gap = -std::numeric_limits<double>::infinity();
  std::size_t rounding_failures = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(3);
    const std::size_t channels = 1 + rng.below(4);
    std::vector<std::pair<double, double>> pts;
    Topology topo;
    Cell cell;
    for (std::size_t i = 0; i < n; ++i) {
      pts.emplace_back(rng.uniform(0.0, 250.0), rng.uniform(0.0, 250.0));
      Source s;
      s.id = i;
      s.position = {pts.back().first, pts.back().second};
      topo.sources.push_back(s);
      cell.sources.push_back(i);
    }
    topo.cells.push_back(cell);
    std::vector<std::vector<std::size_t>> groups;
    const std::uint64_t shape = rng.below(3);
    if (shape == 0 || n == 1) {
      for (std::size_t i = 0; i < n; ++i) groups.push_back({i});
    } else if (shape == 1) {
      groups.push_back({});
      for (std::size_t i = 0; i < n; ++i) groups[0].push_back(i);
    } else {
      groups.push_back({0, 1});
      for (std::size_t i = 2; i < n; ++i) groups.push_back({i});
    }
    Grouping g;
    g.groups = groups;
    g.group_size = 3;
    const auto cov = covariance(topo, cell.sources, SourceModel{});
    const CellGroups cg = build_cell_groups(cell, g, cov);
    RateMatrix rates(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(channels));
    for (Eigen::Index i = 0; i < rates.rows(); ++i)
      for (Eigen::Index c = 0; c < rates.cols(); ++c) rates(i, c) = rng.below(5) == 0 ? 0.0 : rng.uniform(0.0, 5.0);
    auto avg = RunningAverages::initial(n, 10.0, 100);
    std::vector<double> dbar_log(n);
    for (std::size_t i = 0; i < n; ++i) {
      avg.distortion[i] = rng.uniform(0.01, 10.0);
      dbar_log[i] = 0.5 * std::log2(avg.distortion[i]);
    }
    const FractionalAllocation fa = opt_assign(cg, rates, avg, t_frames);
    worst_gap = std::max(worst_gap, fa.objective - integer_optimum(pts, groups, rates, dbar_log, t_frames));
    const auto frames = round_allocation(fa);
    bool ok = frames.size() == t_frames;
    for (std::size_t c = 0; ok && c < channels; ++c) {
      std::vector<std::size_t> count(n, 0);
      for (const auto& f : frames) {
        ok = ok && f.assign.size() == channels && f.assign[c] < n;
        if (ok) ++count[f.assign[c]];
      }
      std::size_t total = 0;
      for (std::size_t i = 0; ok && i < n; ++i) {
        total += count[i];
        ok = std::abs(static_cast<double>(count[i]) - fa.shares(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c))) < 1.0 + 1e-9;
      }
      ok = ok && total == t_frames;
    }
    rounding_failures += ok ? 0 : 1;
  }
  return {worst_gap <= kLpVsInteger && rounding_failures == 0,
          "200 instances, max (LP - integer optimum) " + sci(worst_gap) + " (<= " + sci(kLpVsInteger) +
              "), infeasible roundings " + std::to_string(rounding_failures)};
}

Outcome criterion8() {
  Rng rng(808);
  double worst_rel = 0.0;
  std::size_t chain_mismatch = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(4);
    SourceModel m;
    m.theta = rng.uniform(20.0, 300.0);
    m.variance = rng.uniform(0.5, 20.0);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < n; ++i) pts.emplace_back(rng.uniform(0.0, 300.0), rng.uniform(0.0, 300.0));
    const auto cov = cov_of(pts, m);
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    const double h = joint_entropy(ids, cov);
    const double ref = oracle::gaussian_entropy(oracle::exp_kernel(pts, m.variance, m.theta));
    worst_rel = std::max(worst_rel, std::abs(h - ref) / std::max(1.0, std::abs(ref)));
    for (std::size_t split = 1; split < n; ++split) {
      const std::vector<std::size_t> s(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(split));
      const std::vector<std::size_t> t(ids.begin() + static_cast<std::ptrdiff_t>(split), ids.end());
      if (conditional_entropy(s, t, cov) != joint_entropy(ids, cov) - joint_entropy(t, cov)) ++chain_mismatch;
    }
  }
  return {worst_rel <= kEntropyRel && chain_mismatch == 0,
          "500 subsets |S|<=4, max relative error " + sci(worst_rel) + " (<= " + sci(kEntropyRel) +
              "), chain-rule mismatches " + std::to_string(chain_mismatch)};
}

ExperimentConfig oracle_config(InterCellMode mode, std::size_t gs, SchedulerKind kind) {
  ExperimentConfig cfg;
  cfg.icon.mode = mode;
  cfg.grouping.group_size = gs;
  cfg.scheduler.kind = kind;
  cfg.simulation.drops = 1;
  cfg.simulation.frames = 150;
  cfg.simulation.seed = 9;
  if (kind == SchedulerKind::Opt) {
    cfg.topology.num_cells = 7;
    cfg.simulation.frames = 60;
  }
  return cfg;
}

struct OracleRuns {
  std::vector<std::pair<std::string, Metrics>> runs;
};

OracleRuns& oracle_runs() {
  static OracleRuns cache = [] {
    OracleRuns r;
    const std::pair<std::string, ExperimentConfig> cfgs[] = {
        {"reuse1/gs1/pf", oracle_config(InterCellMode::Reuse1, 1, SchedulerKind::Pf)},
        {"static/gs2/dpf", oracle_config(InterCellMode::StaticIcon, 2, SchedulerKind::Dpf)},
        {"adaptive/gs3/pf", oracle_config(InterCellMode::AdaptiveIcon, 3, SchedulerKind::Pf)},
        {"adaptive/gs2/opt", oracle_config(InterCellMode::AdaptiveIcon, 2, SchedulerKind::Opt)},
    };
    for (const auto& [label, cfg] : cfgs) r.runs.emplace_back(label, run(cfg));
    return r;
  }();
  return cache;
}

Outcome criterion9() {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& [label, m] : oracle_runs().runs) {
    (void)label;
    worst = std::min(worst, m.min_region_slack);
  }
  return {worst >= kSlackFloor, "min region slack over all frames and reported values " + sci(worst) +
                                    " (>= " + sci(kSlackFloor) + ")"};
}

Outcome criterion10() {
  std::size_t checks = 0;
  std::size_t violations = 0;
  std::size_t floored = 0;
  double excess = 0.0;
  for (const auto& [label, m] : oracle_runs().runs) {
    (void)label;
    checks += m.compliance_checks;
    violations += m.compliance_violations;
    floored += m.floored_transmissions;
    excess = std::max(excess, m.max_compliance_excess);
  }
  return {checks > 0 && violations == 0 && excess <= kIppRel,
          std::to_string(checks) + " checks, " + std::to_string(violations) + " violations, max relative excess " +
              sci(excess) + " (<= " + sci(kIppRel) + "), floored transmissions skipped " + std::to_string(floored)};
}

std::map<std::string, std::string> csv_files(const Metrics& m, const ExperimentConfig& cfg,
                                             const std::filesystem::path& dir) {
  std::filesystem::remove_all(dir);
  const RunInfo info{std::chrono::system_clock::now(), std::chrono::system_clock::now()};
  std::map<std::string, std::string> out;
  for (const auto& p : emit_results(m, cfg, dir, info)) {
    if (p.extension() == ".csv") {
      std::ifstream in(p, std::ios::binary);
      out[p.filename().string()] = std::string(std::istreambuf_iterator<char>(in), {});
    }
  }
  return out;
}

Outcome criterion11() {
  std::size_t configs = 0;
  std::size_t mismatches = 0;
  const auto tmp = std::filesystem::temp_directory_path();
  const ExperimentConfig cfgs[] = {oracle_config(InterCellMode::StaticIcon, 2, SchedulerKind::Dpf),
                                   oracle_config(InterCellMode::AdaptiveIcon, 2, SchedulerKind::Opt)};
  for (const auto& cfg : cfgs) {
    const Metrics a = run(cfg);
    const Metrics b = run(cfg);
    ++configs;
    if (!(a == b) || csv_files(a, cfg, tmp / "corrsched_det_a") != csv_files(b, cfg, tmp / "corrsched_det_b")) {
      ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(configs) + " configs run twice, " + std::to_string(mismatches) +
                               " differ in Metrics or CSV bytes"};
}

Outcome criterion12() {
  const SourceModel m; // sigma^2 = 10, theta = 100
  std::vector<double> g;
  for (std::size_t n = 1; n <= 6; ++n) g.push_back(group_size_gain(n, 100.0, m));
  bool ok = g[0] == 0.0;
  std::string values = "dDelta/N for N=1..6:";
  double prev_step = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.size(); ++k) {
    values += " " + fmt(g[k], 4);
    if (k > 0) {
      const double step = g[k - 1] - g[k];
      ok = ok && g[k] < 0.0 && step > 0.0 && step < prev_step;
      prev_step = step;
    }
  }
  return {ok, values};
}

// ---------------------------------------------------------------- trends

struct TrendRun {
  Metrics metrics;
  double seconds = 0.0;
};

double p95(const std::vector<double>& v) { return percentile(v, 0.95); }

std::vector<double> drop_p95(const Metrics& m) {
  std::vector<double> out;
  for (const auto& d : m.drops) {
    std::vector<double> s;
    for (const auto& src : d.sources) s.push_back(src.distortion_db);
    out.push_back(p95(s));
  }
  return out;
}

int run_trends(std::size_t frames, std::size_t drops, std::uint64_t seed) {
  auto make = [&](InterCellMode mode, std::size_t gs, SchedulerKind kind) {
    ExperimentConfig cfg;
    cfg.icon.mode = mode;
    cfg.grouping.group_size = gs;
    cfg.grouping.method = GroupingMethod::Distance;
    cfg.scheduler.kind = kind;
    cfg.simulation.frames = frames;
    cfg.simulation.drops = drops;
    cfg.simulation.seed = seed;
    return cfg;
  };
  const std::vector<std::pair<std::string, ExperimentConfig>> cfgs = {
      {"reuse1/gs1/pf", make(InterCellMode::Reuse1, 1, SchedulerKind::Pf)},
      {"static/gs1/pf", make(InterCellMode::StaticIcon, 1, SchedulerKind::Pf)},
      {"adaptive/gs1/pf", make(InterCellMode::AdaptiveIcon, 1, SchedulerKind::Pf)},
      {"static/gs2/pf", make(InterCellMode::StaticIcon, 2, SchedulerKind::Pf)},
      {"static/gs2/dpf", make(InterCellMode::StaticIcon, 2, SchedulerKind::Dpf)},
      {"static/gs3/dpf", make(InterCellMode::StaticIcon, 3, SchedulerKind::Dpf)},
      {"static/gs2/opt", make(InterCellMode::StaticIcon, 2, SchedulerKind::Opt)},
      {"adaptive/gs2/opt", make(InterCellMode::AdaptiveIcon, 2, SchedulerKind::Opt)},
  };
  std::printf("trend runs: 19 cells x 18 sources, 63 sub-bands, %zu frames, %zu drops, seed %llu\n", frames,
              drops, static_cast<unsigned long long>(seed));
  std::map<std::string, TrendRun> runs;
  for (const auto& [label, cfg] : cfgs) {
    const auto t0 = std::chrono::steady_clock::now();
    TrendRun r{run(cfg), 0.0};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto dist = r.metrics.distortion_samples();
    const auto rates = r.metrics.rate_samples();
    double iot = 0.0;
    for (const auto& d : r.metrics.drops) iot += d.iot_db;
    std::printf("  %-17s p95 distortion %7.3f dB  p5 rate %6.3f  IoT %6.2f dB  slack %9.2e  ipp violations %zu"
                "  (%.0f s)\n",
                label.c_str(), p95(dist), percentile(rates, 0.05), iot / static_cast<double>(r.metrics.drops.size()),
                r.metrics.min_region_slack, r.metrics.compliance_violations, r.seconds);
    std::fflush(stdout);
    runs.emplace(label, std::move(r));
  }
  auto pooled = [&](const std::string& label) { return p95(runs.at(label).metrics.distortion_samples()); };

  {
    const double gain = pooled("static/gs1/pf") - pooled("static/gs2/pf");
    const auto one = drop_p95(runs.at("static/gs1/pf").metrics);
    const auto two = drop_p95(runs.at("static/gs2/pf").metrics);
    std::size_t strict = 0;
    std::string per;
    for (std::size_t d = 0; d < one.size(); ++d) {
      strict += two[d] < one[d] ? 1 : 0;
      per += " " + fmt(one[d] - two[d], 2);
    }
    report(1, "correlation-in-decoding gain",
           {gain >= kCorrGainDb && strict == one.size(),
            "gs1 - gs2 (PF) = " + fmt(gain) + " dB (>= " + fmt(kCorrGainDb, 1) + "), per drop:" + per});
  }
  {
    const double pf = pooled("static/gs2/pf");
    const double dpf = pooled("static/gs2/dpf");
    const double opt = pooled("static/gs2/opt");
    report(2, "correlation-aware scheduling ordering",
           {opt <= dpf && dpf <= pf,
            "OPT " + fmt(opt) + " <= D-PF " + fmt(dpf) + " <= PF " + fmt(pf) + " dB (D-PF gain " + fmt(pf - dpf) +
                ", OPT gain " + fmt(pf - opt) + ")"});
  }
  {
    const double diff = pooled("static/gs3/dpf") - pooled("static/gs2/dpf");
    report(3, "group-size saturation",
           {std::abs(diff) <= kSaturationDb, "size3 - size2 (D-PF) = " + fmt(diff) + " dB (|.| <= " + fmt(kSaturationDb, 1) + ")"});
  }
  {
    const double reuse = pooled("reuse1/gs1/pf");
    const double stat = pooled("static/gs1/pf");
    const double adapt = pooled("adaptive/gs1/pf");
    report(4, "inter-cell ordering",
           {adapt <= stat && stat <= reuse,
            "adaptive " + fmt(adapt) + " <= static " + fmt(stat) + " <= Reuse 1 " + fmt(reuse) + " dB"});
  }
  {
    const double gain = pooled("reuse1/gs1/pf") - pooled("adaptive/gs2/opt");
    report(5, "end-to-end three-step gain",
           {gain >= kEndToEndDb, "baseline - three-step = " + fmt(gain) + " dB (>= " + fmt(kEndToEndDb, 1) + ")"});
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  bool oracles = false;
  bool trends = false;
  std::size_t frames = 2000;
  std::size_t drops = 5;
  std::uint64_t seed = 1;
  app.add_flag("--oracles", oracles, "Run criteria 6-12");
  app.add_flag("--trends", trends, "Run criteria 1-5");
  app.add_option("--frames", frames, "Frames per trend run")->capture_default_str();
  app.add_option("--drops", drops, "Drops (independent topologies) per trend run")->capture_default_str();
  app.add_option("--seed", seed, "Seed of the trend runs")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  if (!oracles && !trends) {
    oracles = trends = true;
  }
  try {
    if (oracles) {
      const std::pair<int, std::pair<std::string, std::function<Outcome()>>> suites[] = {
          {6, {"minmax split oracles", criterion6}},       {7, {"OPT relaxation bound", criterion7}},
          {8, {"entropy engine", criterion8}},             {9, {"R-D feasibility", criterion9}},
          {10, {"IPP compliance", criterion10}},           {11, {"determinism", criterion11}},
          {12, {"group-size gain curve", criterion12}},
      };
      for (const auto& [id, suite] : suites) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o = suite.second();
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.detail += " [" + fmt(s, 1) + " s]";
        report(id, suite.first, o);
      }
    }
    if (trends) {
      run_trends(frames, drops, seed);
    }
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
