#pragma once

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "corrsched/config.hpp"
#include "corrsched/simulator.hpp"

namespace corrsched {

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error(path.string() + ": cannot open for writing");
  }
  out << text;
  if (!out) {
    throw std::runtime_error(path.string() + ": write failed");
  }
}

// Empirical CDF rows "value,cdf" of the sorted samples; cdf = rank / n.
inline std::string cdf_csv(const std::string& column, std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  std::string out = column + ",cdf\n";
  const auto n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out += format_double(samples[i]) + "," + format_double(static_cast<double>(i + 1) / n) + "\n";
  }
  return out;
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace detail

// Percentile table plus run diagnostics, "statistic,value" rows. Empty when
// the run has no samples.
inline std::string summary_csv(const Metrics& m) {
  using detail::format_double;
  std::string out = "statistic,value\n";
  const auto dist = m.distortion_samples();
  const auto rates = m.rate_samples();
  if (dist.empty()) {
    return out;
  }
  auto row = [&](const std::string& k, double v) { out += k + "," + format_double(v) + "\n"; };
  for (double p : {0.05, 0.5, 0.95}) {
    const std::string tag = std::to_string(static_cast<int>(std::lround(p * 100)));
    row("distortion_db_p" + tag, percentile(dist, p));
  }
  for (double p : {0.05, 0.5, 0.95}) {
    const std::string tag = std::to_string(static_cast<int>(std::lround(p * 100)));
    row("rate_bits_p" + tag, percentile(rates, p));
  }
  row("rate_bits_mean", std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size()));
  double iot = 0.0;
  for (const auto& d : m.drops) {
    iot += d.iot_db;
  }
  row("iot_db_mean", iot / static_cast<double>(m.drops.size()));
  row("sources", static_cast<double>(dist.size()));
  row("drops", static_cast<double>(m.drops.size()));
  row("frames", static_cast<double>(m.frames));
  row("ipp_checks", static_cast<double>(m.compliance_checks));
  row("ipp_violations", static_cast<double>(m.compliance_violations));
  row("ipp_max_relative_excess", m.max_compliance_excess);
  row("pmin_floored_transmissions", static_cast<double>(m.floored_transmissions));
  row("pmin_floored_frames", static_cast<double>(m.floored_frames));
  row("min_region_slack", m.min_region_slack);
  row("lp_solves", static_cast<double>(m.lp_solves));
  row("lp_max_dual_infeasibility", m.lp_max_dual_infeasibility);
  row("degenerate_group_splits", static_cast<double>(m.degenerate_splits));
  return out;
}

inline std::string groups_csv(const Metrics& m) {
  std::string out = "drop,cell,group,source\n";
  for (const auto& d : m.drops) {
    for (const auto& g : d.groupings) {
      for (std::size_t gi = 0; gi < g.groups.size(); ++gi) {
        for (std::size_t id : g.groups[gi]) {
          out += std::to_string(d.drop) + "," + std::to_string(g.cell_id) + "," + std::to_string(gi) +
                 "," + std::to_string(id) + "\n";
        }
      }
    }
  }
  return out;
}

inline std::string sources_csv(const Metrics& m) {
  using detail::format_double;
  std::string out = "drop,source,cell,group,mean_rate_bits,distortion_db\n";
  for (const auto& d : m.drops) {
    for (const auto& s : d.sources) {
      out += std::to_string(d.drop) + "," + std::to_string(s.source) + "," + std::to_string(s.cell) +
             "," + std::to_string(s.group) + "," + format_double(s.mean_rate) + "," +
             format_double(s.distortion_db) + "\n";
    }
  }
  return out;
}

inline std::string series_csv(const Metrics& m) {
  using detail::format_double;
  std::string out = "drop,frame,mean_rate_bits,mean_distortion_db,max_distortion_db\n";
  for (const auto& d : m.drops) {
    for (std::size_t f = 0; f < d.series.size(); ++f) {
      const auto& s = d.series[f];
      out += std::to_string(d.drop) + "," + std::to_string(f) + "," + format_double(s.mean_rate) + "," +
             format_double(s.mean_distortion_db) + "," + format_double(s.max_distortion_db) + "\n";
    }
  }
  return out;
}

struct RunInfo {
  std::chrono::system_clock::time_point started;
  std::chrono::system_clock::time_point finished;
};

// Writes distortion_cdf.csv, rate_cdf.csv, summary.csv, sources.csv,
// groups.csv, series.csv, config.ini and manifest.json into out_dir. All
// files except the manifest (which carries timestamps) are a pure function
// of the config.
inline std::vector<std::filesystem::path> emit_results(const Metrics& m, const ExperimentConfig& cfg,
                                                       const std::filesystem::path& out_dir,
                                                       const RunInfo& info) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw std::runtime_error(out_dir.string() + ": cannot create output directory");
  }
  const std::vector<std::pair<std::string, std::string>> files = {
      {"distortion_cdf.csv", detail::cdf_csv("distortion_db", m.distortion_samples())},
      {"rate_cdf.csv", detail::cdf_csv("rate_bits", m.rate_samples())},
      {"summary.csv", summary_csv(m)},
      {"sources.csv", sources_csv(m)},
      {"groups.csv", groups_csv(m)},
      {"series.csv", series_csv(m)},
      {"config.ini", dump_config(cfg)},
  };
  std::vector<fs::path> written;
  for (const auto& [name, text] : files) {
    detail::write_file(out_dir / name, text);
    written.push_back(out_dir / name);
  }
  nlohmann::ordered_json manifest;
  manifest["config_digest"] = config_digest(cfg);
  manifest["seed"] = cfg.simulation.seed;
  manifest["tool_version"] = std::string(kToolVersion);
  manifest["started_utc"] = detail::utc_timestamp(info.started);
  manifest["finished_utc"] = detail::utc_timestamp(info.finished);
  std::vector<std::string> names;
  for (const auto& [name, text] : files) {
    names.push_back(name);
  }
  manifest["outputs"] = names;
  detail::write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  written.push_back(out_dir / "manifest.json");
  return written;
}

} // namespace corrsched
