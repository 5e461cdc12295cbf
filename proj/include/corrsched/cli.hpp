#pragma once

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "corrsched/config.hpp"
#include "corrsched/report.hpp"
#include "corrsched/simulator.hpp"

namespace corrsched::cli {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> frames;
  std::optional<std::size_t> drops;
  std::vector<std::string> sets; // key=value
};

inline ExperimentConfig load(const std::string& path, const Overrides& o) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : parse_config(path);
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set " + kv + ": expected key=value");
    }
    set_value(cfg, detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  if (o.seed) {
    cfg.simulation.seed = *o.seed;
  }
  if (o.frames) {
    cfg.simulation.frames = *o.frames;
  }
  if (o.drops) {
    cfg.simulation.drops = *o.drops;
  }
  cfg.validate();
  return cfg;
}

inline Metrics execute(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunInfo info;
  info.started = std::chrono::system_clock::now();
  Metrics m = run(cfg);
  info.finished = std::chrono::system_clock::now();
  emit_results(m, cfg, out_dir, info);
  return m;
}

inline std::string label_of(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

inline void print_comparison(std::ostream& out, const Comparison& cmp) {
  out << "label,seed,p95_distortion_db,p5_rate_bits,mean_rate_bits,d_p95_distortion_db,d_p5_rate_db,"
         "d_mean_rate_db\n";
  for (const auto& r : cmp.rows) {
    out << r.label << "," << r.seed << "," << fmt(r.p95_distortion_db) << "," << fmt(r.p5_rate) << ","
        << fmt(r.mean_rate) << "," << fmt(r.delta_p95_distortion_db) << "," << fmt(r.delta_p5_rate_db)
        << "," << fmt(r.delta_mean_rate_db) << "\n";
  }
}

// Entry point of the command-line tool. Returns the process exit code.
inline int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Correlated-source uplink scheduling simulator"};
  app.require_subcommand(0, 1);
  bool dump_flag = false;
  app.add_flag("--dump-defaults", dump_flag, "Print the default configuration and exit");

  Overrides ov;
  std::string out_dir = "results";
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seed", ov.seed, "Override simulation.seed");
    sub->add_option("--frames", ov.frames, "Override simulation.frames");
    sub->add_option("--drops", ov.drops, "Override simulation.drops");
    sub->add_option("--set", ov.sets, "Override any key, key=value")->take_all();
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
  };

  std::string run_cfg;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment");
  run_cmd->add_option("config", run_cfg, "Config file")->required()->check(CLI::ExistingFile);
  add_overrides(run_cmd);

  std::vector<std::string> cmp_cfgs;
  auto* cmp_cmd = app.add_subcommand("compare", "Run several configs and print a delta table");
  cmp_cmd->add_option("configs", cmp_cfgs, "Config files; the first is the reference")
      ->required()
      ->check(CLI::ExistingFile);
  add_overrides(cmp_cmd);

  std::string sweep_cfg;
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  auto* sweep_cmd = app.add_subcommand("sweep", "One-factor sweep over a config key");
  sweep_cmd->add_option("config", sweep_cfg, "Base config file (defaults if omitted)")
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--param", sweep_param, "Key path, e.g. icon.c_hir")->required();
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated values")->required()->delimiter(',');
  add_overrides(sweep_cmd);

  auto* dump_cmd = app.add_subcommand("dump-defaults", "Print the default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (dump_flag || dump_cmd->parsed()) {
      out << dump_config(ExperimentConfig{});
      return 0;
    }
    if (run_cmd->parsed()) {
      const ExperimentConfig cfg = load(run_cfg, ov);
      const Metrics m = execute(cfg, out_dir);
      out << summary_csv(m);
      out << "outputs written to " << out_dir << "\n";
      return 0;
    }
    if (cmp_cmd->parsed()) {
      std::vector<Metrics> results;
      std::vector<std::string> labels;
      results.reserve(cmp_cfgs.size());
      for (std::size_t i = 0; i < cmp_cfgs.size(); ++i) {
        const ExperimentConfig cfg = load(cmp_cfgs[i], ov);
        labels.push_back(std::to_string(i) + "_" + label_of(cmp_cfgs[i]));
        results.push_back(execute(cfg, std::filesystem::path(out_dir) / labels.back()));
      }
      std::vector<LabeledMetrics> runs;
      for (std::size_t i = 0; i < results.size(); ++i) {
        runs.push_back({labels[i], &results[i]});
      }
      const Comparison cmp = compare(runs);
      for (const auto& w : cmp.warnings) {
        err << "warning: " << w << "\n";
      }
      print_comparison(out, cmp);
      return 0;
    }
    if (sweep_cmd->parsed()) {
      const ExperimentConfig base = load(sweep_cfg, ov);
      get_value(base, sweep_param); // rejects unknown keys before any run
      std::vector<Metrics> results;
      std::vector<std::string> labels;
      results.reserve(sweep_values.size());
      for (const std::string& v : sweep_values) {
        ExperimentConfig cfg = base;
        set_value(cfg, sweep_param, v);
        cfg.validate();
        labels.push_back(sweep_param + "=" + detail::trim(v));
        results.push_back(execute(cfg, std::filesystem::path(out_dir) / labels.back()));
      }
      std::vector<LabeledMetrics> runs;
      for (std::size_t i = 0; i < results.size(); ++i) {
        runs.push_back({labels[i], &results[i]});
      }
      const Comparison cmp = compare(runs);
      for (const auto& w : cmp.warnings) {
        err << "warning: " << w << "\n";
      }
      print_comparison(out, cmp);
      return 0;
    }
    err << "error: a subcommand is required\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

} // namespace corrsched::cli
