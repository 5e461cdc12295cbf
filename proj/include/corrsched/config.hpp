#pragma once

#include <charconv>
#include <filesystem>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "corrsched/error.hpp"
#include "corrsched/simulator.hpp"

namespace corrsched {

inline constexpr std::string_view kToolVersion = "1.0.0";

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError(std::string(key) + ": expected " +
                      (std::is_integral_v<T> ? "a non-negative integer" : "a number") + ", got '" +
                      s + "'");
  }
  return value;
}

template <typename E>
struct EnumName {
  E value;
  std::string_view name;
};

inline constexpr EnumName<InterCellMode> kModeNames[] = {
    {InterCellMode::Reuse1, "reuse1"},
    {InterCellMode::StaticIcon, "static"},
    {InterCellMode::AdaptiveIcon, "adaptive"}};
inline constexpr EnumName<GroupingMethod> kMethodNames[] = {
    {GroupingMethod::Distance, "distance"}, {GroupingMethod::Distortion, "distortion"}};
inline constexpr EnumName<SchedulerKind> kSchedulerNames[] = {
    {SchedulerKind::Pf, "pf"}, {SchedulerKind::Dpf, "dpf"}, {SchedulerKind::Opt, "opt"}};

template <typename E, std::size_t N>
E parse_enum(std::string_view key, std::string_view text, const EnumName<E> (&names)[N]) {
  const std::string s = trim(text);
  std::string options;
  for (const auto& n : names) {
    if (s == n.name) {
      return n.value;
    }
    options += (options.empty() ? "" : ", ") + std::string(n.name);
  }
  throw ConfigError(std::string(key) + ": expected one of " + options + ", got '" + s + "'");
}

template <typename E, std::size_t N>
std::string enum_name(E v, const EnumName<E> (&names)[N]) {
  for (const auto& n : names) {
    if (n.value == v) {
      return std::string(n.name);
    }
  }
  return "?";
}

struct Field {
  std::string path; // section.key
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// `member` maps a config (const or not) to a reference to one of its values.
template <typename Get>
Field real_field(std::string path, Get member) {
  return {path,
          [path, member](ExperimentConfig& c, std::string_view v) {
            member(c) = parse_number<double>(path, v);
          },
          [member](const ExperimentConfig& c) {
            return format_double(member(c));
          }};
}

template <typename T, typename Get>
Field integer_field(std::string path, Get member) {
  return {path,
          [path, member](ExperimentConfig& c, std::string_view v) {
            member(c) = parse_number<T>(path, v);
          },
          [member](const ExperimentConfig& c) {
            return std::to_string(member(c));
          }};
}

template <typename E, std::size_t N, typename Get>
Field enum_field(std::string path, Get member, const EnumName<E> (&names)[N]) {
  return {path,
          [path, member, &names](ExperimentConfig& c, std::string_view v) {
            member(c) = parse_enum(path, v, names);
          },
          [member, &names](const ExperimentConfig& c) {
            return enum_name(member(c), names);
          }};
}

// Every configurable key, in dump order.
inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      integer_field<std::size_t>("topology.num_cells", [](auto& c) -> auto& { return c.topology.num_cells; }),
      integer_field<std::size_t>("topology.users_per_cell",
                                 [](auto& c) -> auto& { return c.topology.users_per_cell; }),
      real_field("topology.site_distance_m", [](auto& c) -> auto& { return c.topology.site_distance_m; }),
      real_field("source_model.variance", [](auto& c) -> auto& { return c.source_model.variance; }),
      real_field("source_model.theta", [](auto& c) -> auto& { return c.source_model.theta; }),
      real_field("source_model.mean", [](auto& c) -> auto& { return c.source_model.mean; }),
      real_field("radio.bandwidth_hz", [](auto& c) -> auto& { return c.radio.bandwidth_hz; }),
      integer_field<std::size_t>("radio.channels", [](auto& c) -> auto& { return c.radio.channels; }),
      real_field("radio.noise_psd_w_per_hz", [](auto& c) -> auto& { return c.radio.noise_psd_w_per_hz; }),
      real_field("radio.p_max_w", [](auto& c) -> auto& { return c.radio.p_max_w; }),
      real_field("radio.p_min_w", [](auto& c) -> auto& { return c.radio.p_min_w; }),
      enum_field("icon.mode", [](auto& c) -> auto& { return c.icon.mode; }, kModeNames),
      integer_field<std::size_t>("icon.c_hir", [](auto& c) -> auto& { return c.icon.c_hir; }),
      real_field("icon.p_high_w", [](auto& c) -> auto& { return c.icon.p_high_w; }),
      real_field("icon.p_low_w", [](auto& c) -> auto& { return c.icon.p_low_w; }),
      real_field("icon.alpha", [](auto& c) -> auto& { return c.icon.alpha; }),
      real_field("icon.beta", [](auto& c) -> auto& { return c.icon.beta; }),
      integer_field<std::size_t>("icon.adaptation_period",
                                 [](auto& c) -> auto& { return c.icon.adaptation_period; }),
      enum_field("grouping.method", [](auto& c) -> auto& { return c.grouping.method; }, kMethodNames),
      integer_field<std::size_t>("grouping.group_size", [](auto& c) -> auto& { return c.grouping.group_size; }),
      integer_field<std::size_t>("grouping.trials", [](auto& c) -> auto& { return c.grouping.trials; }),
      integer_field<std::size_t>("grouping.n_outer", [](auto& c) -> auto& { return c.grouping.n_outer; }),
      integer_field<std::size_t>("grouping.warmup_frames",
                                 [](auto& c) -> auto& { return c.grouping.warmup_frames; }),
      enum_field("scheduler.type", [](auto& c) -> auto& { return c.scheduler.kind; }, kSchedulerNames),
      real_field("scheduler.alpha", [](auto& c) -> auto& { return c.scheduler.alpha; }),
      integer_field<std::size_t>("scheduler.window", [](auto& c) -> auto& { return c.scheduler.window; }),
      integer_field<std::size_t>("scheduler.opt_period", [](auto& c) -> auto& { return c.scheduler.opt_period; }),
      integer_field<std::size_t>("simulation.frames", [](auto& c) -> auto& { return c.simulation.frames; }),
      integer_field<std::uint64_t>("simulation.seed", [](auto& c) -> auto& { return c.simulation.seed; }),
      integer_field<std::size_t>("simulation.drops", [](auto& c) -> auto& { return c.simulation.drops; }),
  };
  return table;
}

inline const Field& find_field(std::string_view path) {
  for (const Field& f : fields()) {
    if (f.path == path) {
      return f;
    }
  }
  throw ConfigError(std::string(path) + ": unknown key");
}

} // namespace detail

// Sets one value by its dotted key path ("source_model.theta"). Does not
// validate cross-field constraints; call validate() afterwards.
inline void set_value(ExperimentConfig& cfg, std::string_view path, std::string_view value) {
  detail::find_field(path).set(cfg, value);
}

inline std::string get_value(const ExperimentConfig& cfg, std::string_view path) {
  return detail::find_field(path).get(cfg);
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : detail::fields()) {
    keys.push_back(f.path);
  }
  return keys;
}

// INI text with sections; keys absent from the text keep their defaults.
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<text>") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(section + ": key outside of a section");
    }
    for (const auto& [key, node] : body) {
      set_value(cfg, section + "." + key, node.get_value<std::string>());
    }
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config(const std::filesystem::path& file) {
  const std::string path = file.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError(path + ": cannot open config file");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

// Canonical INI form of a resolved config: every key, fixed order.
inline std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string current;
  for (const auto& f : detail::fields()) {
    const auto dot = f.path.find('.');
    const std::string section = f.path.substr(0, dot);
    if (section != current) {
      out += (current.empty() ? "" : "\n") + ("[" + section + "]\n");
      current = section;
    }
    out += f.path.substr(dot + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

// SHA-256 (hex) of the canonical dump.
inline std::string config_digest(const ExperimentConfig& cfg) {
  const std::string text = dump_config(cfg);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return os.str();
}

} // namespace corrsched
