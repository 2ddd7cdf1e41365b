#pragma once

// Flat `key = value` experiment configuration with dotted section prefixes,
// e.g. `schedule.T = 40`. Lines starting with '#' are comments. Unknown keys
// are rejected. Serialization writes every key in a fixed order with
// shortest round-trip number formatting, so parse(serialize(c)) == c.

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "sdl/errors.hpp"
#include "sdl/grid.hpp"
#include "sdl/kernels.hpp"
#include "sdl/metrics.hpp"

namespace sdl {

enum class DataKind { swiss_roll, mixture, uniform };
enum class FadeTarget { uniform, mixture };
enum class LikelihoodKind { gaussian, bimodal, fade, identity };

inline std::vector<MixtureComponent> default_target_mixture() {
  return {{{-0.25, -0.25}, 0.1, 1.0}, {{0.25, 0.25}, 0.1, 1.0}, {{0.25, -0.25}, 0.1, 1.0}};
}

inline std::vector<MixtureComponent> default_two_blob_prior() {
  return {{{-0.2, -0.2}, 0.12, 1.0}, {{0.2, 0.2}, 0.12, 1.0}};
}

struct SerialSettings {
  DataKind prior{DataKind::mixture};
  std::vector<MixtureComponent> prior_mixture{default_two_blob_prior()};
  LikelihoodKind likelihood{LikelihoodKind::gaussian};
  double sigma{0.1};
  double offset{0.07};
  double p{0.3};
  FadeTarget fade_target{FadeTarget::uniform};
  std::size_t n_steps{1'000'000};
  std::size_t burn_in{1'000};
  /// (ix, iy) start bin; uniform draw when empty.
  std::optional<std::array<std::size_t, 2>> start;
  bool write_trace{true};

  friend bool operator==(const SerialSettings&, const SerialSettings&) = default;
};

struct ExperimentConfig {
  std::size_t nx{41};
  std::size_t ny{41};
  Bounds bounds{};
  bool wrapped{true};

  DataKind data{DataKind::swiss_roll};
  SwissRollParams swiss{};
  std::vector<MixtureComponent> data_mixture{default_target_mixture()};

  NoiseFamily family{NoiseFamily::gaussian};
  double bimodal_offset{0.07};
  std::optional<double> bimodal_sigma;
  FadeTarget fade_target{FadeTarget::uniform};
  std::vector<MixtureComponent> target_mixture{default_target_mixture()};

  double schedule_a{0.03};
  double schedule_b{0.04};
  std::size_t steps{40};

  /// Steps at which to dump marginals and reverse distributions. Empty
  /// optional means five evenly spaced steps including 0 and T.
  std::optional<std::vector<std::size_t>> snapshots;

  MetricOptions metrics{};
  std::uint64_t seed{0};
  std::string output_dir{"out"};

  SerialSettings serial{};

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline std::vector<std::size_t> default_snapshots(std::size_t steps) {
  std::vector<std::size_t> s;
  for (std::size_t k = 0; k <= 4; ++k) {
    const std::size_t v = (k * steps + 2) / 4;
    if (s.empty() || s.back() != v) s.push_back(v);
  }
  s.back() = steps;
  return s;
}

inline std::vector<std::size_t> effective_snapshots(const ExperimentConfig& c) {
  return c.snapshots ? *c.snapshots : default_snapshots(c.steps);
}

namespace detail {

template <class E>
struct EnumNames {
  static const std::vector<std::pair<E, std::string_view>>& get();
};

template <>
inline const std::vector<std::pair<DataKind, std::string_view>>& EnumNames<DataKind>::get() {
  static const std::vector<std::pair<DataKind, std::string_view>> v{
      {DataKind::swiss_roll, "swiss_roll"}, {DataKind::mixture, "mixture"}, {DataKind::uniform, "uniform"}};
  return v;
}
template <>
inline const std::vector<std::pair<FadeTarget, std::string_view>>& EnumNames<FadeTarget>::get() {
  static const std::vector<std::pair<FadeTarget, std::string_view>> v{
      {FadeTarget::uniform, "uniform"}, {FadeTarget::mixture, "mixture"}};
  return v;
}
template <>
inline const std::vector<std::pair<NoiseFamily, std::string_view>>& EnumNames<NoiseFamily>::get() {
  static const std::vector<std::pair<NoiseFamily, std::string_view>> v{
      {NoiseFamily::gaussian, "gaussian"}, {NoiseFamily::bimodal, "bimodal"}, {NoiseFamily::fade, "fade"}};
  return v;
}
template <>
inline const std::vector<std::pair<LikelihoodKind, std::string_view>>&
EnumNames<LikelihoodKind>::get() {
  static const std::vector<std::pair<LikelihoodKind, std::string_view>> v{
      {LikelihoodKind::gaussian, "gaussian"},
      {LikelihoodKind::bimodal, "bimodal"},
      {LikelihoodKind::fade, "fade"},
      {LikelihoodKind::identity, "identity"}};
  return v;
}

template <class E>
std::string enum_name(E e) {
  for (const auto& [k, name] : EnumNames<E>::get()) {
    if (k == e) return std::string(name);
  }
  return "?";
}

template <class E>
E parse_enum(const std::string& field, std::string_view text) {
  std::string options;
  for (const auto& [k, name] : EnumNames<E>::get()) {
    if (name == text) return k;
    options += options.empty() ? "" : "|";
    options += name;
  }
  throw ConfigError(field, "expected one of " + options + ", got `" + std::string(text) + "`");
}

inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& field, const std::string& text) {
  double v{};
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(v)) {
    throw ConfigError(field, "expected a number, got `" + text + "`");
  }
  return v;
}

inline std::uint64_t parse_uint(const std::string& field, const std::string& text) {
  std::uint64_t v{};
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw ConfigError(field, "expected a non-negative integer, got `" + text + "`");
  }
  return v;
}

inline bool parse_bool(const std::string& field, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(field, "expected true or false, got `" + text + "`");
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

inline std::vector<std::size_t> parse_index_list(const std::string& field, const std::string& text) {
  std::vector<std::size_t> out;
  if (trim(text).empty()) return out;
  for (const auto& part : split(text, ',')) out.push_back(parse_uint(field, part));
  return out;
}

inline std::string format_index_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
  return s;
}

/// "x y sigma weight; x y sigma weight; ..."
inline std::vector<MixtureComponent> parse_mixture(const std::string& field,
                                                   const std::string& text) {
  std::vector<MixtureComponent> out;
  for (const auto& part : split(text, ';')) {
    if (part.empty()) continue;
    std::istringstream in(part);
    std::string x, y, s, w, extra;
    if (!(in >> x >> y >> s >> w) || (in >> extra)) {
      throw ConfigError(field, "mixture component must be `x y sigma weight`, got `" + part + "`");
    }
    out.push_back({{parse_double(field, x), parse_double(field, y)}, parse_double(field, s),
                   parse_double(field, w)});
  }
  if (out.empty()) throw ConfigError(field, "mixture needs at least one component");
  return out;
}

inline std::string format_mixture(const std::vector<MixtureComponent>& m) {
  std::string s;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (k) s += "; ";
    s += format_number(m[k].center.x) + " " + format_number(m[k].center.y) + " " +
         format_number(m[k].sigma) + " " + format_number(m[k].weight);
  }
  return s;
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  auto num = [](double C::*m, const char* key) {
    return Field{key, [m](const C& c) { return format_number(c.*m); },
                 [m, key](C& c, const std::string& v) { c.*m = parse_double(key, v); }};
  };
  auto count = [](std::size_t C::*m, const char* key) {
    return Field{key, [m](const C& c) { return std::to_string(c.*m); },
                 [m, key](C& c, const std::string& v) { c.*m = parse_uint(key, v); }};
  };
  static const std::vector<Field> f{
      count(&C::nx, "grid.nx"),
      count(&C::ny, "grid.ny"),
      {"grid.x_min", [](const C& c) { return format_number(c.bounds.x_min); },
       [](C& c, const std::string& v) { c.bounds.x_min = parse_double("grid.x_min", v); }},
      {"grid.x_max", [](const C& c) { return format_number(c.bounds.x_max); },
       [](C& c, const std::string& v) { c.bounds.x_max = parse_double("grid.x_max", v); }},
      {"grid.y_min", [](const C& c) { return format_number(c.bounds.y_min); },
       [](C& c, const std::string& v) { c.bounds.y_min = parse_double("grid.y_min", v); }},
      {"grid.y_max", [](const C& c) { return format_number(c.bounds.y_max); },
       [](C& c, const std::string& v) { c.bounds.y_max = parse_double("grid.y_max", v); }},
      {"grid.wrapped", [](const C& c) { return std::string(c.wrapped ? "true" : "false"); },
       [](C& c, const std::string& v) { c.wrapped = parse_bool("grid.wrapped", v); }},
      {"data.kind", [](const C& c) { return enum_name(c.data); },
       [](C& c, const std::string& v) { c.data = parse_enum<DataKind>("data.kind", v); }},
      {"data.turns", [](const C& c) { return format_number(c.swiss.turns); },
       [](C& c, const std::string& v) { c.swiss.turns = parse_double("data.turns", v); }},
      {"data.inner_radius", [](const C& c) { return format_number(c.swiss.inner_radius); },
       [](C& c, const std::string& v) {
         c.swiss.inner_radius = parse_double("data.inner_radius", v);
       }},
      {"data.outer_radius", [](const C& c) { return format_number(c.swiss.outer_radius); },
       [](C& c, const std::string& v) {
         c.swiss.outer_radius = parse_double("data.outer_radius", v);
       }},
      {"data.thickness", [](const C& c) { return format_number(c.swiss.thickness); },
       [](C& c, const std::string& v) { c.swiss.thickness = parse_double("data.thickness", v); }},
      {"data.curve_samples", [](const C& c) { return std::to_string(c.swiss.curve_samples); },
       [](C& c, const std::string& v) {
         c.swiss.curve_samples = parse_uint("data.curve_samples", v);
       }},
      {"data.mixture", [](const C& c) { return format_mixture(c.data_mixture); },
       [](C& c, const std::string& v) { c.data_mixture = parse_mixture("data.mixture", v); }},
      {"family.name", [](const C& c) { return enum_name(c.family); },
       [](C& c, const std::string& v) { c.family = parse_enum<NoiseFamily>("family.name", v); }},
      num(&C::bimodal_offset, "family.offset"),
      {"family.sigma",
       [](const C& c) { return c.bimodal_sigma ? format_number(*c.bimodal_sigma) : std::string(); },
       [](C& c, const std::string& v) {
         if (v.empty()) {
           c.bimodal_sigma.reset();
         } else {
           c.bimodal_sigma = parse_double("family.sigma", v);
         }
       }},
      {"family.target", [](const C& c) { return enum_name(c.fade_target); },
       [](C& c, const std::string& v) {
         c.fade_target = parse_enum<FadeTarget>("family.target", v);
       }},
      {"family.target_mixture", [](const C& c) { return format_mixture(c.target_mixture); },
       [](C& c, const std::string& v) {
         c.target_mixture = parse_mixture("family.target_mixture", v);
       }},
      num(&C::schedule_a, "schedule.a"),
      num(&C::schedule_b, "schedule.b"),
      count(&C::steps, "schedule.T"),
      {"snapshots",
       [](const C& c) { return c.snapshots ? format_index_list(*c.snapshots) : std::string("default"); },
       [](C& c, const std::string& v) {
         if (v == "default") {
           c.snapshots.reset();
         } else {
           c.snapshots = parse_index_list("snapshots", v);
         }
       }},
      {"metrics.epsilon_floor", [](const C& c) { return format_number(c.metrics.epsilon_floor); },
       [](C& c, const std::string& v) {
         c.metrics.epsilon_floor = parse_double("metrics.epsilon_floor", v);
       }},
      {"seed", [](const C& c) { return std::to_string(c.seed); },
       [](C& c, const std::string& v) { c.seed = parse_uint("seed", v); }},
      {"output_dir", [](const C& c) { return c.output_dir; },
       [](C& c, const std::string& v) { c.output_dir = v; }},
      {"serial.prior", [](const C& c) { return enum_name(c.serial.prior); },
       [](C& c, const std::string& v) { c.serial.prior = parse_enum<DataKind>("serial.prior", v); }},
      {"serial.prior_mixture", [](const C& c) { return format_mixture(c.serial.prior_mixture); },
       [](C& c, const std::string& v) {
         c.serial.prior_mixture = parse_mixture("serial.prior_mixture", v);
       }},
      {"serial.likelihood", [](const C& c) { return enum_name(c.serial.likelihood); },
       [](C& c, const std::string& v) {
         c.serial.likelihood = parse_enum<LikelihoodKind>("serial.likelihood", v);
       }},
      {"serial.sigma", [](const C& c) { return format_number(c.serial.sigma); },
       [](C& c, const std::string& v) { c.serial.sigma = parse_double("serial.sigma", v); }},
      {"serial.offset", [](const C& c) { return format_number(c.serial.offset); },
       [](C& c, const std::string& v) { c.serial.offset = parse_double("serial.offset", v); }},
      {"serial.p", [](const C& c) { return format_number(c.serial.p); },
       [](C& c, const std::string& v) { c.serial.p = parse_double("serial.p", v); }},
      {"serial.target", [](const C& c) { return enum_name(c.serial.fade_target); },
       [](C& c, const std::string& v) {
         c.serial.fade_target = parse_enum<FadeTarget>("serial.target", v);
       }},
      {"serial.n_steps", [](const C& c) { return std::to_string(c.serial.n_steps); },
       [](C& c, const std::string& v) { c.serial.n_steps = parse_uint("serial.n_steps", v); }},
      {"serial.burn_in", [](const C& c) { return std::to_string(c.serial.burn_in); },
       [](C& c, const std::string& v) { c.serial.burn_in = parse_uint("serial.burn_in", v); }},
      {"serial.start",
       [](const C& c) {
         return c.serial.start ? std::to_string((*c.serial.start)[0]) + "," +
                                     std::to_string((*c.serial.start)[1])
                               : std::string();
       },
       [](C& c, const std::string& v) {
         if (v.empty()) {
           c.serial.start.reset();
           return;
         }
         auto idx = parse_index_list("serial.start", v);
         if (idx.size() != 2) throw ConfigError("serial.start", "expected `ix,iy`");
         c.serial.start = std::array<std::size_t, 2>{idx[0], idx[1]};
       }},
      {"serial.write_trace",
       [](const C& c) { return std::string(c.serial.write_trace ? "true" : "false"); },
       [](C& c, const std::string& v) {
         c.serial.write_trace = parse_bool("serial.write_trace", v);
       }},
  };
  return f;
}

}  // namespace detail

inline std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& f : detail::fields()) out += f.key + " = " + f.get(c) + "\n";
  return out;
}

/// Applies `key = value` lines on top of `base`.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {}) {
  std::map<std::string, const detail::Field*> index;
  for (const auto& f : detail::fields()) index[f.key] = &f;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno), "expected `key = value`");
    }
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    auto it = index.find(key);
    if (it == index.end()) throw ConfigError(key, "unknown configuration key");
    it->second->set(base, value);
  }
  return base;
}

inline ExperimentConfig parse_config_string(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream in(text);
  return parse_config(in, std::move(base));
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open `" + path + "`");
  return parse_config(in);
}

/// Checks cross-field constraints; errors name the offending field.
inline void validate(const ExperimentConfig& c) {
  try {
    (void)make_grid(c.nx, c.ny, c.bounds, c.wrapped);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("grid", e.what());
  }
  if (c.steps < 1) throw ConfigError("schedule.T", "must be >= 1");
  try {
    (void)linear_schedule(c.schedule_a, c.schedule_b, c.steps, c.family);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("schedule", e.what());
  }
  if (c.family == NoiseFamily::bimodal && !(c.bimodal_offset >= 0.0)) {
    throw ConfigError("family.offset", "must be >= 0");
  }
  if (c.bimodal_sigma && !(*c.bimodal_sigma > 0.0)) {
    throw ConfigError("family.sigma", "must be positive");
  }
  for (std::size_t s : effective_snapshots(c)) {
    if (s > c.steps) {
      throw ConfigError("snapshots", "step " + std::to_string(s) + " outside 0.." +
                                         std::to_string(c.steps));
    }
  }
  try {
    validate(c.metrics);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("metrics.epsilon_floor", e.what());
  }
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
}

}  // namespace sdl
