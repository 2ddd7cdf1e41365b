#pragma once

// Reference-value recording. Large-grid regression values are written only
// after the reverse-process machinery has been checked against exhaustive
// path enumeration and dense kernel composition on small grids.

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "sdl/diffusion.hpp"
#include "sdl/errors.hpp"
#include "sdl/experiment/brute_force.hpp"
#include "sdl/experiment/config.hpp"
#include "sdl/experiment/runs.hpp"
#include "sdl/metrics.hpp"

namespace sdl {

inline const std::vector<std::string>& family_preset_names() {
  static const std::vector<std::string> names{"gaussian", "bimodal", "fade_uniform",
                                              "fade_mixture"};
  return names;
}

/// The four noise families of the grid study on the 41 x 41 Swiss-roll setup
/// with T = 40: Gaussian and bimodal use sigma_t = 0.03 + 0.04 t/T, the fade
/// families use p_t = 0.01 + 0.99 t/T.
inline ExperimentConfig family_preset(std::string_view name) {
  ExperimentConfig c;
  if (name == "gaussian") return c;
  if (name == "bimodal") {
    c.family = NoiseFamily::bimodal;
    return c;
  }
  if (name == "fade_uniform" || name == "fade_mixture") {
    c.family = NoiseFamily::fade;
    c.schedule_a = 0.01;
    c.schedule_b = 0.99;
    c.fade_target = name == "fade_uniform" ? FadeTarget::uniform : FadeTarget::mixture;
    return c;
  }
  throw ConfigError("preset", "unknown family preset `" + std::string(name) + "`");
}

/// Gaussian schedule of the step-count sweep: sigma_t = 0.01 + 0.04 t/T.
inline ExperimentConfig sweep_preset() {
  ExperimentConfig c;
  c.schedule_a = 0.01;
  c.schedule_b = 0.04;
  c.snapshots = std::vector<std::size_t>{};
  return c;
}

struct ValidationReport {
  double max_path_enumeration_error{0.0};
  double max_dense_vs_matrix_free_error{0.0};
  double max_detailed_balance_residual{0.0};
};

namespace detail {

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r = std::max(r, std::abs(a[i] - b[i]));
  return r;
}

inline ExperimentConfig shrink(ExperimentConfig c, std::size_t n, std::size_t steps) {
  c.nx = n;
  c.ny = n;
  c.steps = steps;
  c.snapshots = std::vector<std::size_t>{};
  return c;
}

}  // namespace detail

/// Small-grid checks for every family preset:
///  * 3 x 3, T = 3: p_s from path enumeration vs the dense and matrix-free
///    reverse passes;
///  * 12 x 12, T = 10: matrix-free pass vs explicit composed sampling
///    kernels, and detailed balance of each composed kernel.
inline ValidationReport validate_small_grids() {
  ValidationReport rep;
  for (const auto& name : family_preset_names()) {
    {
      const ForwardProcess fwd = build_forward(detail::shrink(family_preset(name), 3, 3));
      std::vector<brute::Matrix> ks;
      for (std::size_t t = 1; t <= fwd.steps(); ++t) ks.push_back(brute::to_matrix(*fwd.kernels().step(t)));
      const auto q0 = fwd.data().mass();
      const auto qn = fwd.noise().mass();
      auto paths = brute::reverse_by_paths(ks, {q0.begin(), q0.end()}, {qn.begin(), qn.end()});
      const Distribution oracle(fwd.grid(), std::move(paths));
      const Distribution mf = reverse_distribution(fwd);
      const Distribution dense = reverse_distribution(make_reverse_sampler(fwd));
      rep.max_path_enumeration_error =
          std::max({rep.max_path_enumeration_error, detail::max_abs_diff(oracle.mass(), mf.mass()),
                    detail::max_abs_diff(oracle.mass(), dense.mass())});
    }
    {
      const ForwardProcess fwd = build_forward(detail::shrink(family_preset(name), 12, 10));
      const ReverseSampler sampler = make_reverse_sampler(fwd);
      Distribution composed = fwd.noise();
      for (std::size_t t = fwd.steps(); t >= 1; --t) {
        const auto kernel = fwd.kernels().step(t);
        const TransitionKernel ps = materialize_sampling_kernel(sampler.posterior(t), *kernel);
        rep.max_detailed_balance_residual = std::max(
            rep.max_detailed_balance_residual, detailed_balance_residual(ps, fwd.marginal(t - 1)));
        composed = ps.propagate(composed);
      }
      rep.max_dense_vs_matrix_free_error =
          std::max(rep.max_dense_vs_matrix_free_error,
                   detail::max_abs_diff(composed.mass(), reverse_distribution(fwd).mass()));
    }
  }
  return rep;
}

/// Numeric `key = value` entries of a reference file; other lines are skipped.
inline std::map<std::string, double> read_reference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open reference file `" + path + "`");
  std::map<std::string, double> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) continue;
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    double v{};
    const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) continue;
    out[detail::trim(std::string_view(t).substr(0, eq))] = v;
  }
  return out;
}

/// Validates on small grids, then computes D_KL(q_d || p_s) for each family
/// preset and writes `key = value` lines to `out`. Throws NumericalError when
/// validation fails; nothing is written in that case.
inline std::map<std::string, double> record_reference(std::ostream& out,
                                                      std::ostream* log = nullptr) {
  const ValidationReport v = validate_small_grids();
  if (log) {
    *log << "path enumeration error " << v.max_path_enumeration_error << '\n'
         << "dense vs matrix-free error " << v.max_dense_vs_matrix_free_error << '\n'
         << "detailed balance residual " << v.max_detailed_balance_residual << '\n';
  }
  if (!(v.max_path_enumeration_error < 1e-12) || !(v.max_dense_vs_matrix_free_error < 1e-12) ||
      !(v.max_detailed_balance_residual < 1e-10)) {
    throw NumericalError("small-grid validation failed; refusing to record reference values");
  }
  std::map<std::string, double> values;
  values["validation.path_enumeration_error"] = v.max_path_enumeration_error;
  values["validation.dense_vs_matrix_free_error"] = v.max_dense_vs_matrix_free_error;
  values["validation.detailed_balance_residual"] = v.max_detailed_balance_residual;
  for (const auto& name : family_preset_names()) {
    const ForwardProcess fwd = build_forward(family_preset(name));
    const double kl = reconstruction_error(fwd, reverse_distribution(fwd));
    values["kl." + name] = kl;
    if (log) *log << name << " KL " << kl << '\n';
  }
  out << "# D_KL(q_d || p_s) in nats on the 41x41 grid, T = 40; written by `sdl --record-reference`\n";
  out << "tool_version = " << kToolVersion << '\n';
  for (const auto& [k, val] : values) out << k << " = " << detail::format_g17(val) << '\n';
  return values;
}

}  // namespace sdl
