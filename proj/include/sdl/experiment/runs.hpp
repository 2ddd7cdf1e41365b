#pragma once

// Experiment drivers: one forward/reverse run, a sweep over step counts, and
// the serial-reproduction demo. Each writes its files plus a `manifest.txt`
// (key = value) into the configured output directory.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sdl/diffusion.hpp"
#include "sdl/experiment/config.hpp"
#include "sdl/experiment/heatmap.hpp"
#include "sdl/grid.hpp"
#include "sdl/kernels.hpp"
#include "sdl/metrics.hpp"
#include "sdl/serial.hpp"
#include "sdl/version.hpp"

namespace sdl {

namespace fs = std::filesystem;

class RunManifest {
 public:
  RunManifest() = default;
  explicit RunManifest(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& output_dir() const noexcept { return dir_; }

  void set(const std::string& key, std::string value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = std::move(value);
        return;
      }
    }
    entries_.emplace_back(key, std::move(value));
  }
  void set_number(const std::string& key, double v) { set(key, detail::format_g17(v)); }

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
      if (k == key) return v;
    }
    return std::nullopt;
  }

  double number(const std::string& key) const {
    auto v = get(key);
    if (!v) throw std::out_of_range("manifest has no key `" + key + "`");
    return std::stod(*v);
  }

  void add_file(std::string name) { files_.push_back(std::move(name)); }
  const std::vector<std::string>& files() const noexcept { return files_; }
  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept {
    return entries_;
  }

  void set_duration(double seconds) { duration_ = seconds; }

  /// The manifest text. Timing is the only non-deterministic line and is
  /// emitted last.
  std::string render() const {
    std::ostringstream out;
    out << "tool_version = " << kToolVersion << '\n';
    for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
    out << "files = ";
    for (std::size_t i = 0; i < files_.size(); ++i) out << (i ? "," : "") << files_[i];
    out << '\n';
    out << "duration_seconds = " << detail::format_g17(duration_) << '\n';
    return out.str();
  }

  void write() const {
    std::ofstream out(dir_ / "manifest.txt", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest in `" + dir_.string() + "`");
    out << render();
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<std::string> files_;
  double duration_{0.0};
};

namespace detail {

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create `" + dir.string() + "`: " + ec.message());
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open `" + path.string() + "` for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing `" + path.string() + "`");
}

inline void write_distribution(RunManifest& m, const std::string& stem, const Distribution& d) {
  std::ostringstream csv;
  write_distribution_csv(csv, d);
  write_text(m.output_dir() / (stem + ".csv"), csv.str());
  render_heatmap(d, (m.output_dir() / (stem + ".pgm")).string());
  m.add_file(stem + ".csv");
  m.add_file(stem + ".pgm");
}

inline void echo_config(RunManifest& m, const ExperimentConfig& c) {
  std::istringstream in(serialize_config(c));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    m.set("config." + line.substr(0, eq), line.substr(eq + 3));
  }
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

inline GridSpec grid_from(const ExperimentConfig& c) {
  return make_grid(c.nx, c.ny, c.bounds, c.wrapped);
}

inline Distribution distribution_from(const GridSpec& grid, DataKind kind,
                                      const SwissRollParams& swiss,
                                      const std::vector<MixtureComponent>& mixture) {
  switch (kind) {
    case DataKind::swiss_roll: return swiss_roll_distribution(grid, swiss);
    case DataKind::mixture: return gaussian_mixture_distribution(grid, mixture);
    case DataKind::uniform: return uniform_distribution(grid);
  }
  throw std::logic_error("unknown data kind");
}

inline Distribution data_distribution(const ExperimentConfig& c, const GridSpec& grid) {
  try {
    return distribution_from(grid, c.data, c.swiss, c.data_mixture);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("data", e.what());
  }
}

inline NoiseSpec noise_from(const ExperimentConfig& c, const GridSpec& grid) {
  NoiseSpec n;
  n.schedule = linear_schedule(c.schedule_a, c.schedule_b, c.steps, c.family);
  n.bimodal_offset = c.bimodal_offset;
  n.bimodal_sigma = c.bimodal_sigma;
  if (c.family == NoiseFamily::fade) {
    n.fade_target = c.fade_target == FadeTarget::uniform
                        ? uniform_distribution(grid)
                        : gaussian_mixture_distribution(grid, c.target_mixture);
  }
  return n;
}

/// Forward chain for a config; kernels are rebuilt per access on large grids.
inline ForwardProcess build_forward(const ExperimentConfig& c) {
  validate(c);
  const GridSpec grid = grid_from(c);
  const NoiseSpec noise = noise_from(c, grid);
  auto kernels = KernelSequence::from_noise(grid, noise, grid.size() <= 256);
  return forward_marginals(data_distribution(c, grid), std::move(kernels),
                           stationary_noise(grid, noise));
}

inline std::vector<BinIndex> probe_bins(const GridSpec& grid) {
  std::vector<BinIndex> out;
  const std::size_t n = grid.size();
  const std::size_t count = n <= 256 ? n : 16;
  for (std::size_t k = 0; k < count; ++k) out.push_back(BinIndex{k * n / count});
  return out;
}

inline std::vector<std::size_t> probe_steps(std::size_t steps) {
  std::vector<std::size_t> s{1, (steps + 1) / 2, steps};
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

/// Builds the forward chain and the exact reverse process, writes snapshot
/// CSV/PGM pairs, `steps.csv`, and the manifest.
inline RunManifest run_forward_reverse(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  validate(config);
  const ForwardProcess fwd = build_forward(config);
  const auto rev = reverse_marginals(fwd);
  const std::size_t steps = fwd.steps();

  RunManifest m(config.output_dir);
  detail::ensure_dir(m.output_dir());
  detail::echo_config(m, config);

  const auto profile = approximate_stationarity_profile(fwd);
  double db = 0.0;
  const auto probes = probe_bins(fwd.grid());
  for (std::size_t t : probe_steps(steps)) {
    PosteriorOperator post(fwd.kernels().step(t), fwd.marginal(t - 1), t);
    db = std::max(db, detailed_balance_probe(post, fwd.marginal(t - 1), probes));
  }

  m.set_number("reconstruction_error", reconstruction_error(fwd, rev.front(), config.metrics));
  m.set_number("inversion_complexity", inversion_complexity(fwd, config.metrics));
  m.set_number("max_stationarity_residual", *std::max_element(profile.begin(), profile.end()));
  m.set_number("max_detailed_balance_residual", db);
  m.set_number("forward_tv_to_noise", total_variation(fwd.marginal(steps), fwd.noise()));
  m.set_number("reverse_tv_to_data", total_variation(rev.front(), fwd.data()));

  std::ostringstream table;
  table << "t,param,stationarity_residual,kl_consecutive,reverse_tv_to_marginal\n";
  for (std::size_t t = 1; t <= steps; ++t) {
    table << t << ',' << detail::format_g17(linear_schedule(config.schedule_a, config.schedule_b,
                                                            steps, config.family)
                                                .at_step(t))
          << ',' << detail::format_g17(profile[t - 1]) << ','
          << detail::format_g17(kl_divergence(fwd.marginal(t), fwd.marginal(t - 1), config.metrics))
          << ',' << detail::format_g17(total_variation(rev[t - 1], fwd.marginal(t - 1))) << '\n';
  }
  detail::write_text(m.output_dir() / "steps.csv", table.str());
  m.add_file("steps.csv");

  for (std::size_t k : effective_snapshots(config)) {
    detail::write_distribution(m, "marginal_t" + std::to_string(k), fwd.marginal(k));
    detail::write_distribution(m, "reverse_t" + std::to_string(k), rev[k]);
  }

  m.set_duration(detail::seconds_since(t0));
  m.write();
  return m;
}

/// Worker count: SDL_THREADS when set and positive, else hardware threads.
inline std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SDL_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) n = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

struct SweepRow {
  std::size_t steps{};
  double reconstruction_error{};
  double inversion_complexity{};
  double max_stationarity_residual{};
};

/// Runs the pipeline once per step count (each in `<out>/T<k>/`) and writes
/// `sweep.csv`. Sub-runs execute in parallel.
inline RunManifest run_schedule_sweep(const ExperimentConfig& base,
                                      const std::vector<std::size_t>& step_counts) {
  const auto t0 = std::chrono::steady_clock::now();
  if (step_counts.empty()) throw ConfigError("sweep.T", "no step counts given");
  for (std::size_t t : step_counts) {
    if (t < 1) throw ConfigError("sweep.T", "step counts must be >= 1");
  }
  std::vector<ExperimentConfig> configs;
  for (std::size_t t : step_counts) {
    ExperimentConfig c = base;
    c.steps = t;
    if (c.snapshots) {
      std::erase_if(*c.snapshots, [t](std::size_t s) { return s > t; });
    }
    c.output_dir = (fs::path(base.output_dir) / ("T" + std::to_string(t))).string();
    validate(c);
    configs.push_back(std::move(c));
  }

  std::vector<std::optional<RunManifest>> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < configs.size(); k = next++) {
      try {
        results[k] = run_forward_reverse(configs[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < worker_count(configs.size()); ++w) pool.emplace_back(work);
    work();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RunManifest m(base.output_dir);
  detail::ensure_dir(m.output_dir());
  detail::echo_config(m, base);
  std::ostringstream csv;
  csv << "T,reconstruction_error,inversion_complexity,max_stationarity_residual\n";
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const RunManifest& r = *results[k];
    const std::string t = std::to_string(configs[k].steps);
    csv << t << ',' << *r.get("reconstruction_error") << ',' << *r.get("inversion_complexity")
        << ',' << *r.get("max_stationarity_residual") << '\n';
    m.set("T" + t + ".reconstruction_error", *r.get("reconstruction_error"));
    m.set("T" + t + ".inversion_complexity", *r.get("inversion_complexity"));
    m.set("T" + t + ".max_stationarity_residual", *r.get("max_stationarity_residual"));
    m.add_file("T" + t + "/manifest.txt");
  }
  m.set("sweep.T", detail::format_index_list(step_counts));
  detail::write_text(m.output_dir() / "sweep.csv", csv.str());
  m.add_file("sweep.csv");
  m.set_duration(detail::seconds_since(t0));
  m.write();
  return m;
}

inline std::vector<SweepRow> sweep_rows(const RunManifest& m) {
  std::vector<SweepRow> rows;
  const auto list = m.get("sweep.T");
  if (!list) return rows;
  for (std::size_t t : detail::parse_index_list("sweep.T", *list)) {
    const std::string p = "T" + std::to_string(t) + ".";
    rows.push_back({t, m.number(p + "reconstruction_error"), m.number(p + "inversion_complexity"),
                    m.number(p + "max_stationarity_residual")});
  }
  return rows;
}

/// Prior and likelihood for the serial demo as described by `c.serial`.
inline SerialChainConfig serial_chain_config(const ExperimentConfig& c) {
  const GridSpec grid = grid_from(c);
  const SerialSettings& s = c.serial;
  Distribution prior = [&] {
    try {
      return distribution_from(grid, s.prior, c.swiss, s.prior_mixture);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("serial.prior", e.what());
    }
  }();
  TransitionKernel likelihood = [&] {
    try {
      switch (s.likelihood) {
        case LikelihoodKind::gaussian: return gaussian_kernel(grid, s.sigma);
        case LikelihoodKind::bimodal: return bimodal_kernel(grid, s.offset, s.sigma);
        case LikelihoodKind::fade:
          return fade_kernel(grid, s.p,
                             s.fade_target == FadeTarget::uniform
                                 ? uniform_distribution(grid)
                                 : gaussian_mixture_distribution(grid, c.target_mixture));
        case LikelihoodKind::identity: return identity_kernel(grid);
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError("serial.likelihood", e.what());
    }
    throw std::logic_error("unknown likelihood kind");
  }();
  std::optional<BinIndex> start;
  if (s.start) {
    if ((*s.start)[0] >= grid.nx() || (*s.start)[1] >= grid.ny()) {
      throw ConfigError("serial.start", "bin outside grid");
    }
    start = grid.index((*s.start)[0], (*s.start)[1]);
  }
  if (!(s.n_steps > s.burn_in)) throw ConfigError("serial.n_steps", "must exceed serial.burn_in");
  return SerialChainConfig{std::move(prior), std::move(likelihood), s.n_steps, s.burn_in,
                           c.seed, start, false};
}

/// Runs one serial-reproduction chain and writes the trace, the post-burn-in
/// histogram, and the prior.
inline RunManifest run_serial_demo(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  if (config.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  SerialChainConfig sc = serial_chain_config(config);
  const bool ergodic = is_ergodic(sc.prior, sc.likelihood);
  const SerialChain chain(std::move(sc));
  const ChainTrace trace = run_chain(chain);
  const GridSpec& grid = chain.config().prior.grid();
  const Distribution emp = empirical_distribution(grid, trace, chain.config().burn_in);

  RunManifest m(config.output_dir);
  detail::ensure_dir(m.output_dir());
  detail::echo_config(m, config);
  m.set("ergodic", ergodic ? "true" : "false");
  m.set("start_bin", std::to_string(trace.states.front().value));
  m.set_number("tv_to_prior", total_variation(emp, chain.config().prior));
  m.set_number("kl_prior_to_empirical", kl_divergence(chain.config().prior, emp, config.metrics));

  if (config.serial.write_trace) {
    std::ostringstream csv;
    csv << "step,state_ix,state_iy,percept_ix,percept_iy\n";
    for (std::size_t s = 0; s < trace.states.size(); ++s) {
      const BinIndex x = trace.states[s];
      csv << s << ',' << grid.ix(x) << ',' << grid.iy(x) << ',';
      if (s < trace.percepts.size()) {
        csv << grid.ix(trace.percepts[s]) << ',' << grid.iy(trace.percepts[s]);
      } else {
        csv << ',';
      }
      csv << '\n';
    }
    detail::write_text(m.output_dir() / "trace.csv", csv.str());
    m.add_file("trace.csv");
  }
  detail::write_distribution(m, "empirical", emp);
  detail::write_distribution(m, "prior", chain.config().prior);
  m.set_duration(detail::seconds_since(t0));
  m.write();
  return m;
}

}  // namespace sdl
