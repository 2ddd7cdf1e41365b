// sdl: command-line front end for the grid diffusion / serial reproduction
// experiments.
//
//   sdl forward-reverse [--config f] [--out dir] [--seed n] [--quiet]
//   sdl sweep           [--config f] [--out dir] [--T 2,5,10] [--quiet]
//   sdl serial          [--config f] [--out dir] [--seed n] [--quiet]
//   sdl render          --in dist.csv --out image.pgm
//   sdl --record-reference tests/data/reference_values.txt
//
// Exit status: 0 success, 1 configuration error, 2 numerical or runtime error.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdl/errors.hpp"
#include "sdl/experiment/config.hpp"
#include "sdl/experiment/heatmap.hpp"
#include "sdl/experiment/reference.hpp"
#include "sdl/experiment/runs.hpp"
#include "sdl/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out_dir, "output directory (overrides output_dir)");
  cmd->add_option("--seed", o.seed, "RNG seed (overrides seed)");
  cmd->add_flag("--quiet", o.quiet, "suppress the summary on stdout");
}

sdl::ExperimentConfig resolve(const CommonOptions& o, sdl::ExperimentConfig base) {
  sdl::ExperimentConfig c = o.config_path.empty()
                                ? std::move(base)
                                : [&] {
                                    std::ifstream in(o.config_path);
                                    if (!in) {
                                      throw sdl::ConfigError("--config", "cannot open `" +
                                                                             o.config_path + "`");
                                    }
                                    return sdl::parse_config(in, std::move(base));
                                  }();
  if (!o.out_dir.empty()) c.output_dir = o.out_dir;
  if (o.seed) c.seed = *o.seed;
  return c;
}

void summarize(const sdl::RunManifest& m, const CommonOptions& o) {
  if (o.quiet) return;
  for (const auto& [k, v] : m.entries()) {
    if (k.rfind("config.", 0) == 0) continue;
    std::cout << k << " = " << v << '\n';
  }
  std::cout << "wrote " << (m.output_dir() / "manifest.txt").string() << '\n';
}

int record_reference(const std::string& path) {
  std::ostringstream text;
  sdl::record_reference(text, &std::cerr);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "sdl: cannot write `" << path << "`\n";
    return kExitRuntime;
  }
  out << text.str();
  std::cerr << "wrote " << path << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact grid simulator of diffusion sampling as serial reproduction", "sdl"};
  app.set_version_flag("--version", std::string(sdl::kToolVersion));
  app.require_subcommand(0, 1);

  std::string reference_path;
  app.add_option("--record-reference", reference_path,
                 "validate on small grids, then write 41x41 reference values to this file");

  CommonOptions fr_opts, sweep_opts, serial_opts;
  auto* fr = app.add_subcommand("forward-reverse", "forward marginals and exact reverse process");
  add_common(fr, fr_opts);

  auto* sweep = app.add_subcommand("sweep", "reconstruction error across step counts");
  add_common(sweep, sweep_opts);
  std::vector<std::size_t> sweep_T{2, 5, 10, 20, 40, 80};
  sweep->add_option("--T", sweep_T, "comma-separated step counts")->delimiter(',');

  auto* serial = app.add_subcommand("serial", "serial-reproduction chain demo");
  add_common(serial, serial_opts);

  std::string render_in, render_out;
  auto* render = app.add_subcommand("render", "render a distribution CSV as a PGM heatmap");
  render->add_option("--in", render_in, "distribution CSV (ix,iy,mass)")
      ->required()
      ->check(CLI::ExistingFile);
  render->add_option("--out", render_out, "output PGM path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (!reference_path.empty()) return record_reference(reference_path);

    if (*fr) {
      summarize(sdl::run_forward_reverse(resolve(fr_opts, {})), fr_opts);
    } else if (*sweep) {
      summarize(sdl::run_schedule_sweep(resolve(sweep_opts, sdl::sweep_preset()), sweep_T),
                sweep_opts);
    } else if (*serial) {
      summarize(sdl::run_serial_demo(resolve(serial_opts, {})), serial_opts);
    } else if (*render) {
      std::ifstream in(render_in);
      if (!in) throw sdl::ConfigError("--in", "cannot open `" + render_in + "`");
      sdl::render_heatmap(sdl::read_distribution_csv(in), render_out);
    } else {
      std::cout << app.help();
      return kExitConfig;
    }
  } catch (const sdl::ConfigError& e) {
    std::cerr << "sdl: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const sdl::NumericalError& e) {
    std::cerr << "sdl: numerical error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "sdl: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
