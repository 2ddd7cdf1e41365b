#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sdl/experiment/config.hpp"
#include "sdl/experiment/heatmap.hpp"
#include "sdl/experiment/reference.hpp"
#include "sdl/experiment/runs.hpp"

using namespace sdl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sdl_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Manifest text minus the lines that legitimately differ between two runs.
std::string stable_manifest(const std::string& manifest) {
  std::istringstream in(manifest);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.rfind("duration_seconds", 0) == 0 || line.rfind("config.output_dir", 0) == 0) continue;
    out += line + '\n';
  }
  return out;
}

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c;
  c.nx = 9;
  c.ny = 9;
  c.swiss = SwissRollParams{1.5, 0.05, 0.4, 0.06, 512};
  c.steps = 8;
  c.output_dir = out.string();
  return c;
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(SDL_TOOL_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, SerializeParseRoundTrip) {
  ExperimentConfig c;
  c.nx = 17;
  c.bounds = Bounds{-1, 2, -0.25, 0.75};
  c.wrapped = false;
  c.data = DataKind::mixture;
  c.data_mixture = {{{0.1, 0.2}, 0.05, 2.0}};
  c.family = NoiseFamily::bimodal;
  c.bimodal_sigma = 0.045;
  c.schedule_a = 0.1 + 0.2;  // not exactly representable as typed
  c.snapshots = std::vector<std::size_t>{0, 3, 7};
  c.metrics.epsilon_floor = 1e-10;
  c.seed = 18446744073709551615ull;
  c.serial.likelihood = LikelihoodKind::identity;
  c.serial.start = std::array<std::size_t, 2>{3, 4};
  c.serial.write_trace = false;
  const ExperimentConfig back = parse_config_string(serialize_config(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(parse_config_string(serialize_config(ExperimentConfig{})), ExperimentConfig{});
}

TEST(Config, EmptySnapshotListIsDistinctFromDefault) {
  const ExperimentConfig c = parse_config_string("snapshots =\n");
  ASSERT_TRUE(c.snapshots.has_value());
  EXPECT_TRUE(c.snapshots->empty());
  EXPECT_FALSE(parse_config_string("snapshots = default\n").snapshots.has_value());
  EXPECT_EQ(default_snapshots(40), (std::vector<std::size_t>{0, 10, 20, 30, 40}));
  EXPECT_EQ(default_snapshots(1), (std::vector<std::size_t>{0, 1}));
}

TEST(Config, CommentsAndOverlay) {
  ExperimentConfig base;
  base.steps = 12;
  const ExperimentConfig c =
      parse_config_string("# comment\n\n  grid.nx = 9  \nfamily.name = fade\n", base);
  EXPECT_EQ(c.nx, 9u);
  EXPECT_EQ(c.steps, 12u);
  EXPECT_EQ(c.family, NoiseFamily::fade);
}

TEST(Config, ErrorsNameTheField) {
  auto field_of = [](const std::string& text) {
    try {
      validate(parse_config_string(text));
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of("grid.nx = ten\n"), "grid.nx");
  EXPECT_EQ(field_of("no.such.key = 1\n"), "no.such.key");
  EXPECT_EQ(field_of("family.name = cauchy\n"), "family.name");
  EXPECT_EQ(field_of("grid.nx = 1\n"), "grid");
  EXPECT_EQ(field_of("schedule.T = 0\n"), "schedule.T");
  EXPECT_EQ(field_of("snapshots = 0,50\n"), "snapshots");
  EXPECT_EQ(field_of("metrics.epsilon_floor = 0.5\n"), "metrics.epsilon_floor");
  EXPECT_EQ(field_of("data.mixture = 0 0 0.1\n"), "data.mixture");
  EXPECT_EQ(field_of("family.name = fade\nschedule.a = 0.5\nschedule.b = 0.9\n"), "schedule");
  EXPECT_EQ(field_of("just text\n"), "line 1");
  EXPECT_EQ(field_of("grid.nx = 41\n"), "<none>");
  EXPECT_THROW(load_config("/nonexistent/sdl.cfg"), ConfigError);
}

TEST(Heatmap, UniformIsWhite) {
  const auto px = heatmap_pixels(uniform_distribution(make_grid(5, 4)));
  ASSERT_EQ(px.size(), 20u);
  for (auto v : px) EXPECT_EQ(v, 255);
}

TEST(Heatmap, PointMassIsOnePixel) {
  const GridSpec g = make_grid(5, 4);
  const auto px = heatmap_pixels(point_mass(g, g.index(3, 1)));
  for (std::size_t i = 0; i < px.size(); ++i) EXPECT_EQ(px[i], i == 8 ? 255 : 0);
}

TEST(Heatmap, PgmBytesAreStable) {
  const GridSpec g = make_grid(3, 2);
  const Distribution d(g, {0, 1, 2, 3, 4, 5});
  std::ostringstream a, b;
  write_pgm(a, d);
  write_pgm(b, d);
  EXPECT_EQ(a.str(), b.str());
  const std::string want = std::string("P5\n3 2\n255\n") + '\0' + char(51) + char(102) +
                           char(153) + char(204) + char(255);
  EXPECT_EQ(a.str(), want);
  const fs::path dir = scratch("pgm");
  fs::create_directories(dir);
  render_heatmap(d, (dir / "x.pgm").string());
  render_heatmap(d, (dir / "y.pgm").string());
  EXPECT_EQ(slurp(dir / "x.pgm"), want);
  EXPECT_EQ(slurp(dir / "y.pgm"), want);
}

TEST(Manifest, RendersKeysInOrderWithTimingLast) {
  RunManifest m("unused");
  m.set("b", "1");
  m.set_number("a", 0.1);
  m.set("b", "2");
  m.add_file("x.csv");
  m.set_duration(1.5);
  EXPECT_EQ(m.render(), std::string("tool_version = ") + std::string(kToolVersion) +
                            "\nb = 2\na = 0.10000000000000001\nfiles = x.csv\n"
                            "duration_seconds = 1.5\n");
  EXPECT_EQ(m.number("a"), 0.1);
  EXPECT_THROW(m.number("c"), std::out_of_range);
}

TEST(ForwardReverseRun, WritesSnapshotsAndIsDeterministic) {
  const fs::path a = scratch("fr_a"), b = scratch("fr_b");
  ExperimentConfig c = small_config(a);
  const RunManifest m = run_forward_reverse(c);
  c.output_dir = b.string();
  run_forward_reverse(c);
  for (std::size_t k : {0, 2, 4, 6, 8}) {
    for (const char* stem : {"marginal_t", "reverse_t"}) {
      for (const char* ext : {".csv", ".pgm"}) {
        const std::string f = stem + std::to_string(k) + ext;
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
      }
    }
  }
  EXPECT_EQ(slurp(a / "steps.csv"), slurp(b / "steps.csv"));
  EXPECT_EQ(stable_manifest(slurp(a / "manifest.txt")),
            stable_manifest(slurp(b / "manifest.txt")));
  EXPECT_EQ(slurp(a / "steps.csv").substr(0, 68),
            "t,param,stationarity_residual,kl_consecutive,reverse_tv_to_marginal\n");
  EXPECT_LT(m.number("max_detailed_balance_residual"), 1e-10);
  EXPECT_EQ(m.get("config.schedule.T"), "8");

  // re-parsing the snapshot reproduces the in-memory marginal exactly
  std::ifstream in(a / "marginal_t0.csv");
  EXPECT_EQ(read_distribution_csv(in), build_forward(c).data());
}

TEST(ForwardReverseRun, EmptySnapshotsWriteOnlyTables) {
  const fs::path dir = scratch("fr_empty");
  ExperimentConfig c = small_config(dir);
  c.snapshots = std::vector<std::size_t>{};
  run_forward_reverse(c);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"manifest.txt", "steps.csv"}));
}

TEST(ForwardReverseRun, GaussianPreset41) {
  const fs::path dir = scratch("fr_gauss41");
  ExperimentConfig c = family_preset("gaussian");
  c.output_dir = dir.string();
  c.snapshots = std::vector<std::size_t>{40};
  const RunManifest m = run_forward_reverse(c);
  const auto ref = read_reference(SDL_REFERENCE_FILE);
  EXPECT_LT(m.number("reconstruction_error"), ref.at("kl.gaussian") + 1e-6);
  // measured noise level at t = T; a frozen regression value, not a bound
  EXPECT_NEAR(m.number("forward_tv_to_noise"), 0.029127008437754572, 1e-9);
  std::ifstream in(dir / "marginal_t40.csv");
  EXPECT_NEAR(total_variation(read_distribution_csv(in), uniform_distribution(make_grid(41, 41))),
              0.029127008437754572, 1e-9);
}

TEST(ForwardReverseRun, FadeUniformPreset41) {
  const fs::path dir = scratch("fr_fade41");
  ExperimentConfig c = family_preset("fade_uniform");
  c.output_dir = dir.string();
  c.snapshots = std::vector<std::size_t>{40};
  const RunManifest m = run_forward_reverse(c);
  const auto ref = read_reference(SDL_REFERENCE_FILE);
  EXPECT_LT(m.number("reconstruction_error"), ref.at("kl.fade_uniform") + 1e-6);
  EXPECT_LT(m.number("forward_tv_to_noise"), 0.01);
}

TEST(Sweep, SmallGridTrendsAndLayout) {
  const fs::path dir = scratch("sweep");
  ExperimentConfig c = sweep_preset();
  c.nx = c.ny = 15;
  c.swiss = SwissRollParams{1.5, 0.05, 0.4, 0.05, 512};
  c.output_dir = dir.string();
  const RunManifest m = run_schedule_sweep(c, {2, 5, 10, 20});
  const auto rows = sweep_rows(m);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    EXPECT_LT(rows[k].inversion_complexity, rows[k - 1].inversion_complexity);
  }
  EXPECT_GT(rows.front().reconstruction_error, rows.back().reconstruction_error);
  EXPECT_TRUE(fs::exists(dir / "T5" / "manifest.txt"));
  const std::string csv = slurp(dir / "sweep.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "T,reconstruction_error,inversion_complexity,max_stationarity_residual");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_THROW(run_schedule_sweep(c, {}), ConfigError);
  EXPECT_THROW(run_schedule_sweep(c, {0}), ConfigError);
}

TEST(SerialDemo, DeterministicAndConvergent) {
  const fs::path a = scratch("serial_a"), b = scratch("serial_b");
  ExperimentConfig c;
  c.nx = c.ny = 9;
  c.serial.n_steps = 1'000'000;
  c.seed = 9;
  c.output_dir = a.string();
  const RunManifest m = run_serial_demo(c);
  c.output_dir = b.string();
  run_serial_demo(c);
  EXPECT_LT(m.number("tv_to_prior"), 0.03);
  EXPECT_EQ(m.get("ergodic"), "true");
  for (const char* f : {"trace.csv", "empirical.csv", "empirical.pgm", "prior.csv", "prior.pgm"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(stable_manifest(slurp(a / "manifest.txt")),
            stable_manifest(slurp(b / "manifest.txt")));
}

TEST(SerialDemo, NoiselessAgentStaysAtStart) {
  const fs::path dir = scratch("serial_id");
  ExperimentConfig c;
  c.nx = c.ny = 5;
  c.serial.likelihood = LikelihoodKind::identity;
  c.serial.n_steps = 100;
  c.serial.burn_in = 10;
  c.serial.start = std::array<std::size_t, 2>{1, 3};
  c.output_dir = dir.string();
  const RunManifest m = run_serial_demo(c);
  EXPECT_EQ(m.get("ergodic"), "false");
  std::ifstream in(dir / "empirical.csv");
  const Distribution emp = read_distribution_csv(in);
  EXPECT_EQ(emp, point_mass(emp.grid(), emp.grid().index(1, 3)));
  const std::string trace = slurp(dir / "trace.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n', trace.find('\n') + 1)),
            "step,state_ix,state_iy,percept_ix,percept_iy\n0,1,3,1,3");
  EXPECT_NE(trace.find("\n100,1,3,,\n"), std::string::npos);
}

TEST(SerialDemo, RejectsBadSettings) {
  ExperimentConfig c;
  c.nx = c.ny = 5;
  c.serial.start = std::array<std::size_t, 2>{5, 0};
  EXPECT_THROW(run_serial_demo(c), ConfigError);
  c.serial.start.reset();
  c.serial.burn_in = c.serial.n_steps;
  EXPECT_THROW(run_serial_demo(c), ConfigError);
}

TEST(Reference, SmallGridValidationPasses) {
  const ValidationReport r = validate_small_grids();
  EXPECT_LT(r.max_path_enumeration_error, 1e-12);
  EXPECT_LT(r.max_dense_vs_matrix_free_error, 1e-12);
  EXPECT_LT(r.max_detailed_balance_residual, 1e-10);
}

TEST(Reference, RecordedFileIsComplete) {
  const auto ref = read_reference(SDL_REFERENCE_FILE);
  for (const auto& name : family_preset_names()) {
    ASSERT_TRUE(ref.count("kl." + name)) << name;
    EXPECT_GT(ref.at("kl." + name), 0.0);
    EXPECT_LE(ref.at("kl." + name), 0.1);
  }
  EXPECT_THROW(family_preset("laplace"), ConfigError);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "ok.cfg");
    cfg << "grid.nx = 7\ngrid.ny = 7\ndata.outer_radius = 0.4\nschedule.T = 3\n";
    std::ofstream bad(dir / "bad.cfg");
    bad << "schedule.T = zero\n";
  }
  const std::string out = (dir / "run").string();
  EXPECT_EQ(run_tool("forward-reverse --quiet --config " + (dir / "ok.cfg").string() + " --out " + out), 0);
  EXPECT_TRUE(fs::exists(fs::path(out) / "manifest.txt"));
  EXPECT_EQ(run_tool("forward-reverse --config " + (dir / "bad.cfg").string()), 1);
  EXPECT_EQ(run_tool("forward-reverse --config " + (dir / "missing.cfg").string()), 1);
  EXPECT_EQ(run_tool("no-such-command"), 1);
  EXPECT_EQ(run_tool("render --in " + (fs::path(out) / "marginal_t3.csv").string() + " --out " +
                     (dir / "r.pgm").string()),
            0);
  EXPECT_EQ(slurp(dir / "r.pgm"), slurp(fs::path(out) / "marginal_t3.pgm"));
  EXPECT_EQ(run_tool("render --in " + (fs::path(out) / "manifest.txt").string() + " --out " +
                     (dir / "r2.pgm").string()),
            2);
  EXPECT_EQ(run_tool("forward-reverse --quiet --config " + (dir / "ok.cfg").string() +
                     " --out /proc/forbidden/dir"),
            2);
}

TEST(Cli, SeedFlagOverridesConfig) {
  const fs::path dir = scratch("cli_seed");
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "s.cfg");
    cfg << "grid.nx = 5\ngrid.ny = 5\nserial.n_steps = 500\nserial.burn_in = 10\nseed = 1\n";
  }
  const std::string cfg = (dir / "s.cfg").string();
  ASSERT_EQ(run_tool("serial --quiet --config " + cfg + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_tool("serial --quiet --config " + cfg + " --seed 2 --out " + (dir / "b").string()), 0);
  ASSERT_EQ(run_tool("serial --quiet --config " + cfg + " --seed 2 --out " + (dir / "c").string()), 0);
  EXPECT_NE(slurp(dir / "a" / "trace.csv"), slurp(dir / "b" / "trace.csv"));
  EXPECT_EQ(slurp(dir / "b" / "trace.csv"), slurp(dir / "c" / "trace.csv"));
  EXPECT_NE(slurp(dir / "b" / "manifest.txt").find("config.seed = 2"), std::string::npos);
}
