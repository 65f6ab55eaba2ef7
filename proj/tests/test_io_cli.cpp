#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "relex/experiment.hpp"
#include "relex/svg.hpp"

using namespace relex;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("relex_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str(const std::string& child = "") const {
    return child.empty() ? path.string() : (path / child).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void prepare_m1_pair(const TempDir& dir) {
  const MdpSpec spec = make_m1();
  save_mdp(spec, dir.str("instance.json"));
  save_class(make_tabular_class(spec), dir.str("class.json"));
}

ExperimentConfig base_config(const TempDir& dir) {
  ExperimentConfig config;
  config.instance_path = dir.str("instance.json");
  config.class_path = dir.str("class.json");
  config.algorithms = {"relex"};
  config.episodes = 120;
  config.seeds = {1};
  config.out_dir = dir.str("runs");
  return config;
}

}  // namespace

TEST_CASE("config round trips exactly") {
  ExperimentConfig config;
  config.instance_path = "a.json";
  config.class_path = "b.json";
  config.algorithms = {"relex", "single:1", "oracle"};
  config.episodes = 777;
  config.seeds = {3, 9, 27};
  config.c = 0.75;
  config.delta = 0.05;
  config.rank_tol = 1e-6;
  config.audit_stride = 25;
  config.checkpoint_episode = 100;
  config.emit_rho_regret = false;
  config.out_dir = "out";
  const std::string text = config_to_json_string(config);
  const ExperimentConfig parsed = config_from_json_string(text);
  CHECK(config_to_json_string(parsed) == text);
}

TEST_CASE("config validation catches broken inputs") {
  TempDir dir;
  prepare_m1_pair(dir);
  ExperimentConfig config = base_config(dir);
  save_config(config, dir.str("config.json"));
  CHECK_NOTHROW(load_config(dir.str("config.json")));

  ExperimentConfig dup = config;
  dup.seeds = {1, 1};
  save_config(dup, dir.str("dup.json"));
  CHECK_THROWS_AS(load_config(dir.str("dup.json")), ConfigError);

  ExperimentConfig missing = config;
  missing.instance_path = dir.str("nope.json");
  save_config(missing, dir.str("missing.json"));
  CHECK_THROWS_AS(load_config(dir.str("missing.json")), ConfigError);

  ExperimentConfig bad_delta = config;
  bad_delta.delta = 1.5;
  save_config(bad_delta, dir.str("delta.json"));
  CHECK_THROWS_AS(load_config(dir.str("delta.json")), ConfigError);

  CHECK_THROWS_AS(load_config(dir.str("absent.json")), ConfigError);
}

TEST_CASE("run report documents round trip exactly") {
  TempDir dir;
  prepare_m1_pair(dir);
  ExperimentConfig config = base_config(dir);
  save_config(config, dir.str("config.json"));
  RunOptions options;
  options.config_path = dir.str("config.json");
  std::ostringstream out, err;
  REQUIRE(cmd_run(options, out, err) == kExitOk);

  const std::string audit_text = slurp(dir.str("runs/relex_s1/audit.json"));
  const AuditReport audit = audit_from_json_string(audit_text);
  CHECK(audit_to_json_string(audit) + "\n" == audit_text);

  const std::string phase_text = slurp(dir.str("runs/relex_s1/phase.json"));
  const PhaseReport phase = phase_from_json_string(phase_text);
  CHECK(phase_to_json_string(phase) + "\n" == phase_text);

  // the "none" / "inf" encodings survive a round trip too
  PhaseReport none;
  none.has_k_star = false;
  none.flatness_finite = false;
  const PhaseReport parsed = phase_from_json_string(phase_to_json_string(none));
  CHECK_FALSE(parsed.has_k_star);
  CHECK_FALSE(parsed.flatness_finite);
  CHECK(phase_to_json_string(parsed) == phase_to_json_string(none));
}

TEST_CASE("a generator block replaces the instance and class paths") {
  TempDir dir;
  ExperimentConfig config;
  GeneratorSpec gen;
  gen.kind = "cluster";
  gen.states = 4;
  gen.actions = 2;
  gen.horizon = 2;
  gen.clusters = 2;
  gen.seed = 9;
  config.generator = gen;
  config.algorithms = {"oracle"};
  config.episodes = 30;
  config.seeds = {1};
  config.out_dir = dir.str("runs");
  save_config(config, dir.str("config.json"));

  const ExperimentConfig parsed = load_config(dir.str("config.json"));
  REQUIRE(parsed.generator.has_value());
  CHECK(config_to_json_string(parsed) == config_to_json_string(config));

  RunOptions options;
  options.config_path = dir.str("config.json");
  std::ostringstream out, err;
  REQUIRE(cmd_run(options, out, err) == kExitOk);
  CHECK(fs::exists(dir.str("runs/instance.json")));
  CHECK(fs::exists(dir.str("runs/class.json")));
  CHECK(fs::exists(dir.str("runs/oracle_s1/episodes.csv")));
  // the written pair is the generated one
  const MdpSpec spec = load_mdp(dir.str("runs/instance.json"));
  CHECK(spec.num_states == 4);
  CHECK(bilinear_residual(spec, load_class(dir.str("runs/class.json"))) <= 1e-9);
}

TEST_CASE("disabling audits never perturbs the trajectory stream") {
  TempDir dir;
  prepare_m1_pair(dir);
  ExperimentConfig config = base_config(dir);
  config.out_dir = dir.str("with_audits");
  save_config(config, dir.str("on.json"));
  config.audits = false;
  config.out_dir = dir.str("without_audits");
  save_config(config, dir.str("off.json"));

  std::ostringstream out, err;
  RunOptions options;
  options.config_path = dir.str("on.json");
  REQUIRE(cmd_run(options, out, err) == kExitOk);
  options.config_path = dir.str("off.json");
  REQUIRE(cmd_run(options, out, err) == kExitOk);
  CHECK(slurp(dir.str("with_audits/relex_s1/episodes.csv")) ==
        slurp(dir.str("without_audits/relex_s1/episodes.csv")));
  const AuditReport off = audit_from_json_string(slurp(dir.str("without_audits/relex_s1/audit.json")));
  CHECK(off.optimism_cells == 0);
  CHECK(off.covariance.empty());
}

TEST_CASE("all-zero gaps skip the gap-dependent audits with a warning") {
  TempDir dir;
  MdpSpec flat = make_m1();
  for (auto& r : flat.rewards) r = 0.0;
  save_mdp(flat, dir.str("instance.json"));
  save_class(make_tabular_class(flat), dir.str("class.json"));
  ExperimentConfig config = base_config(dir);
  config.episodes = 50;
  save_config(config, dir.str("config.json"));
  RunOptions options;
  options.config_path = dir.str("config.json");
  std::ostringstream out, err;
  REQUIRE(cmd_run(options, out, err) == kExitOk);
  CHECK(out.str().find("all gaps zero") != std::string::npos);
  const AuditReport audit = audit_from_json_string(slurp(dir.str("runs/relex_s1/audit.json")));
  CHECK(audit.gap_audits_skipped);
}

TEST_CASE("output root environment variable applies to relative paths") {
  ::setenv("RELEX_OUT_ROOT", "/tmp/relex_root", 1);
  CHECK(resolve_out_path("runs") == "/tmp/relex_root/runs");
  CHECK(resolve_out_path("/abs/runs") == "/abs/runs");
  ::unsetenv("RELEX_OUT_ROOT");
  CHECK(resolve_out_path("runs") == "runs");
}

TEST_CASE("generate tabular preset writes a valid exact pair") {
  TempDir dir;
  GenerateOptions options;
  options.kind = "tabular";
  options.preset = "m1";
  options.out_dir = dir.str();
  std::ostringstream out, err;
  REQUIRE(cmd_generate(options, out, err) == kExitOk);
  const MdpSpec spec = load_mdp(dir.str("instance.json"));
  const RepresentationClass cls = load_class(dir.str("class.json"));
  CHECK(validate_mdp(spec).ok());
  CHECK(bilinear_residual(spec, cls) == 0.0);
  CHECK(cls.models[0].residual == 0.0);
}

TEST_CASE("generate cluster is deterministic across invocations") {
  TempDir a, b;
  GenerateOptions options;
  options.kind = "cluster";
  options.states = 4;
  options.actions = 2;
  options.horizon = 2;
  options.clusters = 2;
  options.seed = 7;
  std::ostringstream out, err;
  options.out_dir = a.str();
  REQUIRE(cmd_generate(options, out, err) == kExitOk);
  options.out_dir = b.str();
  REQUIRE(cmd_generate(options, out, err) == kExitOk);
  CHECK(slurp(a.str("instance.json")) == slurp(b.str("instance.json")));
  CHECK(slurp(a.str("class.json")) == slurp(b.str("class.json")));
}

TEST_CASE("generate rotated rejects a near-singular rotation and writes nothing") {
  TempDir dir;
  prepare_m1_pair(dir);
  {
    std::ofstream rot(dir.str("rotation.json"));
    rot << R"({"rotations": [[[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1e-9]]]})";
  }
  GenerateOptions options;
  options.kind = "rotated";
  options.instance_path = dir.str("instance.json");
  options.class_path = dir.str("class.json");
  options.rotation_path = dir.str("rotation.json");
  options.out_dir = dir.str("rotated_out");
  std::ostringstream out, err;
  CHECK(cmd_generate(options, out, err) == kExitValidation);
  CHECK_FALSE(fs::exists(dir.str("rotated_out/class_rotated.json")));
}

TEST_CASE("generate rotated preserves the kernel on disk") {
  TempDir dir;
  prepare_m1_pair(dir);
  GenerateOptions options;
  options.kind = "rotated";
  options.instance_path = dir.str("instance.json");
  options.class_path = dir.str("class.json");
  options.seed = 5;
  options.out_dir = dir.str();
  std::ostringstream out, err;
  REQUIRE(cmd_generate(options, out, err) == kExitOk);
  const RepresentationClass rotated = load_class(dir.str("class_rotated.json"));
  CHECK(bilinear_residual(load_mdp(dir.str("instance.json")), rotated) <= 1e-9);
}

TEST_CASE("validate exits 0 with a coverage warning on the lone one-hot class") {
  TempDir dir;
  prepare_m1_pair(dir);
  std::ostringstream out, err;
  const int code = cmd_validate(dir.str("instance.json"), dir.str("class.json"), dir.str("cov"),
                                1e-7, out, err);
  CHECK(code == kExitOk);
  CHECK(out.str().find("\"assumption3_holds\": false") != std::string::npos);
  CHECK(out.str().find("warnings") != std::string::npos);
  CHECK(fs::exists(dir.str("cov/coverage.json")));
  CHECK(fs::exists(dir.str("cov/uncovered.csv")));
}

TEST_CASE("validate exits 0 cleanly on a coverage-complete pair") {
  TempDir dir;
  GenerateOptions options;
  options.kind = "cluster";
  options.states = 6;
  options.actions = 2;
  options.horizon = 3;
  options.clusters = 3;
  options.seed = 11;
  options.out_dir = dir.str();
  std::ostringstream gen_out, gen_err;
  REQUIRE(cmd_generate(options, gen_out, gen_err) == kExitOk);
  std::ostringstream out, err;
  const int code =
      cmd_validate(dir.str("instance.json"), dir.str("class.json"), "", 1e-7, out, err);
  CHECK(code == kExitOk);
  CHECK(out.str().find("\"assumption3_holds\": true") != std::string::npos);
}

TEST_CASE("validate exits 2 on corrupted transitions") {
  TempDir dir;
  prepare_m1_pair(dir);
  MdpSpec spec = load_mdp(dir.str("instance.json"));
  spec.transitions[0] = 0.4;
  save_mdp(spec, dir.str("instance.json"));
  std::ostringstream out, err;
  CHECK(cmd_validate(dir.str("instance.json"), dir.str("class.json"), "", 1e-7, out, err) ==
        kExitValidation);
}

TEST_CASE("oracle runs write an all-zero regret CSV") {
  TempDir dir;
  prepare_m1_pair(dir);
  ExperimentConfig config = base_config(dir);
  config.algorithms = {"oracle"};
  save_config(config, dir.str("config.json"));
  RunOptions options;
  options.config_path = dir.str("config.json");
  std::ostringstream out, err;
  REQUIRE(cmd_run(options, out, err) == kExitOk);
  const std::string csv = slurp(dir.str("runs/oracle_s1/episodes.csv"));
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "episode,init_state,ep_regret,cum_regret,gap_sum");
  int rows = 0;
  while (std::getline(lines, line)) {
    CHECK(line.find(",0,0,0,0") != std::string::npos);
    ++rows;
  }
  CHECK(rows == 120);
}

TEST_CASE("identical configs produce byte-identical artifacts") {
  TempDir dir;
  prepare_m1_pair(dir);
  ExperimentConfig config = base_config(dir);
  config.algorithms = {"relex", "oracle", "uniform_random"};
  config.seeds = {1, 2};
  config.out_dir = dir.str("runs_a");
  save_config(config, dir.str("config_a.json"));
  config.out_dir = dir.str("runs_b");
  save_config(config, dir.str("config_b.json"));

  std::ostringstream out, err;
  RunOptions options;
  options.config_path = dir.str("config_a.json");
  options.jobs = 2;
  REQUIRE(cmd_run(options, out, err) == kExitOk);
  options.config_path = dir.str("config_b.json");
  options.jobs = 1;  // concurrency must not affect content
  REQUIRE(cmd_run(options, out, err) == kExitOk);

  for (const char* run : {"relex_s1", "relex_s2", "oracle_s1", "oracle_s2", "uniform_s1"}) {
    for (const char* artifact : {"episodes.csv", "rho_regret.csv", "audit.json", "phase.json"}) {
      const std::string a = slurp(dir.str(std::string("runs_a/") + run + "/" + artifact));
      const std::string b = slurp(dir.str(std::string("runs_b/") + run + "/" + artifact));
      CHECK(a == b);
    }
  }
}

TEST_CASE("checkpoint plus resume reproduces the uninterrupted run byte for byte") {
  TempDir dir;
  prepare_m1_pair(dir);

  // uninterrupted reference
  ExperimentConfig full = base_config(dir);
  full.episodes = 200;
  full.out_dir = dir.str("full");
  save_config(full, dir.str("full.json"));
  std::ostringstream out, err;
  RunOptions options;
  options.config_path = dir.str("full.json");
  REQUIRE(cmd_run(options, out, err) == kExitOk);

  // first half with a checkpoint, then resume in place
  ExperimentConfig half = full;
  half.checkpoint_episode = 100;
  half.out_dir = dir.str("resumed");
  save_config(half, dir.str("half.json"));
  {
    // stop at the checkpoint by running a truncated schedule first
    ExperimentConfig first = half;
    first.episodes = 100;
    first.out_dir = dir.str("resumed");
    save_config(first, dir.str("first.json"));
    RunOptions first_options;
    first_options.config_path = dir.str("first.json");
    REQUIRE(cmd_run(first_options, out, err) == kExitOk);
  }
  RunOptions resume_options;
  resume_options.config_path = dir.str("half.json");
  resume_options.resume_path = dir.str("resumed/relex_s1/checkpoint.json");
  REQUIRE(cmd_run(resume_options, out, err) == kExitOk);

  CHECK(slurp(dir.str("resumed/relex_s1/episodes.csv")) ==
        slurp(dir.str("full/relex_s1/episodes.csv")));
  CHECK(slurp(dir.str("resumed/relex_s1/rho_regret.csv")) ==
        slurp(dir.str("full/relex_s1/rho_regret.csv")));
}

TEST_CASE("report renders an svg and a summary") {
  TempDir dir;
  prepare_m1_pair(dir);
  ExperimentConfig config = base_config(dir);
  config.algorithms = {"oracle", "relex"};
  save_config(config, dir.str("config.json"));
  RunOptions run_options;
  run_options.config_path = dir.str("config.json");
  std::ostringstream out, err;
  REQUIRE(cmd_run(run_options, out, err) == kExitOk);

  ReportOptions report;
  report.run_dirs = {dir.str("runs/oracle_s1"), dir.str("runs/relex_s1")};
  report.out_svg = dir.str("report.svg");
  REQUIRE(cmd_report(report, out, err) == kExitOk);
  const std::string svg = slurp(dir.str("report.svg"));
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("oracle_s1") != std::string::npos);
  const std::string summary = slurp(dir.str("report.summary.json"));
  CHECK(summary.find("\"k_star_hat\"") != std::string::npos);
  CHECK(summary.find("oracle_s1") != std::string::npos);

  // log-x variant still renders every series
  ReportOptions log_report = report;
  log_report.out_svg = dir.str("report_log.svg");
  log_report.log_x = true;
  REQUIRE(cmd_report(log_report, out, err) == kExitOk);
  CHECK(slurp(dir.str("report_log.svg")).find("log scale") != std::string::npos);
}

TEST_CASE("report on identical runs yields identical series") {
  TempDir dir;
  prepare_m1_pair(dir);
  ExperimentConfig config = base_config(dir);
  config.algorithms = {"oracle"};
  config.out_dir = dir.str("ra");
  save_config(config, dir.str("ca.json"));
  config.out_dir = dir.str("rb");
  save_config(config, dir.str("cb.json"));
  std::ostringstream out, err;
  RunOptions options;
  options.config_path = dir.str("ca.json");
  REQUIRE(cmd_run(options, out, err) == kExitOk);
  options.config_path = dir.str("cb.json");
  REQUIRE(cmd_run(options, out, err) == kExitOk);

  ReportOptions report;
  report.run_dirs = {dir.str("ra/oracle_s1"), dir.str("rb/oracle_s1")};
  report.out_svg = dir.str("pair.svg");
  REQUIRE(cmd_report(report, out, err) == kExitOk);
  const std::string svg = slurp(dir.str("pair.svg"));
  const std::size_t first = svg.find("points=\"");
  REQUIRE(first != std::string::npos);
  const std::size_t first_end = svg.find('"', first + 8);
  const std::size_t second = svg.find("points=\"", first_end);
  REQUIRE(second != std::string::npos);
  const std::size_t second_end = svg.find('"', second + 8);
  CHECK(svg.substr(first + 8, first_end - first - 8) ==
        svg.substr(second + 8, second_end - second - 8));
}

TEST_CASE("a seed override narrows the run matrix") {
  TempDir dir;
  prepare_m1_pair(dir);
  ExperimentConfig config = base_config(dir);
  config.seeds = {1, 2, 3};
  save_config(config, dir.str("config.json"));
  RunOptions options;
  options.config_path = dir.str("config.json");
  options.seed_override = 2;
  std::ostringstream out, err;
  REQUIRE(cmd_run(options, out, err) == kExitOk);
  CHECK(fs::exists(dir.str("runs/relex_s2/episodes.csv")));
  CHECK_FALSE(fs::exists(dir.str("runs/relex_s1")));
  CHECK_FALSE(fs::exists(dir.str("runs/relex_s3")));
}

TEST_CASE("unwritable output directories surface as runtime failures") {
  TempDir dir;
  prepare_m1_pair(dir);
  ExperimentConfig config = base_config(dir);
  config.episodes = 5;
  config.out_dir = "/proc/relex_denied";
  save_config(config, dir.str("config.json"));
  RunOptions options;
  options.config_path = dir.str("config.json");
  std::ostringstream out, err;
  CHECK(cmd_run(options, out, err) == kExitRuntime);
}

TEST_CASE("commands report usage errors with exit code 1") {
  std::ostringstream out, err;
  RunOptions options;
  options.config_path = "/nonexistent/config.json";
  CHECK(cmd_run(options, out, err) == kExitUsage);
  ReportOptions report;
  CHECK(cmd_report(report, out, err) == kExitUsage);
  GenerateOptions gen;
  gen.kind = "bogus";
  CHECK(cmd_generate(gen, out, err) == kExitUsage);
}
