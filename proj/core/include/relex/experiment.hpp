#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "relex/harness.hpp"

namespace relex {

// Inline alternative to instance/class files: the pair is generated at run
// time (and written next to the runs for provenance).
struct GeneratorSpec {
  std::string kind = "cluster";  // cluster | m1
  int states = 6;
  int actions = 2;
  int horizon = 3;
  int clusters = 3;
  double reward_margin = 0.3;
  int rotated_copies = 0;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  std::string instance_path;
  std::string class_path;
  std::optional<GeneratorSpec> generator;
  std::vector<std::string> algorithms{"relex"};
  long episodes = 1000;
  std::vector<std::uint64_t> seeds{1};
  double c = 0.5;
  double delta = 0.1;
  double rank_tol = 1e-7;
  bool audits = true;
  long audit_stride = 50;
  long checkpoint_episode = 0;
  bool emit_rho_regret = true;
  std::string out_dir = "runs";
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string config_to_json_string(const ExperimentConfig& config);
ExperimentConfig config_from_json_string(const std::string& text);
// Parses and checks the config invariants: referenced files exist, seeds
// nonempty and distinct, episodes >= 1, delta in (0, 1). Throws ConfigError.
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& config, const std::string& path);

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitValidation = 2,
  kExitRuntime = 3,
};

struct GenerateOptions {
  std::string kind;           // tabular | cluster | rotated
  std::string preset;         // tabular: "m1"
  std::string instance_path;  // tabular source / rotated residual re-check
  std::string class_path;     // rotated source
  std::string rotation_path;  // rotated: optional explicit rotation matrices
  int states = 6;
  int actions = 2;
  int horizon = 3;
  int clusters = 3;
  double reward_margin = 0.3;
  int rotated_copies = 0;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

int cmd_generate(const GenerateOptions& options, std::ostream& out, std::ostream& err);

int cmd_validate(const std::string& instance_path, const std::string& class_path,
                 const std::string& out_dir, double rank_tol, std::ostream& out,
                 std::ostream& err);

struct RunOptions {
  std::string config_path;
  std::string out_dir_override;
  int jobs = 1;
  std::optional<std::uint64_t> seed_override;
  std::string resume_path;
};

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err);

struct ReportOptions {
  std::vector<std::string> run_dirs;
  std::string out_svg = "report.svg";
  bool log_x = false;
};

int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err);

// Joins relative paths under $RELEX_OUT_ROOT when that variable is set.
std::string resolve_out_path(const std::string& path);

// Two-state fixture: staying in s0 pays 1, switching leads to an absorbing
// zero-reward state; the gap table has gap_min = 1.
MdpSpec make_m1();

}  // namespace relex
